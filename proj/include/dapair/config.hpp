#pragma once

// Flat text configuration:
//
//   # comment
//   seed = 3
//   da.method = mse
//   grid.lambdas = 0.1, 1, 5, 10
//
// One `key = value` per line. Keys come from config_keys(); anything else is an
// error. File values are applied first, then overrides, then the result is
// validated. All problems are reported together in one ConfigError.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dapair/trainer.hpp"

namespace dapair {

struct GridSpec {
  std::vector<double> lambdas{0.1, 1.0, 5.0, 10.0};
  std::vector<std::size_t> ns{8, 32, 128, 256};
  std::size_t seeds_per_cell = 1;
};

struct Config {
  TrainConfig train;
  GridSpec grid;
};

struct KeyInfo {
  std::string name;
  std::string type;  // uint, float, bool, string, floats, uints
  std::string help;
};

/// Every accepted key, in documentation order.
const std::vector<KeyInfo>& config_keys();

using Override = std::pair<std::string, std::string>;

/// Applies `text` (file contents) and then `overrides` on top of the defaults.
/// `origin` names the source in error messages.
Config parse_config(const std::string& text, const std::vector<Override>& overrides = {},
                    const std::string& origin = "<config>");

/// Reads `path` when given (a missing file is a ConfigError naming the path) and
/// delegates to parse_config.
Config load_config(const std::optional<std::filesystem::path>& path, const std::vector<Override>& overrides = {});

/// Fully resolved config in the same flat form; parse_config(render_config(c)) == c.
std::string render_config(const Config& config);

/// Current value of one key, rendered as it would appear in a file.
std::string config_value(const Config& config, const std::string& key);

}  // namespace dapair
