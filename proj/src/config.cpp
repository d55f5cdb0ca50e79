#include "dapair/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace dapair {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_uint(std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size()) {
    throw std::invalid_argument(fmt::format("expected a non-negative integer, got '{}'", s));
  }
  return v;
}

double parse_float(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument(fmt::format("expected a finite number, got '{}'", s));
  }
  return v;
}

bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument(fmt::format("expected true or false, got '{}'", s));
}

template <class T, class F>
std::vector<T> parse_list(std::string_view s, F parse_one) {
  std::vector<T> out;
  s = trim(s);
  if (s.empty()) throw std::invalid_argument("expected a comma-separated list, got nothing");
  while (true) {
    const auto comma = s.find(',');
    out.push_back(static_cast<T>(parse_one(s.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

std::string show(double v) { return fmt::format("{}", v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::vector<double>& v) { return fmt::format("{}", fmt::join(v, ",")); }
std::string show(const std::vector<std::size_t>& v) { return fmt::format("{}", fmt::join(v, ",")); }

struct Entry {
  KeyInfo info;
  std::function<void(Config&, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

#define DAPAIR_UINT(key, field, help)                                                              \
  Entry {                                                                                           \
    {key, "uint", help}, [](Config& c, std::string_view v) { c.field = parse_uint(v); },           \
        [](const Config& c) { return std::to_string(c.field); }                                     \
  }
#define DAPAIR_FLOAT(key, field, help)                                                             \
  Entry {                                                                                           \
    {key, "float", help}, [](Config& c, std::string_view v) { c.field = parse_float(v); },         \
        [](const Config& c) { return show(c.field); }                                               \
  }
#define DAPAIR_BOOL(key, field, help)                                                              \
  Entry {                                                                                           \
    {key, "bool", help}, [](Config& c, std::string_view v) { c.field = parse_bool(v); },           \
        [](const Config& c) { return show(c.field); }                                               \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      DAPAIR_UINT("seed", train.seed, "master seed; data, init, batching, DA and mixup streams derive from it"),
      DAPAIR_UINT("data.n_train", train.data.n_train, "labeled source training samples"),
      DAPAIR_UINT("data.n_pairs", train.data.n_pairs, "size of the paired source/target pool used by DA"),
      DAPAIR_UINT("data.n_val", train.data.n_val, "validation samples per domain"),
      DAPAIR_FLOAT("data.noise", train.data.noise_sigma, "Gaussian noise sigma added to the two moons"),
      Entry{{"data.shift", "string", "target shift, steps applied left to right, e.g. stretch(y,1.5);rotate(-45)"},
            [](Config& c, std::string_view v) { c.train.data.shift = ShiftSpec::parse(trim(v)); },
            [](const Config& c) { return c.train.data.shift.to_string(); }},
      Entry{{"model.hidden", "uints", "hidden layer widths (ReLU); output is one sigmoid unit"},
            [](Config& c, std::string_view v) {
              c.train.hidden = parse_list<std::size_t>(v, parse_uint);
            },
            [](const Config& c) { return show(c.train.hidden); }},
      Entry{{"da.method", "string", "domain adaptation loss: none, mse or mmd"},
            [](Config& c, std::string_view v) { c.train.da.method = parse_da_method(trim(v)); },
            [](const Config& c) { return to_string(c.train.da.method); }},
      DAPAIR_FLOAT("da.lambda", train.da.lambda, "weight of the DA loss"),
      DAPAIR_UINT("da.batch_size", train.da.batch_size, "DA batch size n (pairs for mse, samples per domain for mmd)"),
      Entry{{"da.tap", "string", "activation the DA loss reads: output, output_pre, hidden_K, hidden_K_pre"},
            [](Config& c, std::string_view v) { c.train.da.tap = std::string(trim(v)); },
            [](const Config& c) { return c.train.da.tap; }},
      Entry{{"da.mmd_sigmas", "floats", "RBF bandwidths of the MMD kernel mixture"},
            [](Config& c, std::string_view v) { c.train.da.mmd.sigmas = parse_list<double>(v, parse_float); },
            [](const Config& c) { return show(c.train.da.mmd.sigmas); }},
      Entry{{"da.mmd_weights", "floats", "weights of the MMD kernels (summed, not averaged)"},
            [](Config& c, std::string_view v) { c.train.da.mmd.weights = parse_list<double>(v, parse_float); },
            [](const Config& c) { return show(c.train.da.mmd.weights); }},
      DAPAIR_BOOL("mixup.enabled", train.mixup.enabled, "mix training batches with Beta-distributed coefficients"),
      DAPAIR_FLOAT("mixup.alpha", train.mixup.alpha, "first Beta parameter"),
      DAPAIR_FLOAT("mixup.beta", train.mixup.beta, "second Beta parameter"),
      DAPAIR_FLOAT("optim.lr", train.optim.adam.lr, "Adam learning rate"),
      DAPAIR_FLOAT("optim.beta1", train.optim.adam.beta1, "Adam first-moment decay"),
      DAPAIR_FLOAT("optim.beta2", train.optim.adam.beta2, "Adam second-moment decay"),
      DAPAIR_FLOAT("optim.eps", train.optim.adam.eps, "Adam denominator epsilon"),
      Entry{{"optim.scheduler", "string", "learning-rate schedule: constant or plateau"},
            [](Config& c, std::string_view v) {
              v = trim(v);
              if (v == "constant") c.train.optim.scheduler = SchedulerKind::constant;
              else if (v == "plateau") c.train.optim.scheduler = SchedulerKind::plateau;
              else throw std::invalid_argument(fmt::format("expected constant or plateau, got '{}'", v));
            },
            [](const Config& c) { return to_string(c.train.optim.scheduler); }},
      DAPAIR_FLOAT("optim.plateau_factor", train.optim.plateau.factor, "lr multiplier applied on a plateau"),
      DAPAIR_UINT("optim.plateau_patience", train.optim.plateau.patience,
                  "evaluations without improvement before the lr is cut"),
      DAPAIR_BOOL("optim.reset_moments_on_restore", train.optim.reset_moments_on_restore,
                  "clear Adam moments when the plateau scheduler restores the best model"),
      DAPAIR_UINT("train.epochs", train.epochs, "passes over the labeled source set"),
      DAPAIR_UINT("train.batch_size", train.batch_size, "classification batch size"),
      DAPAIR_UINT("train.eval_every", train.eval_every, "epochs between validation passes"),
      Entry{{"train.monitor", "string", "metric for best-model selection and the scheduler: target or source"},
            [](Config& c, std::string_view v) {
              v = trim(v);
              if (v == "target") c.train.monitor = Monitor::target;
              else if (v == "source") c.train.monitor = Monitor::source;
              else throw std::invalid_argument(fmt::format("expected target or source, got '{}'", v));
            },
            [](const Config& c) { return to_string(c.train.monitor); }},
      DAPAIR_BOOL("train.debug_checks", train.debug_checks, "verify the pairing invariant on every DA batch"),
      Entry{{"grid.lambdas", "floats", "lambda axis of the grid (columns)"},
            [](Config& c, std::string_view v) { c.grid.lambdas = parse_list<double>(v, parse_float); },
            [](const Config& c) { return show(c.grid.lambdas); }},
      Entry{{"grid.ns", "uints", "DA batch size axis of the grid (rows)"},
            [](Config& c, std::string_view v) { c.grid.ns = parse_list<std::size_t>(v, parse_uint); },
            [](const Config& c) { return show(c.grid.ns); }},
      DAPAIR_UINT("grid.seeds_per_cell", grid.seeds_per_cell, "seeds per grid cell; the cell reports their median"),
  };
  return table;
}

#undef DAPAIR_UINT
#undef DAPAIR_FLOAT
#undef DAPAIR_BOOL

const Entry* find_entry(std::string_view key) {
  for (const auto& e : entries())
    if (e.info.name == key) return &e;
  return nullptr;
}

void apply(Config& c, const std::string& key, std::string_view value, const std::string& where,
           std::vector<std::string>& problems) {
  const Entry* e = find_entry(key);
  if (!e) {
    problems.push_back(fmt::format("{}: unknown key '{}'", where, key));
    return;
  }
  try {
    e->set(c, value);
  } catch (const std::exception& ex) {
    problems.push_back(fmt::format("{}: {}: {}", where, key, ex.what()));
  }
}

void validate_grid(const Config& c, std::vector<std::string>& problems) {
  const auto& g = c.grid;
  for (double l : g.lambdas)
    if (l < 0.0) problems.push_back(fmt::format("grid.lambdas must be >= 0, got {}", l));
  for (std::size_t n : g.ns) {
    if (n == 0) problems.emplace_back("grid.ns entries must be >= 1 (n >= 1)");
  }
  if (g.seeds_per_cell == 0) problems.emplace_back("grid.seeds_per_cell must be >= 1");
}

}  // namespace

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = [] {
    std::vector<KeyInfo> out;
    for (const auto& e : entries()) out.push_back(e.info);
    return out;
  }();
  return keys;
}

Config parse_config(const std::string& text, const std::vector<Override>& overrides, const std::string& origin) {
  Config c;
  std::vector<std::string> problems;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = fmt::format("{}:{}", origin, line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      problems.push_back(fmt::format("{}: expected 'key = value', got '{}'", where, line));
      continue;
    }
    const std::string key(trim(line.substr(0, eq)));
    if (!seen.insert(key).second) {
      problems.push_back(fmt::format("{}: duplicate key '{}'", where, key));
      continue;
    }
    apply(c, key, line.substr(eq + 1), where, problems);
  }
  for (const auto& [key, value] : overrides) apply(c, key, value, "override", problems);

  try {
    c.train.validate();
  } catch (const ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  validate_grid(c, problems);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

Config load_config(const std::optional<std::filesystem::path>& path, const std::vector<Override>& overrides) {
  std::string text;
  std::string origin = "<defaults>";
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError({fmt::format("cannot read config file '{}'", path->string())});
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
    origin = path->string();
  }
  return parse_config(text, overrides, origin);
}

std::string render_config(const Config& config) {
  std::string out;
  for (const auto& e : entries()) out += fmt::format("{} = {}\n", e.info.name, e.get(config));
  return out;
}

std::string config_value(const Config& config, const std::string& key) {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError({fmt::format("unknown key '{}'", key)});
  return e->get(config);
}

}  // namespace dapair
