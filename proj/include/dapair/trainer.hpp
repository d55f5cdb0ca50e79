#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dapair/data.hpp"
#include "dapair/model.hpp"
#include "dapair/objective.hpp"
#include "dapair/optim.hpp"

namespace dapair {

enum class SchedulerKind { constant, plateau };
enum class Monitor { target, source };

std::string to_string(SchedulerKind k);
std::string to_string(Monitor m);

struct OptimConfig {
  AdamOptions adam;
  SchedulerKind scheduler = SchedulerKind::constant;
  PlateauOptions plateau;
  bool reset_moments_on_restore = false;
};

/// Full description of one training run. The master seed is split into the
/// data, init, batching, DA and mixup streams (see Stream).
struct TrainConfig {
  std::uint64_t seed = 0;
  DataSpec data;
  std::vector<std::size_t> hidden{32};
  DaConfig da;
  MixupConfig mixup;
  OptimConfig optim;
  std::size_t epochs = 250;
  std::size_t batch_size = 32;
  std::size_t eval_every = 1;
  Monitor monitor = Monitor::target;
  /// Re-check the pairing invariant on every paired DA batch.
  bool debug_checks = false;

  /// Throws ConfigError listing every violated constraint.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double source_accuracy = 0.0;
  double target_accuracy = 0.0;
  double cl_loss = 0.0;     // mean over the epoch's steps
  double da_loss = 0.0;
  double total_loss = 0.0;
  double lr = 0.0;
  bool restored = false;    // plateau scheduler reset the model after this epoch
};

struct TrainResult {
  TrainConfig config;
  std::vector<EpochRecord> epochs;  // evaluated epochs only
  double best_target_accuracy = 0.0;
  std::size_t best_epoch = 0;
  double final_source_accuracy = 0.0;
  double final_target_accuracy = 0.0;
  ModelSnapshot final_model;
  ModelSnapshot best_model;  // parameters at best_epoch
  double seconds = 0.0;

  std::vector<double> target_trace() const;
  std::vector<double> source_trace() const;
};

/// Optional per-step hook, called after each optimizer step with
/// (epoch, step within epoch, model). Used by tests to observe trajectories.
using StepObserver = std::function<void(std::size_t, std::size_t, const MlpModel&)>;

/// Trains on a freshly built DomainDataset for cfg.
TrainResult train_run(const TrainConfig& cfg, const StepObserver& observer = {});
/// Trains on a caller-provided dataset (shared across runs of a grid).
TrainResult train_run(const TrainConfig& cfg, const DomainDataset& data, const StepObserver& observer = {});

struct GridCell {
  double lambda = 0.0;
  std::size_t n = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracies;   // best target accuracy per seed (NaN when aborted)
  std::vector<std::string> errors;  // empty string for successful seeds
  double median = 0.0;              // over successful seeds; NaN if none
};

struct GridReport {
  TrainConfig base;
  DaMethod method = DaMethod::mse;
  std::vector<double> lambdas;
  std::vector<std::size_t> ns;
  std::vector<std::uint64_t> seeds;
  /// accuracy[i][j] is the median best target accuracy for ns[i], lambdas[j].
  std::vector<std::vector<double>> accuracy;
  std::vector<GridCell> cells;  // row-major in (n, lambda)
  double baseline_accuracy = 0.0;
  std::vector<double> baseline_per_seed;
  double seconds = 0.0;

  const GridCell& cell(std::size_t n_index, std::size_t lambda_index) const;
  double min_accuracy() const;
  double max_accuracy() const;
};

/// Runs train_run over every (lambda, n) cell for seeds base.seed, base.seed+1, ...
/// plus one no-DA baseline per seed. Cells run on `jobs` worker threads (0 means
/// one per hardware thread); a failing cell is recorded and the rest continue.
GridReport grid_search(const TrainConfig& base, const std::vector<double>& lambdas,
                       const std::vector<std::size_t>& ns, std::size_t seeds_per_cell,
                       std::size_t jobs = 0);

struct Bounds {
  double x_min = -1.0, x_max = 1.0, y_min = -1.0, y_max = 1.0;
};

struct BoundaryPoint {
  double x, y, score;
};

/// Model score on a resolution×resolution lattice including all four corners.
/// For multi-column outputs the score is the class-1 probability.
std::vector<BoundaryPoint> export_boundary(const MlpModel& model, const Bounds& bounds, std::size_t resolution);
void write_boundary_csv(const std::filesystem::path& path, const std::vector<BoundaryPoint>& points);

// JSON (de)serialization. Doubles are written in shortest round-trip form, so
// a parsed document compares equal to the original.
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const TrainResult& r);
void from_json(const nlohmann::json& j, TrainResult& r);
void to_json(nlohmann::json& j, const GridReport& r);
void from_json(const nlohmann::json& j, GridReport& r);

bool operator==(const TrainConfig& a, const TrainConfig& b);
bool operator==(const TrainResult& a, const TrainResult& b);
bool operator==(const GridReport& a, const GridReport& b);

/// Writes result.json and grid.csv (rows = n, columns = lambda) into `dir`.
void write_report(const GridReport& report, const std::filesystem::path& dir);
/// Writes result.json and a 1×1 grid.csv into `dir`.
void write_report(const TrainResult& result, const std::filesystem::path& dir);
GridReport read_grid_report(const std::filesystem::path& result_json);
TrainResult read_train_result(const std::filesystem::path& result_json);

/// CSV accuracy matrix with header `n\lambda,<lambda>...` and one row per n.
std::string grid_csv(const GridReport& report);

}  // namespace dapair
