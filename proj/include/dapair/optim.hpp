#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dapair/model.hpp"
#include "dapair/tensor.hpp"

namespace dapair {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  /// Zero moments shaped like `params`.
  static AdamState for_parameters(std::span<const Tensor> params, AdamOptions options);
  void reset_moments();
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Parameters without a gradient are treated as having g = 0.
/// Throws TrainingDiverged (epoch/step 0) on a non-finite gradient, before
/// touching any parameter.
void adam_step(std::span<Tensor> params, AdamState& state);

struct PlateauOptions {
  double factor = 0.5;
  std::size_t patience = 10;
};

/// Reduce-on-plateau with reset to the best checkpoint. The monitored metric is
/// maximized; only a strictly greater value counts as an improvement.
class PlateauScheduler {
 public:
  struct Outcome {
    double lr;
    bool improved = false;
    bool decayed = false;  // lr was multiplied by factor and the model restored
  };

  explicit PlateauScheduler(PlateauOptions options = {});

  /// Feeds one epoch's metric. On improvement the model is checkpointed; after
  /// `patience` consecutive non-improvements the learning rate is decayed, the
  /// model is restored to the checkpoint and the counter starts over.
  Outcome update(double metric, MlpModel& model, double lr);

  const PlateauOptions& options() const noexcept { return options_; }
  std::optional<double> best() const noexcept { return best_; }
  std::size_t best_index() const noexcept { return best_index_; }
  std::size_t bad_epochs() const noexcept { return bad_epochs_; }
  const std::vector<double>& history() const noexcept { return history_; }
  const std::optional<ModelSnapshot>& checkpoint() const noexcept { return checkpoint_; }

 private:
  PlateauOptions options_;
  std::vector<double> history_;
  std::optional<double> best_;
  std::size_t best_index_ = 0;
  std::size_t bad_epochs_ = 0;
  std::optional<ModelSnapshot> checkpoint_;
};

}  // namespace dapair
