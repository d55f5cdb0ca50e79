#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dapair/rng.hpp"
#include "dapair/tensor.hpp"

namespace dapair {

/// Mixture of RBF kernels k(a, b) = exp(-|a - b|² / (2σ²)), combined as a
/// weighted sum (not a mean).
struct MmdConfig {
  std::vector<double> sigmas{0.2, 0.5, 0.9, 1.3};
  std::vector<double> weights{1.0, 1.0, 1.0, 1.0};

  void validate() const;
};

enum class DaMethod { none, mse, mmd };

std::string to_string(DaMethod m);
DaMethod parse_da_method(std::string_view name);

struct DaConfig {
  DaMethod method = DaMethod::none;
  double lambda = 1.0;
  std::size_t batch_size = 32;  // n
  std::string tap = "output";
  MmdConfig mmd;
};

struct MixupConfig {
  bool enabled = false;
  double alpha = 0.2;
  double beta = 0.2;
};

/// Log clamp for the cross-entropies.
inline constexpr double kLogEpsilon = 1e-12;

/// -mean(y log p + (1 - y) log(1 - p)) with p clamped to [ε, 1 - ε]. Targets may
/// be soft (MixUp); shapes must agree.
Tensor bce_loss(Tape& tape, const Tensor& pred, const Tensor& target);
Tensor bce_loss(Tape& tape, const Tensor& pred, std::span<const int> labels);

/// -mean over rows of Σ_c target·log(pred). Rows of both arguments must sum to
/// one within 1e-6.
Tensor cce_loss(Tape& tape, const Tensor& pred, const Tensor& target);

/// Mean of the n·d squared differences between index-aligned activation rows.
Tensor paired_mse(Tape& tape, const Tensor& source, const Tensor& target);

/// Biased (V-statistic) multi-kernel MMD² between two batches of activations.
Tensor mmd_squared(Tape& tape, const Tensor& source, const Tensor& target, const MmdConfig& cfg);

/// l_cl + lambda · l_da.
Tensor combined_loss(Tape& tape, const Tensor& l_cl, const Tensor& l_da, double lambda);

struct MixedBatch {
  Tensor features;
  Tensor targets;
};

/// Convex combination a·(x1, y1) + (1 - a)·(x2, y2) with one coefficient for
/// features and labels. Operates on data, not on the tape.
MixedBatch mixup(const Tensor& x1, const Tensor& y1, const Tensor& x2, const Tensor& y2, double a);

/// Labels as a B×1 column of 0/1 values, or one-hot rows when classes > 1.
Tensor encode_labels(std::span<const int> labels, std::size_t classes = 1);

}  // namespace dapair
