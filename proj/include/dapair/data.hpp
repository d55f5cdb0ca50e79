#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dapair/rng.hpp"
#include "dapair/tensor.hpp"

namespace dapair {

struct LabeledSet {
  Tensor features;          // N×2
  std::vector<int> labels;  // class index per row

  std::size_t size() const noexcept { return labels.size(); }
};

enum class Axis { x = 0, y = 1 };

struct Stretch {
  Axis axis = Axis::y;
  double factor = 1.0;
};

struct Rotate {
  double degrees = 0.0;  // counter-clockwise positive
};

using ShiftStep = std::variant<Stretch, Rotate>;

/// Ordered affine covariate shift, applied first to last.
struct ShiftSpec {
  std::vector<ShiftStep> steps;

  /// stretch(y, 1.5) followed by rotate(-45).
  static ShiftSpec two_moons_default();
  /// Parses the text form produced by to_string, e.g. "stretch(y,1.5);rotate(-45)".
  /// The empty string is the identity shift.
  static ShiftSpec parse(std::string_view text);
  std::string to_string() const;
  void validate() const;
};

/// Per-feature affine map fitted by minmax_normalize.
struct MinMaxParams {
  std::vector<double> mins;
  std::vector<double> maxs;

  Tensor apply(const Tensor& x) const;
};

struct DataSpec {
  std::size_t n_train = 10000;
  std::size_t n_pairs = 10000;
  std::size_t n_val = 2000;
  double noise_sigma = 0.1;
  ShiftSpec shift = ShiftSpec::two_moons_default();
};

/// Everything a run trains and evaluates on. All members are immutable after
/// construction and may be shared across concurrent runs.
struct DomainDataset {
  LabeledSet source_train;
  Tensor pair_pool_source;  // P×2, unlabeled
  Tensor pair_pool_target;  // row i is shift(pair_pool_source row i)
  LabeledSet source_val;
  LabeledSet target_val;
  MinMaxParams normalization;
  ShiftSpec shift;
};

/// ceil(n/2) points on the upper arc (label 0), floor(n/2) on the lower arc
/// (label 1), arc parameter evenly spaced over [0, pi], then N(0, sigma²) noise.
LabeledSet make_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed);

/// Maps each feature's [min, max] onto [-0.5, 0.5].
std::pair<Tensor, MinMaxParams> minmax_normalize(const Tensor& x);

Tensor apply_shift(const Tensor& x, const ShiftSpec& spec);

/// Source train, pair pool and both validation sets are drawn from independent
/// sub-seeds of `seed`. Normalization is fitted on the source training features
/// and applied everywhere before shifting.
DomainDataset build_domain_datasets(const DataSpec& spec, std::uint64_t seed);

enum class BatchKind { classification, paired, unpaired_source, unpaired_target };

struct Batch {
  Tensor features;  // classification/unpaired: the sampled rows; paired: source half
  Tensor partner;   // paired: target half, index-aligned with features
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

/// Draws batches from a DomainDataset.
///
/// Classification batches walk a fresh permutation of the labeled training set
/// each epoch (without replacement; the last batch of an epoch may be short).
/// DA batches hold `size` distinct rows and are redrawn independently every call.
class BatchSampler {
 public:
  BatchSampler(const DomainDataset& data, std::uint64_t batching_seed, std::uint64_t da_seed);

  /// Reshuffles the classification order; called at the start of every epoch.
  void begin_epoch();
  /// Number of classification batches in one epoch, ceil(N / size).
  std::size_t batches_per_epoch(std::size_t size) const;

  Batch sample(BatchKind kind, std::size_t size);

 private:
  Batch next_classification(std::size_t size);
  std::vector<std::size_t> draw_distinct(std::vector<std::size_t>& pool, std::size_t size);

  const DomainDataset* data_;
  Rng batching_;
  Rng da_;
  std::vector<std::size_t> epoch_order_;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> pair_indices_;
  std::vector<std::size_t> source_indices_;
  std::vector<std::size_t> target_indices_;
};

/// Row gather helper shared by the sampler and MixUp.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);

// CSV export/import, header `x0,x1[,label]`.
void write_csv(const std::filesystem::path& path, const Tensor& features,
               const std::vector<int>* labels = nullptr);
LabeledSet read_csv(const std::filesystem::path& path);
/// Writes source_train.csv, pair_source.csv, pair_target.csv, source_val.csv and
/// target_val.csv into `dir`.
void export_dataset(const DomainDataset& data, const std::filesystem::path& dir);
/// Reads the files written by export_dataset. Normalization parameters are not
/// stored; the returned dataset carries an empty MinMaxParams.
DomainDataset import_dataset(const std::filesystem::path& dir);

}  // namespace dapair
