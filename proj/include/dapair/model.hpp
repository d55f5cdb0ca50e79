#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dapair/data.hpp"
#include "dapair/tensor.hpp"

namespace dapair {

enum class Activation { relu, sigmoid, softmax, identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct MlpSpec {
  std::vector<std::size_t> sizes;        // input, hidden..., output
  std::vector<Activation> activations;  // one per weight layer
  std::uint64_t seed = 0;

  /// 2 → hidden... → 1 with ReLU hidden layers and a sigmoid output.
  static MlpSpec binary_classifier(std::vector<std::size_t> hidden, std::uint64_t seed);
  void validate() const;
};

struct Layer {
  Tensor weight;  // in×out
  Tensor bias;    // 1×out
  Activation activation = Activation::identity;
};

/// Which activation a DA loss reads: layer index and whether to take the
/// pre-activation (affine output) instead of the post-activation.
struct TapId {
  std::size_t layer = 0;
  bool pre_activation = false;

  friend bool operator==(const TapId&, const TapId&) = default;
};

/// Frozen copy of all parameters; restoring one is bit-exact.
struct ModelSnapshot {
  std::vector<Shape> weight_shapes;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<Activation> activations;

  friend bool operator==(const ModelSnapshot&, const ModelSnapshot&) = default;
};

void to_json(nlohmann::json& j, const ModelSnapshot& s);
void from_json(const nlohmann::json& j, ModelSnapshot& s);

/// Multi-layer perceptron. Copying deep-copies the parameters.
///
/// Taps: "hidden_k" is the post-activation of the k-th hidden layer (0-based),
/// "output" the final post-activation; a "_pre" suffix selects the affine value
/// before the activation ("output_pre", "hidden_0_pre").
class MlpModel {
 public:
  explicit MlpModel(std::vector<Layer> layers);
  explicit MlpModel(const ModelSnapshot& snapshot);
  MlpModel(const MlpModel& other);
  MlpModel& operator=(const MlpModel& other);
  MlpModel(MlpModel&&) noexcept = default;
  MlpModel& operator=(MlpModel&&) noexcept = default;

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t input_size() const { return layers_.front().weight.rows(); }
  std::size_t output_size() const { return layers_.back().weight.cols(); }
  std::size_t parameter_count() const;

  /// Handles to the parameter leaves in layer order: w0, b0, w1, b1, ...
  std::vector<Tensor> parameters() const;
  void zero_grad();

  TapId tap(std::string_view name) const;
  std::vector<std::string> tap_names() const;

  ModelSnapshot snapshot() const;
  /// Overwrites parameter values in place; shapes must match.
  void restore(const ModelSnapshot& snapshot);

  void save(const std::filesystem::path& path) const;
  static MlpModel load(const std::filesystem::path& path);

 private:
  std::vector<Layer> layers_;
};

/// Weights i.i.d. N(0, 2/fan_in) (He normal), biases zero.
MlpModel init_mlp(const MlpSpec& spec);

struct ForwardPass {
  std::vector<Tensor> pre;   // affine outputs per layer
  std::vector<Tensor> post;  // activations per layer

  const Tensor& output() const { return post.back(); }
  const Tensor& at(TapId tap) const { return tap.pre_activation ? pre.at(tap.layer) : post.at(tap.layer); }
};

ForwardPass forward(const MlpModel& model, const Tensor& x, Tape& tape);

/// Class predictions: threshold at 0.5 (ties go to class 1) for a single output
/// column, argmax for several.
std::vector<int> predict(const MlpModel& model, const Tensor& x);

double accuracy(const MlpModel& model, const LabeledSet& set);

}  // namespace dapair
