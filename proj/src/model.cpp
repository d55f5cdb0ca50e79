#include "dapair/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

namespace dapair {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  for (Activation a : {Activation::relu, Activation::sigmoid, Activation::softmax, Activation::identity}) {
    if (to_string(a) == name) return a;
  }
  throw DomainError(fmt::format("unknown activation '{}'", name));
}

MlpSpec MlpSpec::binary_classifier(std::vector<std::size_t> hidden, std::uint64_t seed) {
  MlpSpec spec;
  spec.sizes.push_back(2);
  for (std::size_t h : hidden) {
    spec.sizes.push_back(h);
    spec.activations.push_back(Activation::relu);
  }
  spec.sizes.push_back(1);
  spec.activations.push_back(Activation::sigmoid);
  spec.seed = seed;
  return spec;
}

void MlpSpec::validate() const {
  if (sizes.size() < 2) throw DomainError("an MLP needs at least one layer");
  if (activations.size() != sizes.size() - 1) {
    throw DimensionError(fmt::format("{} layer sizes need {} activations, got {}", sizes.size(),
                                     sizes.size() - 1, activations.size()));
  }
  if (std::any_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s == 0; })) {
    throw DomainError("layer sizes must be positive");
  }
}

MlpModel init_mlp(const MlpSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, Stream::init);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < spec.sizes.size(); ++l) {
    const std::size_t fan_in = spec.sizes[l], fan_out = spec.sizes[l + 1];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = stddev * rng.normal();
    layers.push_back(Layer{Tensor::parameter({fan_in, fan_out}, std::move(w)),
                           Tensor::parameter({1, fan_out}, std::vector<double>(fan_out, 0.0)),
                           spec.activations[l]});
  }
  return MlpModel(std::move(layers));
}

// ---------------------------------------------------------------------------
// MlpModel

MlpModel::MlpModel(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw DomainError("an MLP needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
      throw DimensionError(fmt::format("layer {}: bias {} does not match weight {}", l,
                                       layer.bias.shape().to_string(), layer.weight.shape().to_string()));
    }
    if (l > 0 && layers_[l - 1].weight.cols() != layer.weight.rows()) {
      throw DimensionError(fmt::format("layer {} expects {} inputs but layer {} produces {}", l,
                                       layer.weight.rows(), l - 1, layers_[l - 1].weight.cols()));
    }
  }
}

MlpModel::MlpModel(const ModelSnapshot& s) : MlpModel([&] {
  if (s.weights.size() != s.weight_shapes.size() || s.biases.size() != s.weight_shapes.size() ||
      s.activations.size() != s.weight_shapes.size()) {
    throw DimensionError("inconsistent model snapshot");
  }
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < s.weight_shapes.size(); ++l) {
    const Shape ws = s.weight_shapes[l];
    layers.push_back(Layer{Tensor::parameter(ws, s.weights[l]), Tensor::parameter({1, ws.cols}, s.biases[l]),
                           s.activations[l]});
  }
  return layers;
}()) {}

MlpModel::MlpModel(const MlpModel& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(Layer{l.weight.clone(), l.bias.clone(), l.activation});
}

MlpModel& MlpModel::operator=(const MlpModel& other) {
  if (this != &other) {
    MlpModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<Tensor> MlpModel::parameters() const {
  std::vector<Tensor> params;
  for (const auto& l : layers_) {
    params.push_back(l.weight);
    params.push_back(l.bias);
  }
  return params;
}

void MlpModel::zero_grad() {
  for (auto& l : layers_) {
    l.weight.zero_grad();
    l.bias.zero_grad();
  }
}

TapId MlpModel::tap(std::string_view name) const {
  std::string_view base = name;
  bool pre = false;
  if (base.ends_with("_pre")) {
    base.remove_suffix(4);
    pre = true;
  }
  if (base == "output") return TapId{layers_.size() - 1, pre};
  if (base.starts_with("hidden_")) {
    const std::string_view digits = base.substr(7);
    std::size_t k = 0;
    bool ok = !digits.empty();
    for (char c : digits) {
      if (c < '0' || c > '9') ok = false;
      else k = k * 10 + static_cast<std::size_t>(c - '0');
    }
    if (ok && k + 1 < layers_.size()) return TapId{k, pre};
  }
  throw DomainError(fmt::format("unknown tap '{}'; available: {}", name, fmt::join(tap_names(), ", ")));
}

std::vector<std::string> MlpModel::tap_names() const {
  std::vector<std::string> names;
  for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
    names.push_back(fmt::format("hidden_{}", k));
    names.push_back(fmt::format("hidden_{}_pre", k));
  }
  names.emplace_back("output");
  names.emplace_back("output_pre");
  return names;
}

ModelSnapshot MlpModel::snapshot() const {
  ModelSnapshot s;
  for (const auto& l : layers_) {
    s.weight_shapes.push_back(l.weight.shape());
    s.weights.emplace_back(l.weight.values().begin(), l.weight.values().end());
    s.biases.emplace_back(l.bias.values().begin(), l.bias.values().end());
    s.activations.push_back(l.activation);
  }
  return s;
}

void MlpModel::restore(const ModelSnapshot& s) {
  if (s.weight_shapes.size() != layers_.size()) throw DimensionError("snapshot layer count differs");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    if (s.weight_shapes[l] != layer.weight.shape() || s.biases[l].size() != layer.bias.size()) {
      throw DimensionError(fmt::format("snapshot layer {} has shape {}, model has {}", l,
                                       s.weight_shapes[l].to_string(), layer.weight.shape().to_string()));
    }
    std::copy(s.weights[l].begin(), s.weights[l].end(), layer.weight.mutable_values().begin());
    std::copy(s.biases[l].begin(), s.biases[l].end(), layer.bias.mutable_values().begin());
    layer.activation = s.activations[l];
  }
}

void to_json(nlohmann::json& j, const ModelSnapshot& s) {
  j = nlohmann::json::object();
  auto& layers = j["layers"] = nlohmann::json::array();
  for (std::size_t l = 0; l < s.weight_shapes.size(); ++l) {
    layers.push_back({{"in", s.weight_shapes[l].rows},
                      {"out", s.weight_shapes[l].cols},
                      {"activation", std::string(to_string(s.activations[l]))},
                      {"weight", s.weights[l]},
                      {"bias", s.biases[l]}});
  }
}

void from_json(const nlohmann::json& j, ModelSnapshot& s) {
  s = ModelSnapshot{};
  for (const auto& layer : j.at("layers")) {
    const Shape shape{layer.at("in").get<std::size_t>(), layer.at("out").get<std::size_t>()};
    auto w = layer.at("weight").get<std::vector<double>>();
    auto b = layer.at("bias").get<std::vector<double>>();
    if (w.size() != shape.size() || b.size() != shape.cols) {
      throw DimensionError("checkpoint layer arrays do not match their declared shape");
    }
    s.weight_shapes.push_back(shape);
    s.weights.push_back(std::move(w));
    s.biases.push_back(std::move(b));
    s.activations.push_back(parse_activation(layer.at("activation").get<std::string>()));
  }
}

void MlpModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  out << nlohmann::json(snapshot()).dump(1) << '\n';
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

MlpModel MlpModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open model checkpoint '{}'", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(fmt::format("'{}' is not a valid checkpoint: {}", path.string(), e.what()));
  }
  return MlpModel(j.get<ModelSnapshot>());
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

Tensor activate(Tape& tape, const Tensor& z, Activation a) {
  switch (a) {
    case Activation::relu: return tape.relu(z);
    case Activation::sigmoid: return tape.sigmoid(z);
    case Activation::softmax: return tape.softmax_rows(z);
    case Activation::identity: return z;
  }
  return z;
}

}  // namespace

ForwardPass forward(const MlpModel& model, const Tensor& x, Tape& tape) {
  if (x.cols() != model.input_size()) {
    throw DimensionError(fmt::format("model expects {} input features, got {}", model.input_size(),
                                     x.shape().to_string()));
  }
  ForwardPass pass;
  const Tensor* h = &x;
  for (const auto& layer : model.layers()) {
    pass.pre.push_back(tape.add_bias(tape.matmul(*h, layer.weight), layer.bias));
    pass.post.push_back(activate(tape, pass.pre.back(), layer.activation));
    h = &pass.post.back();
  }
  return pass;
}

std::vector<int> predict(const MlpModel& model, const Tensor& x) {
  Tape tape(GradMode::inference);
  const Tensor out = forward(model, x, tape).output();
  std::vector<int> classes(out.rows());
  const std::size_t cols = out.cols();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    if (cols == 1) {
      classes[r] = out(r, 0) >= 0.5 ? 1 : 0;
    } else {
      std::size_t best = 0;
      for (std::size_t c = 1; c < cols; ++c)
        if (out(r, c) > out(r, best)) best = c;
      classes[r] = static_cast<int>(best);
    }
  }
  return classes;
}

double accuracy(const MlpModel& model, const LabeledSet& set) {
  if (set.size() == 0) throw DomainError("accuracy of an empty set");
  const auto classes = predict(model, set.features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < classes.size(); ++i) hits += classes[i] == set.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

}  // namespace dapair
