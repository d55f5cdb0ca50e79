#include "dapair/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dapair/kernels.hpp"

namespace dapair {

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  - " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

TrainingDiverged::TrainingDiverged(std::size_t epoch, std::size_t step, const std::string& what)
    : std::runtime_error(fmt::format("training diverged at epoch {} step {}: {}", epoch, step, what)),
      epoch_(epoch),
      step_(step) {}

std::string Shape::to_string() const { return fmt::format("[{}x{}]", rows, cols); }

std::span<double> detail::TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
  return grad;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
  if (values.size() != shape.size()) {
    throw DimensionError(fmt::format("tensor of shape {} given {} values", shape.to_string(),
                                     values.size()));
  }
  node_->shape = shape;
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape.size(), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
  return Tensor(shape, std::vector<double>(shape.size(), value));
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values));
}

Tensor Tensor::column(std::initializer_list<double> values) {
  return Tensor({values.size(), 1}, std::vector<double>(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(shape, std::move(values), true);
}

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw ContractError("only leaf tensors can be modified in place");
  return node_->values;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape().to_string());
  return node_->values[0];
}

void Tensor::zero_grad() {
  if (node_->grad.empty()) {
    node_->grad.assign(size(), 0.0);
  } else {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

Tensor Tensor::clone() const { return Tensor(shape(), node_->values, requires_grad()); }

Tensor Tensor::detach() const { return Tensor(shape(), node_->values, false); }

// ---------------------------------------------------------------------------
// Tape

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape().to_string(),
                                     b.shape().to_string()));
  }
}

}  // namespace

bool Tape::wants_grad(std::initializer_list<const Tensor*> inputs) const {
  if (mode_ == GradMode::inference) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

Tensor Tape::emit(Shape shape, std::vector<double> values, std::vector<NodePtr> inputs,
                  BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->values = std::move(values);
  node->tape = this;
  if (backward) {
    node->requires_grad = true;
    records_.push_back(Record{std::move(inputs), node, std::move(backward)});
  }
  return Tensor(std::move(node));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError(fmt::format("matmul: inner dimensions disagree, {} · {}",
                                     a.shape().to_string(), b.shape().to_string()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  kernels::omp::matmul(a.values(), b.values(), out, m, k, n);
  BackwardFn bw;
  if (wants_grad({&a, &b})) {
    bw = [an = node_of(a), bn = node_of(b), m, k, n](std::span<const double> g) {
      if (an->requires_grad) kernels::omp::matmul_a_bt(g, bn->values, an->ensure_grad(), m, n, k);
      if (bn->requires_grad) kernels::omp::matmul_at_b(an->values, g, bn->ensure_grad(), m, k, n);
    };
  }
  return emit({m, n}, std::move(out), {node_of(a), node_of(b)}, std::move(bw));
}

Tensor Tape::add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError(fmt::format("add_bias: bias {} does not match rows of {}",
                                     bias.shape().to_string(), x.shape().to_string()));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto b = bias.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b[c];
  BackwardFn bw;
  if (wants_grad({&x, &bias})) {
    bw = [xn = node_of(x), bn = node_of(bias), rows, cols](std::span<const double> g) {
      if (xn->requires_grad) {
        auto gx = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bn->requires_grad) {
        auto gb = bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    };
  }
  return emit(x.shape(), std::move(out), {node_of(x), node_of(bias)}, std::move(bw));
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  BackwardFn bw;
  if (wants_grad({&a, &b})) {
    bw = [an = node_of(a), bn = node_of(b)](std::span<const double> g) {
      for (const auto& n : {an, bn}) {
        if (!n->requires_grad) continue;
        auto gn = n->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gn[i] += g[i];
      }
    };
  }
  return emit(a.shape(), std::move(out), {node_of(a), node_of(b)}, std::move(bw));
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  BackwardFn bw;
  if (wants_grad({&a, &b})) {
    bw = [an = node_of(a), bn = node_of(b)](std::span<const double> g) {
      if (an->requires_grad) {
        auto ga = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        auto gb = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  }
  return emit(a.shape(), std::move(out), {node_of(a), node_of(b)}, std::move(bw));
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  BackwardFn bw;
  if (wants_grad({&a, &b})) {
    bw = [an = node_of(a), bn = node_of(b)](std::span<const double> g) {
      if (an->requires_grad) {
        auto ga = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->values[i];
      }
      if (bn->requires_grad) {
        auto gb = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->values[i];
      }
    };
  }
  return emit(a.shape(), std::move(out), {node_of(a), node_of(b)}, std::move(bw));
}

Tensor Tape::scale(const Tensor& x, double factor) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * factor;
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x), factor](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    };
  }
  return emit(x.shape(), std::move(out), {node_of(x)}, std::move(bw));
}

Tensor Tape::add_scalar(const Tensor& x, double offset) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] + offset;
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x)](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  }
  return emit(x.shape(), std::move(out), {node_of(x)}, std::move(bw));
}

Tensor Tape::square(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * x.values()[i];
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x)](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xn->values[i] * g[i];
    };
  }
  return emit(x.shape(), std::move(out), {node_of(x)}, std::move(bw));
}

Tensor Tape::exp(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.values()[i]);
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x), y = out](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
    };
  }
  return emit(x.shape(), std::move(out), {node_of(x)}, std::move(bw));
}

Tensor Tape::log(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.values()[i];
    if (!(v > 0.0)) throw DomainError(fmt::format("log of non-positive value {}", v));
    out[i] = std::log(v);
  }
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x)](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xn->values[i];
    };
  }
  return emit(x.shape(), std::move(out), {node_of(x)}, std::move(bw));
}

Tensor Tape::clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lower bound exceeds upper bound");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x.values()[i], lo, hi);
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x), lo, hi](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xn->values[i];
        if (v >= lo && v <= hi) gx[i] += g[i];
      }
    };
  }
  return emit(x.shape(), std::move(out), {node_of(x)}, std::move(bw));
}

Tensor Tape::relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x)](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xn->values[i] > 0.0) gx[i] += g[i];
    };
  }
  return emit(x.shape(), std::move(out), {node_of(x)}, std::move(bw));
}

namespace {

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor Tape::sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(x.values()[i]);
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x), s = out](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s[i] * (1.0 - s[i]);
    };
  }
  return emit(x.shape(), std::move(out), {node_of(x)}, std::move(bw));
}

Tensor Tape::softmax_rows(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (cols == 0) throw DomainError("softmax over zero columns");
  std::vector<double> out(x.size());
  const auto v = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * cols;
    double* o = out.data() + r * cols;
    const double peak = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - peak));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x), s = out, rows, cols](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * s[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          gx[r * cols + c] += s[r * cols + c] * (g[r * cols + c] - dot);
      }
    };
  }
  return emit(x.shape(), std::move(out), {node_of(x)}, std::move(bw));
}

Tensor Tape::reduce_sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x)](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      for (double& v : gx) v += g[0];
    };
  }
  return emit({1, 1}, {total}, {node_of(x)}, std::move(bw));
}

Tensor Tape::reduce_mean(const Tensor& x) {
  if (x.empty()) throw DomainError("reduce_mean of an empty tensor");
  const double count = static_cast<double>(x.size());
  double total = 0.0;
  for (double v : x.values()) total += v;
  BackwardFn bw;
  if (wants_grad({&x})) {
    bw = [xn = node_of(x), count](std::span<const double> g) {
      auto gx = xn->ensure_grad();
      const double share = g[0] / count;
      for (double& v : gx) v += share;
    };
  }
  return emit({1, 1}, {total / count}, {node_of(x)}, std::move(bw));
}

Tensor Tape::rbf_mmd(const Tensor& source, const Tensor& target, std::span<const double> sigmas,
                     std::span<const double> weights) {
  if (source.rows() == 0 || target.rows() == 0) throw DomainError("rbf_mmd: empty batch");
  if (source.cols() != target.cols()) {
    throw DimensionError(fmt::format("rbf_mmd: feature width differs, {} vs {}",
                                     source.shape().to_string(), target.shape().to_string()));
  }
  auto eval = kernels::omp::rbf_mmd(source.values(), source.rows(), target.values(), target.rows(),
                                    source.cols(), {sigmas, weights});
  BackwardFn bw;
  if (wants_grad({&source, &target})) {
    bw = [sn = node_of(source), tn = node_of(target), gs = std::move(eval.grad_source),
          gt = std::move(eval.grad_target)](std::span<const double> g) {
      if (sn->requires_grad) {
        auto out = sn->ensure_grad();
        for (std::size_t i = 0; i < gs.size(); ++i) out[i] += g[0] * gs[i];
      }
      if (tn->requires_grad) {
        auto out = tn->ensure_grad();
        for (std::size_t i = 0; i < gt.size(); ++i) out[i] += g[0] * gt[i];
      }
    };
  }
  return emit({1, 1}, {eval.value}, {node_of(source), node_of(target)}, std::move(bw));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + loss.shape().to_string());
  }
  if (loss.tape() != this) throw ContractError("backward: loss was not produced by this tape");
  if (swept_) throw ContractError("backward: tape has already been swept");
  swept_ = true;

  for (const auto& rec : records_)
    for (const auto& in : rec.inputs)
      if (in->requires_grad && in->tape == nullptr) in->ensure_grad();
  if (!loss.requires_grad()) return;

  const auto& root = node_of(loss);
  root->ensure_grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->backward(it->output->grad);
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

double check_gradients(const std::function<Tensor(Tape&)>& f, std::span<const Tensor> leaves, double eps) {
  if (!(eps > 0.0)) throw DomainError("check_gradients: eps must be positive");
  std::vector<Tensor> xs(leaves.begin(), leaves.end());
  for (auto& x : xs) {
    if (!x.is_leaf() || !x.requires_grad()) throw ContractError("check_gradients: inputs must be grad-requiring leaves");
    x.clear_grad();
  }
  {
    Tape tape;
    tape.backward(f(tape));
  }
  std::vector<std::vector<double>> analytic;
  for (auto& x : xs) {
    analytic.emplace_back(x.size(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.back().begin());
    x.clear_grad();
  }
  auto evaluate = [&] {
    Tape tape(GradMode::inference);
    return f(tape).item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    auto values = xs[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate();
      values[i] = saved - eps;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

double check_gradients(const ScalarFn& f, const Tensor& x, double eps) {
  const Tensor leaf(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  return check_gradients([&](Tape& tape) { return f(tape, leaf); }, std::span<const Tensor>(&leaf, 1), eps);
}

}  // namespace dapair
