#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dapair/errors.hpp"

namespace dapair {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  constexpr std::size_t size() const noexcept { return rows * cols; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
  std::string to_string() const;
};

class Tape;

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a backward pass touches the node
  bool requires_grad = false;
  const Tape* tape = nullptr;  // producing tape; null for leaves

  std::span<double> ensure_grad();
};

}  // namespace detail

/// Dense row-major 2-D array of doubles. Copies share the underlying node, so a
/// Tensor behaves like a handle into the computation graph. Values are fixed
/// after construction except for leaves, which optimizers update in place.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor row(std::initializer_list<double> values);
  static Tensor column(std::initializer_list<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor parameter(Shape shape, std::vector<double> values);

  Shape shape() const noexcept { return node_->shape; }
  std::size_t rows() const noexcept { return node_->shape.rows; }
  std::size_t cols() const noexcept { return node_->shape.cols; }
  std::size_t size() const noexcept { return node_->shape.size(); }
  bool empty() const noexcept { return size() == 0; }

  std::span<const double> values() const noexcept { return node_->values; }
  /// Leaf tensors only; throws ContractError for tape outputs.
  std::span<double> mutable_values();
  double operator()(std::size_t r, std::size_t c) const { return node_->values[r * cols() + c]; }
  /// Value of a 1x1 tensor.
  double item() const;

  bool requires_grad() const noexcept { return node_->requires_grad; }
  bool has_grad() const noexcept { return !node_->grad.empty(); }
  /// Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const noexcept { return node_->grad; }
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  bool is_leaf() const noexcept { return node_->tape == nullptr; }
  const Tape* tape() const noexcept { return node_->tape; }
  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  /// Deep copy as a new leaf, preserving requires_grad.
  Tensor clone() const;
  /// Deep copy as a constant leaf.
  Tensor detach() const;

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

enum class GradMode { record, inference };

/// Define-by-run computation tape. Every operation is a member so that the tape an
/// operation lands on is always explicit. In inference mode nothing is recorded.
///
/// A tape lives for one forward/backward pass and must outlive the backward call;
/// tensors it produced remain readable afterwards.
class Tape {
 public:
  explicit Tape(GradMode mode = GradMode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  GradMode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return records_.size(); }

  Tensor matmul(const Tensor& a, const Tensor& b);
  /// x[B×n] + bias[1×n], bias broadcast over rows.
  Tensor add_bias(const Tensor& x, const Tensor& bias);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double factor);
  Tensor add_scalar(const Tensor& x, double offset);
  Tensor square(const Tensor& x);
  Tensor exp(const Tensor& x);
  /// Natural log; inputs must be strictly positive.
  Tensor log(const Tensor& x);
  /// Gradient passes only where lo <= x <= hi.
  Tensor clamp(const Tensor& x, double lo, double hi);
  /// max(0, x); the subgradient at exactly 0 is taken as 0.
  Tensor relu(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor softmax_rows(const Tensor& x);
  Tensor reduce_mean(const Tensor& x);
  Tensor reduce_sum(const Tensor& x);
  /// Biased multi-kernel RBF MMD² between the row sets of source and target,
  /// evaluated by the fused parallel kernel.
  Tensor rbf_mmd(const Tensor& source, const Tensor& target, std::span<const double> sigmas,
                 std::span<const double> weights);

  /// Reverse sweep from a 1x1 loss produced by this tape. Gradients accumulate
  /// into every grad-requiring tensor the tape touched; those not reachable from
  /// the loss end up with zero gradient. A tape can be swept only once.
  void backward(const Tensor& loss);

 private:
  using Node = detail::TensorNode;
  using NodePtr = std::shared_ptr<Node>;
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  struct Record {
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn backward;
  };

  static const NodePtr& node_of(const Tensor& t) { return t.node_; }
  Tensor emit(Shape shape, std::vector<double> values, std::vector<NodePtr> inputs,
              BackwardFn backward);
  bool wants_grad(std::initializer_list<const Tensor*> inputs) const;

  GradMode mode_;
  bool swept_ = false;
  std::vector<Record> records_;
};

/// Scalar function of one input, rebuilt on a fresh tape per evaluation.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

/// Compares the tape gradient of f at x with central differences of step eps.
/// Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
double check_gradients(const ScalarFn& f, const Tensor& x, double eps = 1e-6);

/// Same check over several leaves (typically model parameters). The leaves are
/// perturbed in place and restored bit-exactly; their gradients are cleared.
double check_gradients(const std::function<Tensor(Tape&)>& f, std::span<const Tensor> leaves,
                       double eps = 1e-6);

}  // namespace dapair
