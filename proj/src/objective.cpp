#include "dapair/objective.hpp"

#include <cmath>

#include <fmt/format.h>

namespace dapair {

void MmdConfig::validate() const {
  if (sigmas.empty()) throw DomainError("MMD needs at least one kernel bandwidth");
  if (sigmas.size() != weights.size()) {
    throw DimensionError(fmt::format("{} MMD bandwidths but {} weights", sigmas.size(), weights.size()));
  }
  for (double s : sigmas)
    if (!(s > 0.0)) throw DomainError(fmt::format("MMD bandwidth must be > 0, got {}", s));
  for (double w : weights)
    if (!(w > 0.0)) throw DomainError(fmt::format("MMD kernel weight must be > 0, got {}", w));
}

std::string to_string(DaMethod m) {
  switch (m) {
    case DaMethod::none: return "none";
    case DaMethod::mse: return "mse";
    case DaMethod::mmd: return "mmd";
  }
  return "none";
}

DaMethod parse_da_method(std::string_view name) {
  if (name == "none") return DaMethod::none;
  if (name == "mse") return DaMethod::mse;
  if (name == "mmd") return DaMethod::mmd;
  throw DomainError(fmt::format("unknown DA method '{}' (expected none, mse or mmd)", name));
}

Tensor encode_labels(std::span<const int> labels, std::size_t classes) {
  if (classes <= 1) {
    std::vector<double> v(labels.begin(), labels.end());
    return Tensor({labels.size(), 1}, std::move(v));
  }
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw DomainError(fmt::format("label {} outside [0, {})", labels[r], classes));
    }
    v[r * classes + static_cast<std::size_t>(labels[r])] = 1.0;
  }
  return Tensor({labels.size(), classes}, std::move(v));
}

Tensor bce_loss(Tape& tape, const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError(fmt::format("bce_loss: prediction {} vs target {}", pred.shape().to_string(),
                                     target.shape().to_string()));
  }
  std::vector<double> complement(target.size());
  for (std::size_t i = 0; i < complement.size(); ++i) complement[i] = 1.0 - target.values()[i];
  const Tensor not_target(target.shape(), std::move(complement));

  const Tensor p = tape.clamp(pred, kLogEpsilon, 1.0 - kLogEpsilon);
  const Tensor log_p = tape.log(p);
  const Tensor log_not_p = tape.log(tape.add_scalar(tape.scale(p, -1.0), 1.0));
  const Tensor ll = tape.add(tape.mul(target, log_p), tape.mul(not_target, log_not_p));
  return tape.scale(tape.reduce_mean(ll), -1.0);
}

Tensor bce_loss(Tape& tape, const Tensor& pred, std::span<const int> labels) {
  return bce_loss(tape, pred, encode_labels(labels));
}

Tensor cce_loss(Tape& tape, const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError(fmt::format("cce_loss: prediction {} vs target {}", pred.shape().to_string(),
                                     target.shape().to_string()));
  }
  if (pred.rows() == 0) throw DomainError("cce_loss of an empty batch");
  for (const Tensor* t : {&pred, &target}) {
    for (std::size_t r = 0; r < t->rows(); ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < t->cols(); ++c) sum += (*t)(r, c);
      if (std::abs(sum - 1.0) > 1e-6) {
        throw ContractError(fmt::format("cce_loss: {} row {} sums to {}, expected 1",
                                        t == &pred ? "prediction" : "target", r, sum));
      }
    }
  }
  const Tensor log_p = tape.log(tape.clamp(pred, kLogEpsilon, 1.0 - kLogEpsilon));
  const Tensor total = tape.reduce_sum(tape.mul(target, log_p));
  return tape.scale(total, -1.0 / static_cast<double>(pred.rows()));
}

Tensor paired_mse(Tape& tape, const Tensor& source, const Tensor& target) {
  if (source.shape() != target.shape()) {
    throw PairingError(fmt::format("paired_mse needs index-aligned batches of equal shape, got {} and {}",
                                   source.shape().to_string(), target.shape().to_string()));
  }
  return tape.reduce_mean(tape.square(tape.sub(source, target)));
}

Tensor mmd_squared(Tape& tape, const Tensor& source, const Tensor& target, const MmdConfig& cfg) {
  cfg.validate();
  return tape.rbf_mmd(source, target, cfg.sigmas, cfg.weights);
}

Tensor combined_loss(Tape& tape, const Tensor& l_cl, const Tensor& l_da, double lambda) {
  if (l_cl.size() != 1 || l_da.size() != 1) throw ContractError("combined_loss expects scalar losses");
  return tape.add(l_cl, tape.scale(l_da, lambda));
}

MixedBatch mixup(const Tensor& x1, const Tensor& y1, const Tensor& x2, const Tensor& y2, double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw DomainError(fmt::format("mixup coefficient {} outside [0, 1]", a));
  if (x1.shape() != x2.shape() || y1.shape() != y2.shape() || x1.rows() != y1.rows()) {
    throw DimensionError("mixup operands disagree in shape");
  }
  auto blend = [a](const Tensor& p, const Tensor& q) {
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * p.values()[i] + (1.0 - a) * q.values()[i];
    return Tensor(p.shape(), std::move(out));
  };
  return MixedBatch{blend(x1, x2), blend(y1, y2)};
}

}  // namespace dapair
