#include "dapair/optim.hpp"

#include <cmath>

#include <fmt/format.h>

namespace dapair {

AdamState AdamState::for_parameters(std::span<const Tensor> params, AdamOptions options) {
  AdamState state;
  state.options = options;
  for (const auto& p : params) {
    state.m.emplace_back(p.size(), 0.0);
    state.v.emplace_back(p.size(), 0.0);
  }
  return state;
}

void AdamState::reset_moments() {
  for (auto& m_i : m) std::fill(m_i.begin(), m_i.end(), 0.0);
  for (auto& v_i : v) std::fill(v_i.begin(), v_i.end(), 0.0);
  step = 0;
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.m.size()) {
    throw DimensionError(fmt::format("Adam state tracks {} parameters, given {}", state.m.size(), params.size()));
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].size() != state.m[p].size()) {
      throw DimensionError(fmt::format("Adam parameter {} has {} values, state has {}", p, params[p].size(),
                                       state.m[p].size()));
    }
    const auto g = params[p].grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw TrainingDiverged(0, state.step, fmt::format("non-finite gradient {} in parameter {} element {}",
                                                          g[i], p, i));
      }
    }
  }

  const auto& o = state.options;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(o.beta1, t);
  const double correct2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto g = params[p].grad();
    auto values = params[p].mutable_values();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      values[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

PlateauScheduler::PlateauScheduler(PlateauOptions options) : options_(options) {
  if (!(options_.factor > 0.0 && options_.factor < 1.0)) {
    throw DomainError(fmt::format("plateau factor must lie in (0, 1), got {}", options_.factor));
  }
  if (options_.patience == 0) throw DomainError("plateau patience must be >= 1");
}

PlateauScheduler::Outcome PlateauScheduler::update(double metric, MlpModel& model, double lr) {
  if (!std::isfinite(metric)) throw DomainError("plateau scheduler given a non-finite metric");
  history_.push_back(metric);
  Outcome out{lr};
  if (!best_ || metric > *best_) {
    best_ = metric;
    best_index_ = history_.size() - 1;
    checkpoint_ = model.snapshot();
    bad_epochs_ = 0;
    out.improved = true;
    return out;
  }
  if (++bad_epochs_ >= options_.patience) {
    out.lr = lr * options_.factor;
    out.decayed = true;
    model.restore(*checkpoint_);
    bad_epochs_ = 0;
  }
  return out;
}

}  // namespace dapair
