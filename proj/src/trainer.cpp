#include "dapair/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace dapair {

std::string to_string(SchedulerKind k) { return k == SchedulerKind::plateau ? "plateau" : "constant"; }
std::string to_string(Monitor m) { return m == Monitor::source ? "source" : "target"; }

std::vector<double> TrainResult::target_trace() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.target_accuracy);
  return out;
}

std::vector<double> TrainResult::source_trace() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.source_accuracy);
  return out;
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  auto require = [&](bool ok, std::string message) {
    if (!ok) problems.push_back(std::move(message));
  };

  require(epochs >= 1, "train.epochs must be >= 1");
  require(batch_size >= 1, "train.batch_size must be >= 1");
  require(eval_every >= 1, "train.eval_every must be >= 1");
  require(data.n_train >= 2, "data.n_train must be >= 2");
  require(data.n_pairs >= 2, "data.n_pairs must be >= 2");
  require(data.n_val >= 2, "data.n_val must be >= 2");
  require(batch_size <= data.n_train,
          fmt::format("train.batch_size ({}) must not exceed data.n_train ({})", batch_size, data.n_train));
  require(data.noise_sigma >= 0.0 && std::isfinite(data.noise_sigma), "data.noise must be finite and >= 0");
  try {
    data.shift.validate();
  } catch (const std::exception& e) {
    problems.push_back(fmt::format("data.shift: {}", e.what()));
  }
  for (std::size_t h : hidden) require(h >= 1, "model.hidden sizes must be >= 1");

  require(da.lambda >= 0.0 && std::isfinite(da.lambda),
          fmt::format("da.lambda must be finite and >= 0 (lambda >= 0), got {}", da.lambda));
  require(da.batch_size >= 1, "da.batch_size must be >= 1 (n >= 1)");
  if (da.method != DaMethod::none) {
    require(da.batch_size <= data.n_pairs,
            fmt::format("da.batch_size ({}) must not exceed the pair pool data.n_pairs ({})", da.batch_size,
                        data.n_pairs));
  }
  {
    std::vector<Layer> probe;
    std::size_t in = 2;
    for (std::size_t h : hidden) {
      probe.push_back(Layer{Tensor::zeros({in, std::max<std::size_t>(h, 1)}),
                            Tensor::zeros({1, std::max<std::size_t>(h, 1)}), Activation::relu});
      in = std::max<std::size_t>(h, 1);
    }
    probe.push_back(Layer{Tensor::zeros({in, 1}), Tensor::zeros({1, 1}), Activation::sigmoid});
    try {
      (void)MlpModel(std::move(probe)).tap(da.tap);
    } catch (const std::exception& e) {
      problems.push_back(fmt::format("da.tap: {}", e.what()));
    }
  }
  if (da.method == DaMethod::mmd) {
    try {
      da.mmd.validate();
    } catch (const std::exception& e) {
      problems.push_back(fmt::format("da.mmd: {}", e.what()));
    }
  }
  if (mixup.enabled) {
    require(mixup.alpha > 0.0 && mixup.beta > 0.0, "mixup.alpha and mixup.beta must be > 0");
  }
  require(optim.adam.lr > 0.0, "optim.lr must be > 0");
  require(optim.adam.beta1 >= 0.0 && optim.adam.beta1 < 1.0, "optim.beta1 must lie in [0, 1)");
  require(optim.adam.beta2 >= 0.0 && optim.adam.beta2 < 1.0, "optim.beta2 must lie in [0, 1)");
  require(optim.adam.eps > 0.0, "optim.eps must be > 0");
  require(optim.plateau.factor > 0.0 && optim.plateau.factor < 1.0, "optim.plateau_factor must lie in (0, 1)");
  require(optim.plateau.patience >= 1, "optim.plateau_patience must be >= 1");

  if (!problems.empty()) throw ConfigError(std::move(problems));
}

namespace {

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  return perm;
}

// MixUp within a batch: every row is blended with a randomly chosen partner row
// of the same batch, one Beta-distributed coefficient per batch.
struct MixPlan {
  double coefficient;
  std::vector<std::size_t> partner;
};

MixPlan draw_mix(std::size_t rows, const MixupConfig& cfg, Rng& rng) {
  const double a = rng.beta(cfg.alpha, cfg.beta);
  return MixPlan{a, random_permutation(rows, rng)};
}

Tensor mix_rows(const Tensor& x, const MixPlan& plan) {
  const Tensor dummy = Tensor::zeros({x.rows(), 0});
  return mixup(x, dummy, gather_rows(x, plan.partner), dummy, plan.coefficient).features;
}

}  // namespace

TrainResult train_run(const TrainConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  const DomainDataset data = build_domain_datasets(cfg.data, cfg.seed);
  return train_run(cfg, data, observer);
}

TrainResult train_run(const TrainConfig& cfg, const DomainDataset& data, const StepObserver& observer) {
  cfg.validate();
  if (cfg.batch_size > data.source_train.size()) {
    throw ConfigError({fmt::format("train.batch_size ({}) exceeds the labeled set ({})", cfg.batch_size,
                                   data.source_train.size())});
  }
  if (cfg.da.method != DaMethod::none && cfg.da.batch_size > data.pair_pool_source.rows()) {
    throw ConfigError({fmt::format("da.batch_size ({}) exceeds the pair pool ({})", cfg.da.batch_size,
                                   data.pair_pool_source.rows())});
  }
  const auto started = std::chrono::steady_clock::now();

  MlpModel model = init_mlp(MlpSpec::binary_classifier(cfg.hidden, cfg.seed));
  std::vector<Tensor> params = model.parameters();
  AdamState adam = AdamState::for_parameters(params, cfg.optim.adam);
  std::optional<PlateauScheduler> plateau;
  if (cfg.optim.scheduler == SchedulerKind::plateau) plateau.emplace(cfg.optim.plateau);

  BatchSampler sampler(data, cfg.seed, cfg.seed);
  Rng mixup_rng(cfg.seed, Stream::mixup);
  const TapId tap = model.tap(cfg.da.tap);
  const std::size_t steps = sampler.batches_per_epoch(cfg.batch_size);
  const std::size_t n = cfg.da.batch_size;

  TrainResult result;
  result.config = cfg;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    sampler.begin_epoch();
    double cl_sum = 0.0, da_sum = 0.0, total_sum = 0.0;

    for (std::size_t step = 0; step < steps; ++step) {
      Tape tape;
      Batch cb = sampler.sample(BatchKind::classification, cfg.batch_size);
      Tensor x = cb.features;
      Tensor y = encode_labels(cb.labels);
      if (cfg.mixup.enabled) {
        const MixPlan plan = draw_mix(x.rows(), cfg.mixup, mixup_rng);
        auto mixed = mixup(x, y, gather_rows(x, plan.partner), gather_rows(y, plan.partner), plan.coefficient);
        x = mixed.features;
        y = mixed.targets;
      }
      const Tensor l_cl = bce_loss(tape, forward(model, x, tape).output(), y);
      Tensor loss = l_cl;
      double da_value = 0.0;

      if (cfg.da.method == DaMethod::mse) {
        Batch pb = sampler.sample(BatchKind::paired, n);
        if (cfg.debug_checks) {
          const Tensor expected = apply_shift(pb.features, data.shift);
          if (!std::equal(expected.values().begin(), expected.values().end(), pb.partner.values().begin())) {
            throw PairingError(fmt::format("epoch {} step {}: paired batch violates target = shift(source)",
                                           epoch, step));
          }
        }
        Tensor src = pb.features, tgt = pb.partner;
        if (cfg.mixup.enabled) {
          // Same coefficient and partners on both halves keeps every pair aligned.
          const MixPlan plan = draw_mix(n, cfg.mixup, mixup_rng);
          src = mix_rows(src, plan);
          tgt = mix_rows(tgt, plan);
        }
        const ForwardPass fs = forward(model, src, tape);
        const ForwardPass ft = forward(model, tgt, tape);
        const Tensor l_da = paired_mse(tape, fs.at(tap), ft.at(tap));
        da_value = l_da.item();
        loss = combined_loss(tape, l_cl, l_da, cfg.da.lambda);
      } else if (cfg.da.method == DaMethod::mmd) {
        Tensor src = sampler.sample(BatchKind::unpaired_source, n).features;
        Tensor tgt = sampler.sample(BatchKind::unpaired_target, n).features;
        if (cfg.mixup.enabled) {
          src = mix_rows(src, draw_mix(n, cfg.mixup, mixup_rng));
          tgt = mix_rows(tgt, draw_mix(n, cfg.mixup, mixup_rng));
        }
        const ForwardPass fs = forward(model, src, tape);
        const ForwardPass ft = forward(model, tgt, tape);
        const Tensor l_da = mmd_squared(tape, fs.at(tap), ft.at(tap), cfg.da.mmd);
        da_value = l_da.item();
        loss = combined_loss(tape, l_cl, l_da, cfg.da.lambda);
      }

      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw TrainingDiverged(epoch, step, fmt::format("loss is {} (classification {}, DA {})", loss_value,
                                                        l_cl.item(), da_value));
      }
      model.zero_grad();
      tape.backward(loss);
      try {
        adam_step(params, adam);
      } catch (const TrainingDiverged& e) {
        throw TrainingDiverged(epoch, step, e.what());
      }
      if (observer) observer(epoch, step, model);

      cl_sum += l_cl.item();
      da_sum += da_value;
      total_sum += loss_value;
    }

    if (epoch % cfg.eval_every != 0 && epoch != cfg.epochs) continue;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.source_accuracy = accuracy(model, data.source_val);
    rec.target_accuracy = accuracy(model, data.target_val);
    rec.cl_loss = cl_sum / static_cast<double>(steps);
    rec.da_loss = da_sum / static_cast<double>(steps);
    rec.total_loss = total_sum / static_cast<double>(steps);
    rec.lr = adam.options.lr;

    if (!have_best || rec.target_accuracy > result.best_target_accuracy) {
      have_best = true;
      result.best_target_accuracy = rec.target_accuracy;
      result.best_epoch = epoch;
      result.best_model = model.snapshot();
    }
    if (plateau) {
      const double metric = cfg.monitor == Monitor::target ? rec.target_accuracy : rec.source_accuracy;
      const auto outcome = plateau->update(metric, model, adam.options.lr);
      adam.options.lr = outcome.lr;
      if (outcome.decayed) {
        rec.restored = true;
        if (cfg.optim.reset_moments_on_restore) adam.reset_moments();
      }
    }
    result.epochs.push_back(rec);
  }

  result.final_source_accuracy = result.epochs.back().source_accuracy;
  result.final_target_accuracy = result.epochs.back().target_accuracy;
  result.final_model = model.snapshot();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

// ---------------------------------------------------------------------------
// Decision boundary

std::vector<BoundaryPoint> export_boundary(const MlpModel& model, const Bounds& b, std::size_t resolution) {
  if (resolution < 2) throw DomainError(fmt::format("resolution must be >= 2, got {}", resolution));
  if (!(b.x_max > b.x_min) || !(b.y_max > b.y_min)) {
    throw DomainError(fmt::format("degenerate rectangle [{}, {}] x [{}, {}]", b.x_min, b.x_max, b.y_min, b.y_max));
  }
  auto lattice = [resolution](double lo, double hi, std::size_t i) {
    if (i + 1 == resolution) return hi;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
  };
  std::vector<double> xy;
  xy.reserve(resolution * resolution * 2);
  for (std::size_t iy = 0; iy < resolution; ++iy) {
    for (std::size_t ix = 0; ix < resolution; ++ix) {
      xy.push_back(lattice(b.x_min, b.x_max, ix));
      xy.push_back(lattice(b.y_min, b.y_max, iy));
    }
  }
  const std::size_t count = resolution * resolution;
  Tape tape(GradMode::inference);
  const Tensor out = forward(model, Tensor({count, 2}, xy), tape).output();
  const std::size_t score_col = out.cols() > 1 ? 1 : 0;
  std::vector<BoundaryPoint> points(count);
  for (std::size_t i = 0; i < count; ++i) points[i] = BoundaryPoint{xy[2 * i], xy[2 * i + 1], out(i, score_col)};
  return points;
}

}  // namespace dapair
