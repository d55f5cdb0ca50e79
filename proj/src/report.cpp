#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dapair/kernels.hpp"
#include "dapair/trainer.hpp"

namespace dapair {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_of(std::vector<double> values) {
  std::erase_if(values, [](double v) { return std::isnan(v); });
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

// NaN is written as null; read it back as NaN.
double number_or_nan(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

std::vector<double> numbers_or_nan(const nlohmann::json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(number_or_nan(v));
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

std::string csv_number(double v) { return std::isnan(v) ? std::string("nan") : fmt::format("{}", v); }

}  // namespace

// ---------------------------------------------------------------------------
// Grid search

const GridCell& GridReport::cell(std::size_t n_index, std::size_t lambda_index) const {
  return cells.at(n_index * lambdas.size() + lambda_index);
}

double GridReport::min_accuracy() const {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& row : accuracy)
    for (double v : row) lo = std::min(lo, std::isnan(v) ? -std::numeric_limits<double>::infinity() : v);
  return lo;
}

double GridReport::max_accuracy() const {
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& row : accuracy)
    for (double v : row)
      if (!std::isnan(v)) hi = std::max(hi, v);
  return hi;
}

GridReport grid_search(const TrainConfig& base, const std::vector<double>& lambdas,
                       const std::vector<std::size_t>& ns, std::size_t seeds_per_cell, std::size_t jobs) {
  if (lambdas.empty() || ns.empty()) throw ConfigError({"grid axes must be nonempty"});
  if (seeds_per_cell == 0) throw ConfigError({"grid.seeds_per_cell must be >= 1"});
  {
    std::vector<std::string> problems;
    for (double l : lambdas) {
      TrainConfig probe = base;
      probe.da.lambda = l;
      try {
        probe.validate();
      } catch (const ConfigError& e) {
        problems.insert(problems.end(), e.problems().begin(), e.problems().end());
      }
    }
    for (std::size_t n : ns) {
      TrainConfig probe = base;
      probe.da.batch_size = n;
      try {
        probe.validate();
      } catch (const ConfigError& e) {
        problems.insert(problems.end(), e.problems().begin(), e.problems().end());
      }
    }
    if (!problems.empty()) {
      std::sort(problems.begin(), problems.end());
      problems.erase(std::unique(problems.begin(), problems.end()), problems.end());
      throw ConfigError(std::move(problems));
    }
  }
  const auto started = std::chrono::steady_clock::now();

  GridReport report;
  report.base = base;
  report.method = base.da.method;
  report.lambdas = lambdas;
  report.ns = ns;
  for (std::size_t s = 0; s < seeds_per_cell; ++s) report.seeds.push_back(base.seed + s);

  // One dataset per seed, shared read-only by every run using that seed.
  std::vector<DomainDataset> datasets;
  for (std::uint64_t seed : report.seeds) datasets.push_back(build_domain_datasets(base.data, seed));

  struct Task {
    std::size_t cell;  // index into cells, or cells.size() for the baseline
    std::size_t seed_index;
    TrainConfig cfg;
  };
  const std::size_t cell_count = ns.size() * lambdas.size();
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < report.seeds.size(); ++s) {
    TrainConfig b = base;
    b.seed = report.seeds[s];
    b.da.method = DaMethod::none;
    tasks.push_back(Task{cell_count, s, b});
  }
  for (std::size_t i = 0; i < ns.size(); ++i) {
    for (std::size_t j = 0; j < lambdas.size(); ++j) {
      for (std::size_t s = 0; s < report.seeds.size(); ++s) {
        TrainConfig c = base;
        c.seed = report.seeds[s];
        c.da.batch_size = ns[i];
        c.da.lambda = lambdas[j];
        tasks.push_back(Task{i * lambdas.size() + j, s, c});
      }
    }
  }

  std::vector<double> outcome(tasks.size(), kNaN);
  std::vector<std::string> failure(tasks.size());
  const std::size_t hw = std::max<unsigned>(1, std::thread::hardware_concurrency());
  const std::size_t workers = std::clamp<std::size_t>(jobs == 0 ? hw : jobs, 1, tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    kernels::omp::set_threads(static_cast<int>(std::max<std::size_t>(1, hw / workers)));
    for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
      try {
        outcome[t] = train_run(tasks[t].cfg, datasets[tasks[t].seed_index]).best_target_accuracy;
      } catch (const std::exception& e) {
        failure[t] = e.what();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  report.cells.resize(cell_count);
  report.baseline_per_seed.assign(report.seeds.size(), kNaN);
  for (std::size_t i = 0; i < ns.size(); ++i) {
    for (std::size_t j = 0; j < lambdas.size(); ++j) {
      auto& c = report.cells[i * lambdas.size() + j];
      c.lambda = lambdas[j];
      c.n = ns[i];
      c.seeds = report.seeds;
      c.accuracies.assign(report.seeds.size(), kNaN);
      c.errors.assign(report.seeds.size(), "");
    }
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    if (task.cell == cell_count) {
      report.baseline_per_seed[task.seed_index] = outcome[t];
      continue;
    }
    auto& c = report.cells[task.cell];
    c.accuracies[task.seed_index] = outcome[t];
    c.errors[task.seed_index] = failure[t];
  }
  report.accuracy.assign(ns.size(), std::vector<double>(lambdas.size(), kNaN));
  for (std::size_t i = 0; i < ns.size(); ++i) {
    for (std::size_t j = 0; j < lambdas.size(); ++j) {
      auto& c = report.cells[i * lambdas.size() + j];
      c.median = median_of(c.accuracies);
      report.accuracy[i][j] = c.median;
    }
  }
  report.baseline_accuracy = median_of(report.baseline_per_seed);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {
      {"seed", c.seed},
      {"data",
       {{"n_train", c.data.n_train},
        {"n_pairs", c.data.n_pairs},
        {"n_val", c.data.n_val},
        {"noise", c.data.noise_sigma},
        {"shift", c.data.shift.to_string()}}},
      {"model", {{"hidden", c.hidden}}},
      {"da",
       {{"method", to_string(c.da.method)},
        {"lambda", c.da.lambda},
        {"batch_size", c.da.batch_size},
        {"tap", c.da.tap},
        {"mmd_sigmas", c.da.mmd.sigmas},
        {"mmd_weights", c.da.mmd.weights}}},
      {"mixup", {{"enabled", c.mixup.enabled}, {"alpha", c.mixup.alpha}, {"beta", c.mixup.beta}}},
      {"optim",
       {{"lr", c.optim.adam.lr},
        {"beta1", c.optim.adam.beta1},
        {"beta2", c.optim.adam.beta2},
        {"eps", c.optim.adam.eps},
        {"scheduler", to_string(c.optim.scheduler)},
        {"plateau_factor", c.optim.plateau.factor},
        {"plateau_patience", c.optim.plateau.patience},
        {"reset_moments_on_restore", c.optim.reset_moments_on_restore}}},
      {"train",
       {{"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"eval_every", c.eval_every},
        {"monitor", to_string(c.monitor)},
        {"debug_checks", c.debug_checks}}},
  };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& d = j.at("data");
  c.data.n_train = d.at("n_train").get<std::size_t>();
  c.data.n_pairs = d.at("n_pairs").get<std::size_t>();
  c.data.n_val = d.at("n_val").get<std::size_t>();
  c.data.noise_sigma = d.at("noise").get<double>();
  c.data.shift = ShiftSpec::parse(d.at("shift").get<std::string>());
  c.hidden = j.at("model").at("hidden").get<std::vector<std::size_t>>();
  const auto& da = j.at("da");
  c.da.method = parse_da_method(da.at("method").get<std::string>());
  c.da.lambda = da.at("lambda").get<double>();
  c.da.batch_size = da.at("batch_size").get<std::size_t>();
  c.da.tap = da.at("tap").get<std::string>();
  c.da.mmd.sigmas = da.at("mmd_sigmas").get<std::vector<double>>();
  c.da.mmd.weights = da.at("mmd_weights").get<std::vector<double>>();
  const auto& mx = j.at("mixup");
  c.mixup.enabled = mx.at("enabled").get<bool>();
  c.mixup.alpha = mx.at("alpha").get<double>();
  c.mixup.beta = mx.at("beta").get<double>();
  const auto& o = j.at("optim");
  c.optim.adam.lr = o.at("lr").get<double>();
  c.optim.adam.beta1 = o.at("beta1").get<double>();
  c.optim.adam.beta2 = o.at("beta2").get<double>();
  c.optim.adam.eps = o.at("eps").get<double>();
  c.optim.scheduler = o.at("scheduler").get<std::string>() == "plateau" ? SchedulerKind::plateau
                                                                       : SchedulerKind::constant;
  c.optim.plateau.factor = o.at("plateau_factor").get<double>();
  c.optim.plateau.patience = o.at("plateau_patience").get<std::size_t>();
  c.optim.reset_moments_on_restore = o.at("reset_moments_on_restore").get<bool>();
  const auto& t = j.at("train");
  c.epochs = t.at("epochs").get<std::size_t>();
  c.batch_size = t.at("batch_size").get<std::size_t>();
  c.eval_every = t.at("eval_every").get<std::size_t>();
  c.monitor = t.at("monitor").get<std::string>() == "source" ? Monitor::source : Monitor::target;
  c.debug_checks = t.at("debug_checks").get<bool>();
}

void to_json(nlohmann::json& j, const TrainResult& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"source_accuracy", e.source_accuracy},
                      {"target_accuracy", e.target_accuracy},
                      {"cl_loss", e.cl_loss},
                      {"da_loss", e.da_loss},
                      {"total_loss", e.total_loss},
                      {"lr", e.lr},
                      {"restored", e.restored}});
  }
  j = {{"kind", "train"},
       {"config", r.config},
       {"epochs", std::move(epochs)},
       {"best_target_accuracy", r.best_target_accuracy},
       {"best_epoch", r.best_epoch},
       {"final_source_accuracy", r.final_source_accuracy},
       {"final_target_accuracy", r.final_target_accuracy},
       {"final_model", r.final_model},
       {"best_model", r.best_model},
       {"seconds", r.seconds}};
}

void from_json(const nlohmann::json& j, TrainResult& r) {
  r = TrainResult{};
  r.config = j.at("config").get<TrainConfig>();
  for (const auto& e : j.at("epochs")) {
    r.epochs.push_back(EpochRecord{e.at("epoch").get<std::size_t>(), e.at("source_accuracy").get<double>(),
                                   e.at("target_accuracy").get<double>(), e.at("cl_loss").get<double>(),
                                   e.at("da_loss").get<double>(), e.at("total_loss").get<double>(),
                                   e.at("lr").get<double>(), e.at("restored").get<bool>()});
  }
  r.best_target_accuracy = j.at("best_target_accuracy").get<double>();
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  r.final_source_accuracy = j.at("final_source_accuracy").get<double>();
  r.final_target_accuracy = j.at("final_target_accuracy").get<double>();
  r.final_model = j.at("final_model").get<ModelSnapshot>();
  r.best_model = j.at("best_model").get<ModelSnapshot>();
  r.seconds = j.at("seconds").get<double>();
}

void to_json(nlohmann::json& j, const GridReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"lambda", c.lambda},
                     {"n", c.n},
                     {"seeds", c.seeds},
                     {"accuracies", c.accuracies},
                     {"errors", c.errors},
                     {"median", c.median}});
  }
  j = {{"kind", "grid"},
       {"method", to_string(r.method)},
       {"config", r.base},
       {"lambdas", r.lambdas},
       {"ns", r.ns},
       {"seeds", r.seeds},
       {"accuracy", r.accuracy},
       {"cells", std::move(cells)},
       {"baseline_accuracy", r.baseline_accuracy},
       {"baseline_per_seed", r.baseline_per_seed},
       {"seconds", r.seconds}};
}

void from_json(const nlohmann::json& j, GridReport& r) {
  r = GridReport{};
  r.method = parse_da_method(j.at("method").get<std::string>());
  r.base = j.at("config").get<TrainConfig>();
  r.lambdas = j.at("lambdas").get<std::vector<double>>();
  r.ns = j.at("ns").get<std::vector<std::size_t>>();
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& row : j.at("accuracy")) r.accuracy.push_back(numbers_or_nan(row));
  for (const auto& c : j.at("cells")) {
    r.cells.push_back(GridCell{c.at("lambda").get<double>(), c.at("n").get<std::size_t>(),
                               c.at("seeds").get<std::vector<std::uint64_t>>(), numbers_or_nan(c.at("accuracies")),
                               c.at("errors").get<std::vector<std::string>>(), number_or_nan(c.at("median"))});
  }
  r.baseline_accuracy = number_or_nan(j.at("baseline_accuracy"));
  r.baseline_per_seed = numbers_or_nan(j.at("baseline_per_seed"));
  r.seconds = j.at("seconds").get<double>();
}

// NaN-tolerant equality via the serialized form (NaN and NaN both print as null).
bool operator==(const TrainConfig& a, const TrainConfig& b) {
  return nlohmann::json(a).dump() == nlohmann::json(b).dump();
}
bool operator==(const TrainResult& a, const TrainResult& b) {
  return nlohmann::json(a).dump() == nlohmann::json(b).dump();
}
bool operator==(const GridReport& a, const GridReport& b) {
  return nlohmann::json(a).dump() == nlohmann::json(b).dump();
}

// ---------------------------------------------------------------------------
// Files

std::string grid_csv(const GridReport& report) {
  std::string out = "n\\lambda";
  for (double l : report.lambdas) out += "," + csv_number(l);
  out += '\n';
  for (std::size_t i = 0; i < report.ns.size(); ++i) {
    out += std::to_string(report.ns[i]);
    for (std::size_t j = 0; j < report.lambdas.size(); ++j) out += "," + csv_number(report.accuracy[i][j]);
    out += '\n';
  }
  return out;
}

void write_report(const GridReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "result.json", nlohmann::json(report).dump(2) + "\n");
  write_text(dir / "grid.csv", grid_csv(report));
}

void write_report(const TrainResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "result.json", nlohmann::json(result).dump(2) + "\n");
  GridReport single;
  single.method = result.config.da.method;
  single.lambdas = {result.config.da.lambda};
  single.ns = {result.config.da.batch_size};
  single.accuracy = {{result.best_target_accuracy}};
  write_text(dir / "grid.csv", grid_csv(single));
}

GridReport read_grid_report(const std::filesystem::path& result_json) {
  const auto j = read_json(result_json);
  if (j.value("kind", "") != "grid") throw std::runtime_error(fmt::format("'{}' is not a grid report", result_json.string()));
  return j.get<GridReport>();
}

TrainResult read_train_result(const std::filesystem::path& result_json) {
  const auto j = read_json(result_json);
  if (j.value("kind", "") != "train") throw std::runtime_error(fmt::format("'{}' is not a train result", result_json.string()));
  return j.get<TrainResult>();
}

void write_boundary_csv(const std::filesystem::path& path, const std::vector<BoundaryPoint>& points) {
  std::string out = "x,y,score\n";
  for (const auto& p : points) out += fmt::format("{},{},{}\n", p.x, p.y, p.score);
  write_text(path, out);
}

}  // namespace dapair
