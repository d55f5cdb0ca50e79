#include "dapair/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "dapair/config.hpp"
#include "dapair/kernels.hpp"
#include "dapair/trainer.hpp"

namespace dapair {

namespace {

namespace fs = std::filesystem;

struct FlagBinding {
  const char* flag;
  const char* key;
  const char* help;
};

// Flags that override a config key. Their values go through the config parser so
// that every problem is reported together.
constexpr FlagBinding kOverrideFlags[] = {
    {"--seed", "seed", "master seed"},
    {"--da", "da.method", "DA method: none, mse or mmd"},
    {"--lambda", "da.lambda", "DA loss weight"},
    {"--da-batch", "da.batch_size", "DA batch size n"},
    {"--tap", "da.tap", "activation the DA loss reads"},
    {"--epochs", "train.epochs", "training epochs"},
    {"--batch", "train.batch_size", "classification batch size"},
    {"--lr", "optim.lr", "Adam learning rate"},
    {"--scheduler", "optim.scheduler", "constant or plateau"},
    {"--lambdas", "grid.lambdas", "grid lambda axis, comma separated"},
    {"--ns", "grid.ns", "grid DA batch size axis, comma separated"},
    {"--seeds-per-cell", "grid.seeds_per_cell", "seeds per grid cell"},
};

struct Options {
  std::optional<std::string> config;
  std::string out = "runs";
  std::vector<std::optional<std::string>> overrides = std::vector<std::optional<std::string>>(std::size(kOverrideFlags));
  bool mixup = false;
  std::size_t jobs = 0;
  bool verbose = false;
  // boundary
  std::string model;
  std::size_t resolution = 101;
  std::string bounds = "-1,1,-1,1";
};

std::string help_footer() {
  std::string text = "\nConfig keys (flat `section.key = value` lines; flags override the file):\n";
  const Config defaults;
  for (const auto& k : config_keys()) {
    text += fmt::format("  {:<32} {:<7} {} [default: {}]\n", k.name, k.type, k.help, config_value(defaults, k.name));
  }
  text += "\nFlag to key mapping:\n";
  for (const auto& b : kOverrideFlags) text += fmt::format("  {:<18} {}\n", b.flag, b.key);
  text += fmt::format("  {:<18} {}\n", "--mixup", "mixup.enabled = true");
  text += "\nExit codes: 0 success, 1 invalid arguments or configuration, 2 runtime failure.\n";
  return text;
}

std::vector<Override> collect_overrides(const Options& o) {
  std::vector<Override> out;
  for (std::size_t i = 0; i < std::size(kOverrideFlags); ++i)
    if (o.overrides[i]) out.emplace_back(kOverrideFlags[i].key, *o.overrides[i]);
  if (o.mixup) out.emplace_back("mixup.enabled", "true");
  return out;
}

std::optional<fs::path> config_path(const Options& o) {
  if (!o.config) return std::nullopt;
  return fs::path(*o.config);
}

fs::path make_run_dir(const fs::path& root, std::uint64_t seed) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = fmt::format("{}-seed{}", stamp, seed);
  fs::path dir = root / base;
  for (int k = 1; fs::exists(dir); ++k) dir = root / fmt::format("{}-{}", base, k);
  fs::create_directories(dir);
  return dir;
}

void write_config_echo(const Config& c, const fs::path& dir) {
  std::ofstream out(dir / "config.txt");
  out << render_config(c);
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", (dir / "config.txt").string()));
}

Bounds parse_bounds(const std::string& text) {
  std::vector<double> v;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError({fmt::format("--bounds: '{}' is not a number", part)});
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (v.size() != 4) throw ConfigError({"--bounds expects xmin,xmax,ymin,ymax"});
  if (!(v[0] < v[1]) || !(v[2] < v[3])) throw ConfigError({"--bounds needs xmin < xmax and ymin < ymax"});
  return Bounds{v[0], v[1], v[2], v[3]};
}

void print_epochs(const TrainResult& r, std::ostream& out) {
  for (const auto& e : r.epochs) {
    fmt::print(out, "epoch {:>4}  src {:.4f}  tgt {:.4f}  cl {:.5f}  da {:.5f}  lr {:.2e}{}\n", e.epoch,
               e.source_accuracy, e.target_accuracy, e.cl_loss, e.da_loss, e.lr, e.restored ? "  restored" : "");
  }
}

int cmd_train(const Options& o, std::ostream& out) {
  const Config cfg = load_config(config_path(o), collect_overrides(o));
  const TrainResult r = train_run(cfg.train);
  const fs::path dir = make_run_dir(o.out, cfg.train.seed);
  write_config_echo(cfg, dir);
  write_report(r, dir);
  MlpModel(r.final_model).save(dir / "model.json");
  const MlpModel best(r.best_model);
  best.save(dir / "best_model.json");
  write_boundary_csv(dir / "boundary.csv", export_boundary(best, Bounds{}, 101));
  if (o.verbose) print_epochs(r, out);
  fmt::print(out, "best target accuracy {:.4f} (epoch {}), final source {:.4f}, target {:.4f}, {:.1f}s\n",
             r.best_target_accuracy, r.best_epoch, r.final_source_accuracy, r.final_target_accuracy, r.seconds);
  fmt::print(out, "wrote {}\n", dir.string());
  return kExitOk;
}

int cmd_grid(const Options& o, std::ostream& out) {
  const Config cfg = load_config(config_path(o), collect_overrides(o));
  const GridReport report = grid_search(cfg.train, cfg.grid.lambdas, cfg.grid.ns, cfg.grid.seeds_per_cell, o.jobs);
  const fs::path dir = make_run_dir(o.out, cfg.train.seed);
  write_config_echo(cfg, dir);
  write_report(report, dir);
  if (o.verbose) {
    for (const auto& c : report.cells) {
      for (std::size_t s = 0; s < c.seeds.size(); ++s) {
        fmt::print(out, "lambda {} n {} seed {}: {}\n", c.lambda, c.n, c.seeds[s],
                   c.errors[s].empty() ? fmt::format("{:.4f}", c.accuracies[s]) : "failed: " + c.errors[s]);
      }
    }
  }
  fmt::print(out, "method {}  baseline {:.4f}  ({:.1f}s)\n", to_string(report.method), report.baseline_accuracy,
             report.seconds);
  out << grid_csv(report);
  fmt::print(out, "wrote {}\n", dir.string());
  std::size_t failed = 0;
  for (const auto& c : report.cells)
    for (const auto& e : c.errors) failed += e.empty() ? 0 : 1;
  return failed == 0 ? kExitOk : kExitAbort;
}

int cmd_boundary(const Options& o, std::ostream& out) {
  const Config cfg = load_config(config_path(o), collect_overrides(o));
  const Bounds bounds = parse_bounds(o.bounds);
  if (o.resolution < 2) throw ConfigError({"--resolution must be >= 2"});
  if (!fs::exists(o.model)) throw ConfigError({fmt::format("model checkpoint '{}' does not exist", o.model)});
  const MlpModel model = MlpModel::load(o.model);
  const fs::path dir = make_run_dir(o.out, cfg.train.seed);
  write_boundary_csv(dir / "boundary.csv", export_boundary(model, bounds, o.resolution));
  fmt::print(out, "wrote {}\n", (dir / "boundary.csv").string());
  return kExitOk;
}

// Gradient checks on small models plus parallel-vs-serial kernel agreement.
int cmd_selftest(const Options& o, std::ostream& out) {
  bool all = true;
  auto report = [&](const std::string& name, double err, double tol) {
    const bool ok = err <= tol;
    all = all && ok;
    fmt::print(out, "{} {:<28} err={:.3e} tol={:.0e}\n", ok ? "PASS" : "FAIL", name, err, tol);
  };

  Rng rng(o.overrides[0] ? std::stoull(*o.overrides[0]) : 7, Stream::data);
  auto random_tensor = [&](std::size_t r, std::size_t c) {
    std::vector<double> v(r * c);
    for (double& x : v) x = rng.normal();
    return Tensor({r, c}, std::move(v));
  };

  MlpSpec spec = MlpSpec::binary_classifier({8}, 3);
  const MlpModel bin = init_mlp(spec);
  const auto bin_params = bin.parameters();
  spec.sizes.back() = 3;
  spec.activations.back() = Activation::softmax;
  const MlpModel multi = init_mlp(spec);
  const auto multi_params = multi.parameters();

  double bce = 0, cce = 0, mse = 0, mmd = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_tensor(6, 2), x2 = random_tensor(6, 2);
    std::vector<int> labels(6), classes(6);
    for (std::size_t i = 0; i < 6; ++i) {
      labels[i] = static_cast<int>(rng.index(2));
      classes[i] = static_cast<int>(rng.index(3));
    }
    const Tensor onehot = encode_labels(classes, 3);
    bce = std::max(bce, check_gradients([&](Tape& t) { return bce_loss(t, forward(bin, x, t).output(), labels); },
                                        bin_params));
    cce = std::max(cce, check_gradients([&](Tape& t) { return cce_loss(t, forward(multi, x, t).output(), onehot); },
                                        multi_params));
    const TapId tap = bin.tap("hidden_0");
    mse = std::max(mse, check_gradients(
                            [&](Tape& t) {
                              return paired_mse(t, forward(bin, x, t).at(tap), forward(bin, x2, t).at(tap));
                            },
                            bin_params));
    mmd = std::max(mmd, check_gradients(
                            [&](Tape& t) {
                              return mmd_squared(t, forward(bin, x, t).at(tap), forward(bin, x2, t).at(tap),
                                                 MmdConfig{});
                            },
                            bin_params));
  }
  report("gradcheck bce(mlp)", bce, 1e-4);
  report("gradcheck cce(softmax mlp)", cce, 1e-4);
  report("gradcheck paired_mse(tap)", mse, 1e-4);
  report("gradcheck mmd(tap)", mmd, 1e-4);

  const MmdConfig mc;
  const kernels::RbfMixture mixture{mc.sigmas, mc.weights};
  double mmd_diff = 0, mm_diff = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor s = random_tensor(150, 4), t = random_tensor(130, 4);
    const auto a = kernels::serial::rbf_mmd(s.values(), 150, t.values(), 130, 4, mixture);
    const auto b = kernels::omp::rbf_mmd(s.values(), 150, t.values(), 130, 4, mixture);
    mmd_diff = std::max(mmd_diff, std::abs(a.value - b.value));
    for (std::size_t i = 0; i < a.grad_source.size(); ++i)
      mmd_diff = std::max(mmd_diff, std::abs(a.grad_source[i] - b.grad_source[i]));
    for (std::size_t i = 0; i < a.grad_target.size(); ++i)
      mmd_diff = std::max(mmd_diff, std::abs(a.grad_target[i] - b.grad_target[i]));

    const Tensor l = random_tensor(70, 40), r = random_tensor(40, 90);
    std::vector<double> c1(70 * 90, 0.0), c2(70 * 90, 0.0);
    kernels::serial::matmul(l.values(), r.values(), c1, 70, 40, 90);
    kernels::omp::matmul(l.values(), r.values(), c2, 70, 40, 90);
    for (std::size_t i = 0; i < c1.size(); ++i) mm_diff = std::max(mm_diff, std::abs(c1[i] - c2[i]));
  }
  report("omp vs serial mmd", mmd_diff, 1e-10);
  report("omp vs serial matmul", mm_diff, 1e-10);
  return all ? kExitOk : kExitAbort;
}

}  // namespace

std::vector<std::string> cli_flags() {
  std::vector<std::string> flags = {"--config", "--out"};
  for (const auto& b : kOverrideFlags) flags.emplace_back(b.flag);
  for (const char* f : {"--mixup", "--jobs", "--verbose", "--model", "--resolution", "--bounds", "--help"})
    flags.emplace_back(f);
  return flags;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Domain adaptation on shifted two-moons: paired MSE and multi-kernel MMD losses", "dapair"};
  app.footer(help_footer());
  app.require_subcommand(1);
  app.add_option("--config", o.config, "config file (flat section.key = value lines)");
  app.add_option("--out", o.out, "root of the run directories")->capture_default_str();
  for (std::size_t i = 0; i < std::size(kOverrideFlags); ++i)
    app.add_option(kOverrideFlags[i].flag, o.overrides[i], kOverrideFlags[i].help);
  app.add_flag("--mixup", o.mixup, "enable MixUp");
  app.add_option("--jobs", o.jobs, "grid worker threads (0 = one per processor)")->capture_default_str();
  app.add_flag("-v,--verbose", o.verbose, "per-epoch / per-cell logging");

  auto* train = app.add_subcommand("train", "single training run")->fallthrough();
  auto* grid = app.add_subcommand("grid", "lambda x n grid search with a no-DA baseline")->fallthrough();
  auto* boundary = app.add_subcommand("boundary", "export a decision-boundary lattice for a checkpoint")->fallthrough();
  boundary->add_option("--model", o.model, "model checkpoint (model.json)")->required();
  boundary->add_option("--resolution", o.resolution, "lattice points per axis")->capture_default_str();
  boundary->add_option("--bounds", o.bounds, "xmin,xmax,ymin,ymax")->capture_default_str();
  auto* selftest = app.add_subcommand("selftest", "gradient checks and kernel equivalence")->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (train->parsed()) return cmd_train(o, out);
    if (grid->parsed()) return cmd_grid(o, out);
    if (boundary->parsed()) return cmd_boundary(o, out);
    if (selftest->parsed()) return cmd_selftest(o, out);
    return kExitInvalid;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitAbort;
  }
}

int run_cli(int argc, const char* const* argv) {
  return run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace dapair
