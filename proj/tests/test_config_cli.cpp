#include <algorithm>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "dapair/cli.hpp"
#include "dapair/config.hpp"
#include "dapair/trainer.hpp"

using namespace dapair;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dapair");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path write(const std::string& file, const std::string& text) const {
    std::ofstream(path_ / file) << text;
    return path_ / file;
  }

 private:
  fs::path path_;
};

std::vector<std::string> problems_of(const std::string& text, const std::vector<Override>& overrides = {}) {
  try {
    parse_config(text, overrides);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

fs::path only_run_dir(const fs::path& root) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) dirs.push_back(e.path());
  EXPECT_EQ(dirs.size(), 1u);
  return dirs.empty() ? fs::path{} : dirs.front();
}

const char* const kTinyConfig =
    "data.n_train = 128\n"
    "data.n_pairs = 128\n"
    "data.n_val = 64\n"
    "model.hidden = 4\n"
    "train.epochs = 2\n";

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
  const Config c = parse_config("");
  const TrainConfig defaults;
  EXPECT_EQ(c.train, defaults);
  EXPECT_EQ(c.train.data.n_train, 10000u);
  EXPECT_EQ(c.train.data.noise_sigma, 0.1);
  EXPECT_EQ(c.train.hidden, std::vector<std::size_t>{32});
  EXPECT_EQ(c.train.epochs, 250u);
  EXPECT_EQ(c.train.batch_size, 32u);
  EXPECT_EQ(c.train.optim.adam.lr, 1e-3);
  EXPECT_EQ(c.train.data.shift.to_string(), "stretch(y,1.5);rotate(-45)");
  EXPECT_EQ(c.grid.lambdas, (std::vector<double>{0.1, 1, 5, 10}));
  EXPECT_EQ(c.grid.ns, (std::vector<std::size_t>{8, 32, 128, 256}));
}

TEST(Config, FileValuesAndComments) {
  const Config c = parse_config("# header\nseed = 4\n\nda.method = mmd   # trailing\nda.mmd_sigmas = 0.5, 1\n"
                                "da.mmd_weights = 2,2\nmixup.enabled = yes\n");
  EXPECT_EQ(c.train.seed, 4u);
  EXPECT_EQ(c.train.da.method, DaMethod::mmd);
  EXPECT_EQ(c.train.da.mmd.sigmas, (std::vector<double>{0.5, 1.0}));
  EXPECT_TRUE(c.train.mixup.enabled);
}

TEST(Config, OverrideBeatsFile) {
  const Config c = parse_config("da.lambda = 1\n", {{"da.lambda", "5"}});
  EXPECT_EQ(c.train.da.lambda, 5.0);
}

TEST(Config, DaBatchZeroNamesConstraint) {
  const auto problems = problems_of("", {{"da.batch_size", "0"}});
  ASSERT_FALSE(problems.empty());
  bool named = false;
  for (const auto& p : problems) named = named || p.find("n >= 1") != std::string::npos;
  EXPECT_TRUE(named);
}

TEST(Config, AllErrorsReportedTogether) {
  const auto problems = problems_of("bogus.key = 1\ntrain.epochs = 0\nda.lambda = abc\nno equals sign\n"
                                    "seed = 1\nseed = 2\n",
                                    {{"train.batch_size", "-3"}});
  EXPECT_EQ(problems.size(), 6u);
  const std::string all = [&] {
    std::string s;
    for (const auto& p : problems) s += p + "\n";
    return s;
  }();
  EXPECT_NE(all.find("unknown key 'bogus.key'"), std::string::npos);
  EXPECT_NE(all.find("train.epochs"), std::string::npos);
  EXPECT_NE(all.find("da.lambda"), std::string::npos);
  EXPECT_NE(all.find("duplicate key 'seed'"), std::string::npos);
  EXPECT_NE(all.find("<config>:4"), std::string::npos);
}

TEST(Config, GridAxesValidated) {
  EXPECT_FALSE(problems_of("grid.ns = 8, 0\n").empty());
  // n larger than the pair pool only matters once a grid runs.
  EXPECT_TRUE(problems_of("grid.ns = 20000\n").empty());
  TrainConfig mse;
  mse.da.method = DaMethod::mse;
  EXPECT_THROW(grid_search(mse, {1.0}, {20000}, 1), ConfigError);
  EXPECT_FALSE(problems_of("grid.lambdas = -1\n").empty());
  EXPECT_FALSE(problems_of("grid.seeds_per_cell = 0\n").empty());
}

TEST(Config, RenderRoundTrip) {
  const Config c = parse_config("seed = 12\nda.method = mse\nda.tap = hidden_0\ndata.shift = rotate(10)\n"
                                "optim.scheduler = plateau\ngrid.ns = 4,16\nmodel.hidden = 16, 8\n");
  const std::string text = render_config(c);
  const Config back = parse_config(text);
  EXPECT_EQ(back.train, c.train);
  EXPECT_EQ(back.grid.ns, c.grid.ns);
  EXPECT_EQ(render_config(back), text);
  std::size_t lines = std::count(text.begin(), text.end(), '\n');
  EXPECT_EQ(lines, config_keys().size());
}

TEST(Config, MissingFileNamesPath) {
  try {
    load_config(fs::path("/definitely/not/here.cfg"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/definitely/not/here.cfg"), std::string::npos);
  }
}

TEST(Cli, HelpEnumeratesKeysAndFlags) {
  const CliRun r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const auto& k : config_keys()) EXPECT_NE(r.out.find(k.name), std::string::npos) << k.name;
  for (const auto& f : cli_flags()) {
    if (f == "--model" || f == "--resolution" || f == "--bounds") continue;  // boundary subcommand help
    EXPECT_NE(r.out.find(f), std::string::npos) << f;
  }
  for (const char* sub : {"train", "grid", "boundary", "selftest"}) EXPECT_NE(r.out.find(sub), std::string::npos);
  const CliRun b = cli({"boundary", "--help"});
  EXPECT_EQ(b.code, 0);
  for (const char* f : {"--model", "--resolution", "--bounds"}) EXPECT_NE(b.out.find(f), std::string::npos) << f;
}

TEST(Cli, DocumentedFlagsMatchAcceptedFlags) {
  // Every long flag mentioned in help must be one the parser knows, and vice versa.
  const std::string help = cli({"--help"}).out + cli({"boundary", "--help"}).out;
  std::set<std::string> documented;
  const std::regex flag(R"(--[a-z][a-z-]*)");
  for (auto it = std::sregex_iterator(help.begin(), help.end(), flag); it != std::sregex_iterator(); ++it)
    documented.insert(it->str());
  const auto accepted_list = cli_flags();
  const std::set<std::string> accepted(accepted_list.begin(), accepted_list.end());
  EXPECT_EQ(documented, accepted);

  for (const char* f : {"--config", "--out", "--seed", "--da", "--lambda", "--da-batch", "--tap", "--epochs",
                        "--batch", "--lr", "--scheduler", "--mixup", "--lambdas", "--ns", "--seeds-per-cell",
                        "--jobs", "--verbose"}) {
    EXPECT_TRUE(accepted.count(f)) << f;
  }
}

TEST(Cli, UnknownFlagAndMissingSubcommand) {
  EXPECT_EQ(cli({"train", "--no-such-flag"}).code, 1);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"fly"}).code, 1);
}

TEST(Cli, MissingConfigExitsOne) {
  const CliRun r = cli({"train", "--config", "/no/such/file.cfg"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/no/such/file.cfg"), std::string::npos);
}

TEST(Cli, DaBatchZeroExitsOne) {
  const CliRun r = cli({"train", "--da", "mse", "--da-batch", "0"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("n >= 1"), std::string::npos);
}

TEST(Cli, ListsAllErrorsAtOnce) {
  TempDir dir("dapair_cli_errors");
  const auto cfg = dir.write("bad.cfg", "foo = 1\nbar = 2\n");
  const CliRun r = cli({"train", "--config", cfg.string(), "--epochs", "0", "--lr", "x"});
  EXPECT_EQ(r.code, 1);
  for (const char* needle : {"'foo'", "'bar'", "train.epochs", "optim.lr"})
    EXPECT_NE(r.err.find(needle), std::string::npos) << needle;
}

TEST(Cli, TrainWritesRunDirectory) {
  TempDir dir("dapair_cli_train");
  const auto cfg = dir.write("tiny.cfg", kTinyConfig);
  const fs::path out = dir.path() / "runs";
  const CliRun r = cli({"train", "--config", cfg.string(), "--out", out.string(), "--seed", "3", "--da", "mse",
                        "--lambda", "5", "--verbose"});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path run = only_run_dir(out);
  EXPECT_NE(run.filename().string().find("-seed3"), std::string::npos);
  for (const char* f : {"result.json", "grid.csv", "boundary.csv", "model.json", "best_model.json", "config.txt"})
    EXPECT_TRUE(fs::exists(run / f)) << f;
  EXPECT_NE(r.out.find("epoch    2"), std::string::npos);

  // The echoed config reproduces the run bit-for-bit.
  const TrainResult first = read_train_result(run / "result.json");
  EXPECT_EQ(first.config.da.lambda, 5.0);
  const fs::path out2 = dir.path() / "again";
  ASSERT_EQ(cli({"train", "--config", (run / "config.txt").string(), "--out", out2.string()}).code, 0);
  const TrainResult second = read_train_result(only_run_dir(out2) / "result.json");
  EXPECT_EQ(first.target_trace(), second.target_trace());
  EXPECT_EQ(first.final_model.weights, second.final_model.weights);

  // boundary export from the saved checkpoint
  const fs::path out3 = dir.path() / "boundary";
  const CliRun b = cli({"boundary", "--model", (run / "model.json").string(), "--out", out3.string(), "--resolution",
                        "11", "--bounds", "-1,1,-1,1"});
  ASSERT_EQ(b.code, 0) << b.err;
  std::ifstream csv(only_run_dir(out3) / "boundary.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, 1u + 121u);
  EXPECT_EQ(cli({"boundary", "--model", (dir.path() / "none.json").string(), "--out", out3.string()}).code, 1);
  EXPECT_EQ(cli({"boundary", "--model", (run / "model.json").string(), "--bounds", "1,0,0,1"}).code, 1);
}

TEST(Cli, GridWritesTableShapedCsv) {
  TempDir dir("dapair_cli_grid");
  const auto cfg = dir.write("tiny.cfg", std::string(kTinyConfig) + "train.epochs = 1\n");
  const fs::path out = dir.path() / "runs";
  // train.epochs appears twice: duplicate keys are rejected.
  EXPECT_EQ(cli({"grid", "--config", cfg.string(), "--out", out.string()}).code, 1);

  const auto ok = dir.write("ok.cfg", kTinyConfig);
  const CliRun r = cli({"grid", "--config", ok.string(), "--out", out.string(), "--da", "mse", "--lambdas",
                        "0.1,1,5,10", "--ns", "8,32,64,128", "--jobs", "2", "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path run = only_run_dir(out);
  std::ifstream csv(run / "grid.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "n\\lambda,0.1,1,5,10");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 4u);
  const auto json = nlohmann::json::parse(std::ifstream(run / "result.json"));
  EXPECT_TRUE(json.contains("baseline_accuracy"));
  EXPECT_EQ(json.at("config").at("train").at("epochs"), 1);
}

TEST(Cli, Selftest) {
  const CliRun r = cli({"selftest"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}
