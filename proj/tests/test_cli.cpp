#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "cascal/experiment.hpp"
#include "cascal/io_util.hpp"
#include "cli.hpp"
#include "support.hpp"

using namespace cascal;
using cascal::testing::error_code_of;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSmallConfig = R"({
  "seed": 3,
  "world": {"classes": 4, "dims": 8},
  "validation_size": 600,
  "test_size": 800,
  "metaset_grid": {"kinds": ["feature_noise", "covariance_scale"], "severities": [1, 2, 4]},
  "test_sets": [[{"kind": "feature_noise", "severity": 3}],
                [{"kind": "rotation", "severity": 2}, {"kind": "covariance_scale", "severity": 5}]],
  "cascade": {"hidden": [16, 8], "epochs": 15}
})";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) : root(fs::temp_directory_path() / name) {
    fs::remove_all(root);
    fs::create_directories(root);
    write_file_atomic(root / "config.json", std::string_view(kSmallConfig));
  }
  ~Workspace() { fs::remove_all(root); }

  Result run(const std::string& command, const std::string& out_dir,
             std::vector<std::string> extra = {}) const {
    std::vector<std::string> args{"--config", (root / "config.json").string(), "--out",
                                  (root / out_dir).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    args.push_back(command);
    return run_cli(args);
  }
};

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::vector<fs::path> csv_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void full_pipeline(const Workspace& ws, const std::string& out_dir) {
  for (const std::string cmd : {"gen", "metasets", "train", "eval", "sweep", "report"}) {
    const auto r = ws.run(cmd, out_dir);
    INFO(cmd << ": " << r.err);
    REQUIRE(r.code == 0);
  }
}

}  // namespace

TEST_CASE("config parsing") {
  const auto config = parse_experiment_config(kSmallConfig);
  CHECK(config.seed == 3);
  CHECK(config.world.classes == 4);
  CHECK(config.cascade.classes == 4);
  CHECK(config.cascade.hidden == std::vector<std::size_t>{16, 8});
  CHECK(config.test_sets.size() == 2);
  CHECK(config.test_sets[1][0].kind == ShiftKind::rotation);
  CHECK(parse_experiment_config(to_json(config)).cascade == config.cascade);
  CHECK(to_json(parse_experiment_config(to_json(config))) == to_json(config));

  const auto defaults = parse_experiment_config("{}");
  CHECK(defaults.grid.kinds.size() == 3);
  CHECK(defaults.cascade.lambda == 0.4);
  CHECK(defaults.bins == 15);

  CHECK(error_code_of([] { parse_experiment_config(R"({"sed": 1})"); }) == Errc::config);
  CHECK(error_code_of([] { parse_experiment_config(R"({"world": {"clases": 4}})"); }) == Errc::config);
  CHECK(error_code_of([] { parse_experiment_config(R"({"cascade": {"lambda": 2}})"); }) == Errc::config);
  CHECK(error_code_of([] { parse_experiment_config("{not json"); }) == Errc::config);
  CHECK(error_code_of([] {
          const auto c = parse_experiment_config(R"({"test_sets": [[{"kind": "mean_drift", "severity": 4}]]})");
          make_metasets(c, make_world(c));
        }) == Errc::config);
}

TEST_CASE("run seeds and test recipes") {
  const auto s = run_seeds(7);
  CHECK(s.world == mix_seed(7, 1));
  CHECK(s.training == mix_seed(7, 6));
  const auto recipes = test_recipes(parse_experiment_config(kSmallConfig));
  REQUIRE(recipes.size() == 2);
  CHECK(recipes[0].name == "feature_noise_s3");
  CHECK(recipes[1].name == "rotation_s2+covariance_scale_s5");
  CHECK(comparison_methods().size() == 12);
  CHECK(comparison_methods().front() == "Base");
  CHECK(comparison_methods().back() == "Ours");
}

TEST_CASE("help lists exit codes and subcommands") {
  const auto r = run_cli({"--help"});
  CHECK(r.code == 0);
  for (const char* word : {"Exit codes", "missing input", "gen", "metasets", "train", "calibrate",
                           "eval", "sweep", "report"}) {
    CHECK(r.out.find(word) != std::string::npos);
  }
}

TEST_CASE("usage errors") {
  auto r = run_cli({});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.rfind("error code=usage exit=2", 0) == 0);
  r = run_cli({"--frobnicate", "gen"});
  CHECK(r.code == cli::kUsage);
  r = run_cli({"launch"});
  CHECK(r.code == cli::kUsage);
}

TEST_CASE("error exit codes") {
  Workspace ws("cascal_test_cli_errors");
  auto r = ws.run("eval", "empty");
  CHECK(r.code == cli::kMissingInput);
  CHECK(r.err.find("no test sets found") != std::string::npos);
  CHECK(line_count(r.err) == 1);

  r = ws.run("train", "empty");
  CHECK(r.code == cli::kMissingInput);

  r = ws.run("gen", "w", {"--bins", "0"});
  CHECK(r.code == cli::kConfig);
  r = ws.run("gen", "w", {"--ablate", "f_mu,bogus"});
  CHECK(r.code == cli::kConfig);

  write_file_atomic(ws.root / "bad.json", std::string_view(R"({"unknown": true})"));
  r = run_cli({"--config", (ws.root / "bad.json").string(), "gen"});
  CHECK(r.code == cli::kConfig);
  CHECK(r.err.find("code=config") != std::string::npos);

  r = run_cli({"--config", (ws.root / "nowhere.json").string(), "gen"});
  CHECK(r.code == cli::kMissingInput);

  REQUIRE(ws.run("gen", "w").code == 0);
  r = ws.run("calibrate", "w", {"--method", "Platt"});
  CHECK(r.code == cli::kConfig);

  write_file_atomic(ws.root / "w" / "tests" / "broken.lgts", std::string_view("LGTS"));
  r = ws.run("calibrate", "w", {"--method", "Base"});
  CHECK(r.code == cli::kInvalidData);
}

TEST_CASE("pipeline artifacts and byte-identical reruns") {
  Workspace ws("cascal_test_cli_pipeline");
  full_pipeline(ws, "a");
  const auto a = ws.root / "a";
  for (const char* path : {"config.json", "validation.lgts", "tests/feature_noise_s3.lgts",
                           "metasets/manifest.json", "metasets/feature_noise_s1.lgts", "model.cscd",
                           "train_loss.csv", "comparison.csv", "temperatures.csv", "sweep.csv",
                           "report.md", "reliability/Ours/feature_noise_s3.svg",
                           "reliability/TS-IR-P/feature_noise_s3.csv"}) {
    CHECK_MESSAGE(fs::exists(a / path), path);
  }

  const auto comparison = read_file_text(a / "comparison.csv");
  CHECK(comparison.rfind("method,test_set,ece,sce,accuracy,nll\n", 0) == 0);
  CHECK(line_count(comparison) == 1 + 12 * 2);
  for (const auto& m : comparison_methods()) CHECK(comparison.find("\n" + m + ",") != std::string::npos);

  const auto sweep = read_file_text(a / "sweep.csv");
  CHECK(sweep.rfind("lambda,test_set,ece\n", 0) == 0);
  CHECK(line_count(sweep) == 1 + 6 * 2);

  const auto loss = read_file_text(a / "train_loss.csv");
  CHECK(line_count(loss) == 1 + 15);
  CHECK(read_file_text(a / "report.md").find("Ours") != std::string::npos);

  for (const std::string method : {"Ours", "TS-P", "Base"}) {
    const auto r = ws.run("calibrate", "a", {"--method", method});
    REQUIRE(r.code == 0);
    const auto csv = read_file_text(a / "calibrated" / method / "feature_noise_s3.csv");
    CHECK(csv.rfind("index,pred,conf\n", 0) == 0);
    CHECK(line_count(csv) == 1 + 800);
  }
  CHECK(fs::exists(a / "calibrated" / "Ours" / "temperatures.csv"));
  CHECK(fs::exists(a / "calibrated" / "TS-P" / "calibrator.json"));

  full_pipeline(ws, "b");
  for (const std::string method : {"Ours", "TS-P", "Base"}) {
    REQUIRE(ws.run("calibrate", "b", {"--method", method}).code == 0);
  }
  const auto files = csv_files(a);
  CHECK(files == csv_files(ws.root / "b"));
  CHECK(files.size() > 20);
  for (const auto& f : files) {
    CHECK_MESSAGE(read_file_bytes(a / f) == read_file_bytes(ws.root / "b" / f), f.string());
  }
  CHECK(read_file_bytes(a / "model.cscd") == read_file_bytes(ws.root / "b" / "model.cscd"));
}
