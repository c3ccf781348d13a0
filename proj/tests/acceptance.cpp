// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cascal/baselines.hpp"
#include "cascal/cascade.hpp"
#include "cascal/experiment.hpp"
#include "cascal/io_util.hpp"
#include "cascal/logits_io.hpp"
#include "cascal/metrics.hpp"
#include "cli.hpp"
#include "support.hpp"

using namespace cascal;
using cascal::testing::random_table;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(const char* id, bool pass, const std::string& detail) {
  std::printf("%s %s %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

// Brute-force calibration errors: bins found by scanning the intervals
// (b/B, (b+1)/B], then per-bin sums, independent of the library code paths.
std::size_t scan_bin(double v, std::size_t bins) {
  if (v <= 0.0) return 0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (v > static_cast<double>(b) / bins && v <= static_cast<double>(b + 1) / bins) return b;
  }
  return bins - 1;
}

double brute_ece(const PredictionView& v, std::size_t bins) {
  std::vector<double> count(bins), conf(bins), hits(bins);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto b = scan_bin(v.conf()[i], bins);
    count[b] += 1.0;
    conf[b] += v.conf()[i];
    hits[b] += v.pred()[i] == v.labels()[i];
  }
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] > 0) total += count[b] / v.size() * std::abs(hits[b] / count[b] - conf[b] / count[b]);
  }
  return total;
}

double brute_sce(const PredictionView& v, std::size_t bins) {
  double total = 0.0;
  for (std::size_t c = 0; c < v.n_classes(); ++c) {
    std::vector<double> count(bins), conf(bins), hits(bins);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto b = scan_bin(v.probs()(i, c), bins);
      count[b] += 1.0;
      conf[b] += v.probs()(i, c);
      hits[b] += v.labels()[i] == c;
    }
    for (std::size_t b = 0; b < bins; ++b) {
      if (count[b] > 0) {
        total += count[b] / (static_cast<double>(v.size()) * v.n_classes()) *
                 std::abs(hits[b] / count[b] - conf[b] / count[b]);
      }
    }
  }
  return total;
}

void a1_metric_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::size_t> n_dist(1, 1000), c_dist(2, 10), b_dist(1, 30);
  double worst = 0.0;
  const int tables = 120;
  for (int rep = 0; rep < tables; ++rep) {
    const auto v = derive_predictions(random_table(rng, n_dist(rng), c_dist(rng), 2.5));
    for (std::size_t bins : {std::size_t{15}, b_dist(rng)}) {
      worst = std::max(worst, std::abs(ece(v, bins) - brute_ece(v, bins)));
      worst = std::max(worst, std::abs(sce(v, bins) - brute_sce(v, bins)));
    }
  }
  const double t = seconds_since(start);
  report("A1", worst <= 1e-12 && t < 10.0,
         "tables=" + std::to_string(tables) + " max_abs_diff=" + fmt("%.3e", worst) +
             " runtime_s=" + fmt("%.2f", t));
}

void a2_calibrated_world() {
  const auto start = Clock::now();
  WorldConfig wc;
  wc.overconfidence = 1.0;
  const auto world = sample_world(wc, 2002);
  const auto table = generate_split(world, 100000, std::nullopt, 2003, "iid");
  const double e = ece(derive_predictions(table), 15);
  const double t = seconds_since(start);
  report("A2", e < 0.02 && t < 30.0, "ece=" + fmt("%.5f", e) + " runtime_s=" + fmt("%.2f", t));
}

void a3_gradients() {
  const auto start = Clock::now();
  std::mt19937_64 rng(3003);
  std::normal_distribution<double> normal;

  // MLP: category-network input width for C = 10, narrower hidden layers.
  double mlp_worst = 0.0;
  for (int rep = 0; rep < 2; ++rep) {
    MlpNetwork net({630, 24, 12, 10}, 30 + rep);
    for (auto& p : net.parameters()) p += 0.05 * normal(rng);
    std::vector<double> x(630);
    for (auto& v : x) v = normal(rng);
    const auto loss = [](std::span<const double> out) {
      LossEval e;
      for (std::size_t k = 0; k < out.size(); ++k) {
        const double d = out[k] - 0.7;
        e.value += (1.0 + 0.1 * k) * d * d;
        e.output_grad.push_back(2.0 * (1.0 + 0.1 * k) * d);
      }
      return e;
    };
    mlp_worst = std::max(mlp_worst, grad_check(net, x, loss).max_relative_error);
  }

  // Cascade loss: temperature and network-parameter gradients of the
  // fixed-membership objective on shifted tables from a default world.
  double cascade_worst = 0.0;
  ExperimentConfig config;
  const auto world = make_world(config);
  for (int rep = 0; rep < 3; ++rep) {
    const auto table = generate_split(world, 1000, make_shift(ShiftKind::feature_noise, 2 + rep, rep), 40 + rep);
    auto cc = config.cascade;
    cc.hidden = {12, 8};
    CascadeModel model(cc, 50 + rep);
    for (auto* net : {&model.category_net(), &model.confidence_net()}) {
      for (auto& p : net->parameters()) p += 0.05 * normal(rng);
    }
    const FrozenCascadeLoss frozen(model, table);
    const auto at = frozen.evaluate(model);
    auto value = [&] { return frozen.evaluate(model).total; };
    cascade_worst = std::max(cascade_worst, compare_gradients(model.category_net().parameters(), value,
                                                              at.category_grad, 1e-6).max_relative_error);
    cascade_worst = std::max(cascade_worst, compare_gradients(model.confidence_net().parameters(), value,
                                                              at.confidence_grad, 1e-6).max_relative_error);
    auto t_cls = at.temperatures.t_cls;
    auto t_con = at.temperatures.t_con;
    auto t_value = [&] { return frozen.evaluate_temperatures(t_cls, t_con).total; };
    cascade_worst = std::max(cascade_worst, compare_gradients(t_cls, t_value, at.t_cls_grad, 1e-6).max_relative_error);
    cascade_worst = std::max(cascade_worst, compare_gradients(t_con, t_value, at.t_con_grad, 1e-6).max_relative_error);
  }
  const double t = seconds_since(start);
  report("A3", mlp_worst < 1e-4 && cascade_worst < 1e-3 && t < 60.0,
         "mlp_max_rel=" + fmt("%.3e", mlp_worst) + " cascade_max_rel=" + fmt("%.3e", cascade_worst) +
             " runtime_s=" + fmt("%.2f", t));
}

struct SeedRun {
  std::map<std::string, double> method_ece;  // mean over test sets
  std::vector<LogitsTable> tests;
  MetaSetCollection metasets;
  std::vector<TemperaturePair> temperatures;
  CascadeModel model;
};

double mean_test_ece(const CascadeModel& model, std::span<const LogitsTable> tests, std::size_t bins) {
  double total = 0.0;
  for (const auto& t : tests) total += ece(apply(model, t).view, bins);
  return total / static_cast<double>(tests.size());
}

SeedRun run_seed(const ExperimentConfig& base, std::uint64_t seed) {
  auto config = base;
  config.seed = seed;
  const auto world = make_world(config);
  const auto validation = make_validation(config, world);
  auto metasets = make_metasets(config, world);
  auto tests = make_test_sets(config, world);
  const auto baselines = fit_baselines(validation, metasets);
  auto trained = train_cascade(config, metasets);
  const auto comparison = compare_methods(baselines, &trained.model, tests, config.bins);
  std::map<std::string, double> sums;
  for (const auto& row : comparison.rows) sums[row.method] += row.ece / static_cast<double>(tests.size());
  return {std::move(sums), std::move(tests), std::move(metasets), comparison.cascade_temperatures,
          std::move(trained.model)};
}

void a4_accuracy(const CascadeModel& model) {
  std::mt19937_64 rng(4004);
  const int tables = 60;
  int violations = 0;
  std::size_t checks = 0;
  auto previous = random_table(rng, 500, 10, 3.0, "fit");
  for (int rep = 0; rep < tables; ++rep) {
    const auto table = random_table(rng, 200 + 20 * rep, 10, 1.0 + 0.1 * rep, "t");
    const double base = accuracy(derive_predictions(table));
    for (auto kind : {CalibratorKind::ts, CalibratorKind::ets, CalibratorKind::ir, CalibratorKind::irm,
                      CalibratorKind::ts_ir}) {
      violations += accuracy(apply(fit(kind, previous), table)) != base;
      ++checks;
    }
    violations += accuracy(apply(model, table).view) != base;
    ++checks;
    previous = table;
  }
  report("A4", violations == 0,
         "tables=" + std::to_string(tables) + " checks=" + std::to_string(checks) +
             " violations=" + std::to_string(violations));
}

std::vector<fs::path> csv_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool run_pipeline(const fs::path& out_dir, std::string& error) {
  for (const std::string cmd : {"gen", "metasets", "train", "eval", "sweep", "report"}) {
    std::ostringstream out, err;
    if (cli::run({"--seed", "1", "--out", out_dir.string(), cmd}, out, err) != 0) {
      error = cmd + ": " + err.str();
      return false;
    }
  }
  for (const std::string method : {"Ours", "TS-P", "IRM"}) {
    std::ostringstream out, err;
    if (cli::run({"--seed", "1", "--out", out_dir.string(), "--method", method, "calibrate"}, out, err) != 0) {
      error = "calibrate: " + err.str();
      return false;
    }
  }
  return true;
}

void a10_determinism() {
  const auto start = Clock::now();
  const auto root = fs::temp_directory_path() / "cascal_acceptance_a10";
  fs::remove_all(root);
  std::string error;
  bool identical = run_pipeline(root / "first", error) && run_pipeline(root / "second", error);
  std::size_t compared = 0;
  if (identical) {
    const auto files = csv_files(root / "first");
    identical = files == csv_files(root / "second") && !files.empty();
    for (const auto& f : files) {
      identical = identical && read_file_bytes(root / "first" / f) == read_file_bytes(root / "second" / f);
      ++compared;
    }
  }
  fs::remove_all(root);

  std::mt19937_64 rng(10010);
  std::uniform_int_distribution<std::size_t> n_dist(1, 500), c_dist(2, 20);
  int round_trips = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto t = random_table(rng, n_dist(rng), c_dist(rng), 4.0, "rt");
    const auto bytes = encode_lgts(t);
    round_trips += decode_lgts(bytes, "rt") == t && encode_lgts(decode_lgts(bytes, "rt")) == bytes;
  }
  report("A10", identical && round_trips == 100,
         "csv_files_compared=" + std::to_string(compared) + " identical=" + (identical ? "yes" : "no") +
             " lgts_round_trips=" + std::to_string(round_trips) + "/100 runtime_s=" + fmt("%.1f", seconds_since(start)) +
             (error.empty() ? "" : " error=" + error));
}

}  // namespace

int main() {
  a1_metric_oracle();
  a2_calibrated_world();
  a3_gradients();

  // Default synthetic benchmark over five seeds; reused by A4-A9.
  const ExperimentConfig config;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto main_start = Clock::now();
  std::vector<SeedRun> runs;
  for (auto s : seeds) runs.push_back(run_seed(config, s));
  const double main_seconds = seconds_since(main_start);
  auto seed_mean = [&](const std::string& method) {
    double total = 0.0;
    for (const auto& r : runs) total += r.method_ece.at(method);
    return total / static_cast<double>(runs.size());
  };
  const double base = seed_mean("Base");
  const double ts = seed_mean("TS");
  const double ts_p = seed_mean("TS-P");
  const double ours = seed_mean("Ours");

  a4_accuracy(runs.front().model);

  const double reduction = 1.0 - ours / base;
  report("A5", reduction >= 0.30 && ours <= ts && main_seconds < 300.0,
         "base=" + fmt("%.5f", base) + " ts=" + fmt("%.5f", ts) + " ours=" + fmt("%.5f", ours) +
             " relative_reduction=" + fmt("%.3f", reduction) + " runtime_s=" + fmt("%.1f", main_seconds));

  report("A6", ts_p <= ts, "ts=" + fmt("%.5f", ts) + " ts_p=" + fmt("%.5f", ts_p));

  // A7: each single ablation, retrained on the same meta-sets and seeds.
  const char* ablations[] = {"f_mu", "f_cov", "t_cls", "z_mu", "z_cov", "t_con"};
  bool a7 = true;
  std::string a7_detail = "full=" + fmt("%.5f", ours);
  for (const char* name : ablations) {
    auto cfg = config;
    cfg.cascade.ablation = *parse_ablation(name);
    double total = 0.0;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      cfg.seed = seeds[k];
      const auto trained = train_cascade(cfg, runs[k].metasets);
      total += mean_test_ece(trained.model, runs[k].tests, cfg.bins);
    }
    const double variant = total / static_cast<double>(seeds.size());
    const bool ok = ours <= variant * 1.10;
    a7 = a7 && ok;
    a7_detail += std::string(" no_") + name + "=" + fmt("%.5f", variant) + (ok ? "" : "(!)");
  }
  report("A7", a7, a7_detail);

  // A8: lambda grid; 0.4 is the default model trained above.
  bool a8 = true;
  double lo = 1.0, hi = 0.0;
  std::string a8_detail;
  for (double lambda : config.sweep_lambdas) {
    double value = 0.0;
    if (lambda == config.cascade.lambda) {
      value = ours;
    } else {
      auto cfg = config;
      cfg.cascade.lambda = lambda;
      for (std::size_t k = 0; k < seeds.size(); ++k) {
        cfg.seed = seeds[k];
        const auto trained = train_cascade(cfg, runs[k].metasets);
        value += mean_test_ece(trained.model, runs[k].tests, cfg.bins) / static_cast<double>(seeds.size());
      }
    }
    a8 = a8 && value < base;
    lo = std::min(lo, value);
    hi = std::max(hi, value);
    a8_detail += fmt("lambda=%.1f", lambda) + ":" + fmt("%.5f", value) + " ";
  }
  report("A8", a8, a8_detail + "spread=" + fmt("%.5f", hi - lo) + " base=" + fmt("%.5f", base));

  // A9: feature_noise_s3 against rotation_s2+feature_noise_s2 on seed 1.
  const auto& temps = runs.front().temperatures;
  double diff = 0.0;
  for (std::size_t k = 0; k < temps[0].t_cls.size(); ++k) {
    diff = std::max(diff, std::abs(temps[0].t_cls[k] - temps[3].t_cls[k]));
  }
  for (std::size_t k = 0; k < temps[0].t_con.size(); ++k) {
    diff = std::max(diff, std::abs(temps[0].t_con[k] - temps[3].t_con[k]));
  }
  report("A9", diff > 1e-6,
         runs.front().tests[0].name() + " vs " + runs.front().tests[3].name() +
             " max_temperature_diff=" + fmt("%.6f", diff));

  a10_determinism();

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
