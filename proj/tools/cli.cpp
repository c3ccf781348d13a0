#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "cascal/baselines.hpp"
#include "cascal/cascade.hpp"
#include "cascal/error.hpp"
#include "cascal/experiment.hpp"
#include "cascal/io_util.hpp"
#include "cascal/logits_io.hpp"
#include "cascal/metrics.hpp"
#include "cascal/report.hpp"
#include "cascal/representation.hpp"

namespace cascal::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  usage error (bad flags or subcommand)\n"
    "  3  configuration error (invalid config file, flag value or method name)\n"
    "  4  missing input (upstream artifact absent, no test sets found)\n"
    "  5  invalid data (malformed .lgts file or model checkpoint)\n"
    "  6  class-count mismatch between inputs\n"
    "  7  I/O failure\n"
    "\n"
    "Artifacts under --out: validation.lgts, tests/*.lgts (gen); metasets/ (metasets);\n"
    "model.cscd, train_loss.csv (train); calibrated/<method>/ (calibrate);\n"
    "comparison.csv, reliability/, temperatures.csv (eval); sweep.csv (sweep); report.md (report).\n";

struct Failure {
  int exit_code;
  std::string code;
  std::string message;
};

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::config:
    case Errc::invalid_argument: return kConfig;
    case Errc::missing_input:
    case Errc::too_few_members: return kMissingInput;
    case Errc::invalid_input:
    case Errc::bad_magic:
    case Errc::version_mismatch:
    case Errc::truncated_payload:
    case Errc::label_out_of_range:
    case Errc::corrupt_checkpoint:
    case Errc::kind_mismatch: return kInvalidData;
    case Errc::dimension_mismatch:
    case Errc::inconsistent_classes: return kClassMismatch;
    case Errc::io: return kIo;
  }
  return kInternal;
}

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> bins;
  std::optional<double> lambda;
  std::optional<std::string> method;
  std::optional<std::string> ablate;
};

class Run {
 public:
  Run(ExperimentConfig config, std::ostream& out) : config_(std::move(config)), dir_(config_.out), out_(out) {}

  const ExperimentConfig& config() const { return config_; }
  const fs::path& dir() const { return dir_; }

  void emit(const fs::path& path, std::string_view text) {
    write_file_atomic(path, text);
    out_ << path.string() << '\n';
  }
  void emit(const fs::path& path, std::span<const std::uint8_t> bytes) {
    write_file_atomic(path, bytes);
    out_ << path.string() << '\n';
  }
  void echo(const fs::path& path) { out_ << path.string() << '\n'; }
  void emit_table(const fs::path& path, const LogitsTable& table) {
    write_logits_file(table, path);
    out_ << path.string() << '\n';
  }

  RepresentationCache& cache() {
    if (!cache_) cache_.emplace(dir_ / "cache");
    return *cache_;
  }

  std::vector<LogitsTable> tests() const {
    const auto tests_dir = dir_ / "tests";
    std::vector<fs::path> files;
    if (fs::is_directory(tests_dir)) {
      for (const auto& entry : fs::directory_iterator(tests_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".lgts") files.push_back(entry.path());
      }
    }
    if (files.empty()) raise(Errc::missing_input, "no test sets found in '" + tests_dir.string() + "'");
    std::sort(files.begin(), files.end());
    std::vector<LogitsTable> out;
    for (const auto& f : files) out.push_back(read_logits_file(f));
    return out;
  }

  LogitsTable validation() const { return read_logits_file(dir_ / "validation.lgts"); }
  MetaSetCollection metasets() const { return load_metaset_dir(dir_ / "metasets"); }
  CascadeModel model() const { return CascadeModel::deserialize(read_file_bytes(dir_ / "model.cscd")); }

 private:
  ExperimentConfig config_;
  fs::path dir_;
  std::ostream& out_;
  std::optional<RepresentationCache> cache_;
};

std::string predictions_csv(const PredictionView& view) {
  std::string out = "index,pred,conf\n";
  for (std::size_t i = 0; i < view.size(); ++i) {
    out += std::to_string(i) + ',' + std::to_string(view.pred()[i]) + ',' + format_fixed(view.conf()[i], 8) + '\n';
  }
  return out;
}

std::string temperatures_csv(std::span<const std::string> names, std::span<const TemperaturePair> pairs) {
  std::string out = "test_set,stage,index,temperature\n";
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    for (std::size_t c = 0; c < pairs[k].t_cls.size(); ++c) {
      out += names[k] + ",t_cls," + std::to_string(c) + ',' + format_fixed(pairs[k].t_cls[c], 8) + '\n';
    }
    for (std::size_t m = 0; m < pairs[k].t_con.size(); ++m) {
      out += names[k] + ",t_con," + std::to_string(m) + ',' + format_fixed(pairs[k].t_con[m], 8) + '\n';
    }
  }
  return out;
}

void cmd_gen(Run& run) {
  const auto world = make_world(run.config());
  fs::create_directories(run.dir() / "tests");
  run.emit(run.dir() / "config.json", to_json(run.config()));
  run.emit_table(run.dir() / "validation.lgts", make_validation(run.config(), world));
  for (const auto& t : make_test_sets(run.config(), world)) {
    run.emit_table(run.dir() / "tests" / (t.name() + ".lgts"), t);
  }
}

void cmd_metasets(Run& run) {
  const auto world = make_world(run.config());
  const auto collection = make_metasets(run.config(), world);
  const auto dir = run.dir() / "metasets";
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".lgts") fs::remove(entry.path());
    }
  }
  save_metaset_dir(collection, dir);
  for (const auto& m : collection.members()) run.echo(dir / (m.table.name() + ".lgts"));
  run.echo(dir / "manifest.json");
}

void cmd_train(Run& run) {
  const auto collection = run.metasets();
  const auto result = train_cascade(run.config(), collection, &run.cache());
  run.emit(run.dir() / "model.cscd", result.model.serialize());
  std::string loss = "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
    loss += std::to_string(e + 1) + ',' + format_fixed(result.loss_history[e], 10) + '\n';
  }
  run.emit(run.dir() / "train_loss.csv", loss);
}

void cmd_calibrate(Run& run) {
  const std::string method = run.config().method;
  const auto tests = run.tests();
  const auto out_dir = run.dir() / "calibrated" / method;
  fs::create_directories(out_dir);
  if (method == "Ours") {
    const auto model = run.model();
    std::vector<std::string> names;
    std::vector<TemperaturePair> pairs;
    for (const auto& t : tests) {
      auto result = apply(model, t, &run.cache());
      run.emit(out_dir / (t.name() + ".csv"), predictions_csv(result.view));
      names.push_back(t.name());
      pairs.push_back(std::move(result.temperatures));
    }
    run.emit(out_dir / "temperatures.csv", temperatures_csv(names, pairs));
    return;
  }
  if (method == "Base") {
    for (const auto& t : tests) run.emit(out_dir / (t.name() + ".csv"), predictions_csv(derive_predictions(t)));
    return;
  }
  std::string_view name = method;
  const bool perturbed = name.size() > 2 && name.substr(name.size() - 2) == "-P";
  if (perturbed) name.remove_suffix(2);
  const auto kind = parse_calibrator_kind(name);
  if (!kind) {
    raise(Errc::config, "unknown method '" + method +
                            "' (expected Base, TS, ETS, IR, IRM, TS-IR, a -P variant, or Ours)");
  }
  const auto cal = perturbed ? fit_pooled(*kind, run.metasets().tables(), FitSource::perturbed)
                             : fit(*kind, run.validation());
  run.emit(out_dir / "calibrator.json", to_json(cal));
  for (const auto& t : tests) run.emit(out_dir / (t.name() + ".csv"), predictions_csv(apply(cal, t)));
}

void cmd_eval(Run& run) {
  const auto tests = run.tests();
  const auto validation = run.validation();
  const auto collection = run.metasets();
  const auto model = run.model();
  const auto baselines = fit_baselines(validation, collection);
  const std::size_t bins = run.config().bins;
  const auto comparison = compare_methods(baselines, &model, tests, bins, &run.cache());
  run.emit(run.dir() / "comparison.csv", comparison_csv(comparison.rows));
  for (std::size_t r = 0; r < comparison.rows.size(); ++r) {
    const auto& row = comparison.rows[r];
    const auto dir = run.dir() / "reliability" / row.method;
    fs::create_directories(dir);
    const auto stats = reliability_bins(comparison.views[r], bins);
    run.emit(dir / (row.test_set + ".csv"), bins_to_csv(stats));
    run.emit(dir / (row.test_set + ".svg"),
             reliability_svg(stats, row.method + " / " + row.test_set + "  ECE " + format_fixed(100.0 * row.ece, 2) + "%"));
  }
  std::vector<std::string> names;
  for (const auto& t : tests) names.push_back(t.name());
  run.emit(run.dir() / "temperatures.csv", temperatures_csv(names, comparison.cascade_temperatures));
}

void cmd_sweep(Run& run) {
  const auto tests = run.tests();
  const auto collection = run.metasets();
  const auto rows = sweep_lambda(run.config(), collection, tests, &run.cache());
  run.emit(run.dir() / "sweep.csv", sweep_csv(rows));
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file_text(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_number(const std::string& text, const fs::path& path) {
  try {
    return std::stod(text);
  } catch (const std::exception&) {
    raise(Errc::invalid_input, "non-numeric cell '" + text + "' in '" + path.string() + "'");
  }
}

void cmd_report(Run& run) {
  const auto comparison_path = run.dir() / "comparison.csv";
  const auto rows = read_csv(comparison_path);
  std::vector<std::string> methods, tests;
  std::map<std::pair<std::string, std::string>, std::pair<double, double>> cell;
  for (const auto& r : rows) {
    if (r.size() != 6) raise(Errc::invalid_input, "'" + comparison_path.string() + "' has a malformed row");
    if (std::find(methods.begin(), methods.end(), r[0]) == methods.end()) methods.push_back(r[0]);
    if (std::find(tests.begin(), tests.end(), r[1]) == tests.end()) tests.push_back(r[1]);
    cell[{r[0], r[1]}] = {parse_number(r[2], comparison_path), parse_number(r[3], comparison_path)};
  }
  std::string md = "# Calibration report\n\nECE (%) at " + std::to_string(run.config().bins) +
                   " bins, lower is better.\n\n| method |";
  for (const auto& t : tests) md += ' ' + t + " |";
  md += " mean | mean SCE (%) |\n|---|";
  for (std::size_t k = 0; k < tests.size() + 2; ++k) md += "---:|";
  md += '\n';
  for (const auto& m : methods) {
    md += "| " + m + " |";
    double ece_sum = 0.0, sce_sum = 0.0;
    for (const auto& t : tests) {
      const auto it = cell.find({m, t});
      if (it == cell.end()) {
        md += " - |";
        continue;
      }
      ece_sum += it->second.first;
      sce_sum += it->second.second;
      md += ' ' + format_fixed(100.0 * it->second.first, 2) + " |";
    }
    const double n = static_cast<double>(tests.size());
    md += ' ' + format_fixed(100.0 * ece_sum / n, 2) + " | " + format_fixed(100.0 * sce_sum / n, 3) + " |\n";
  }

  const auto sweep_path = run.dir() / "sweep.csv";
  if (fs::exists(sweep_path)) {
    std::vector<std::pair<std::string, std::pair<double, int>>> by_lambda;
    for (const auto& r : read_csv(sweep_path)) {
      if (r.size() != 3) raise(Errc::invalid_input, "'" + sweep_path.string() + "' has a malformed row");
      auto it = std::find_if(by_lambda.begin(), by_lambda.end(), [&](const auto& e) { return e.first == r[0]; });
      if (it == by_lambda.end()) {
        by_lambda.push_back({r[0], {0.0, 0}});
        it = std::prev(by_lambda.end());
      }
      it->second.first += parse_number(r[2], sweep_path);
      ++it->second.second;
    }
    md += "\n## Fusion coefficient sweep\n\n| lambda | mean ECE (%) |\n|---|---:|\n";
    double lo = 1e300, hi = -1e300;
    for (const auto& [lambda, acc] : by_lambda) {
      const double mean = acc.first / acc.second;
      lo = std::min(lo, mean);
      hi = std::max(hi, mean);
      md += "| " + lambda + " | " + format_fixed(100.0 * mean, 2) + " |\n";
    }
    if (!by_lambda.empty()) md += "\nSpread (max - min): " + format_fixed(100.0 * (hi - lo), 2) + "%\n";
  }
  run.emit(run.dir() / "report.md", md);
}

ExperimentConfig resolve_config(const Flags& flags) {
  ExperimentConfig config = flags.config_path.empty()
                                ? ExperimentConfig{}
                                : parse_experiment_config(read_file_text(flags.config_path));
  if (flags.seed) config.seed = *flags.seed;
  if (flags.out) config.out = *flags.out;
  if (flags.bins) {
    if (*flags.bins < 1) raise(Errc::config, "--bins must be >= 1");
    config.bins = *flags.bins;
  }
  if (flags.lambda) {
    if (!(*flags.lambda >= 0.0 && *flags.lambda <= 1.0)) raise(Errc::config, "--lambda must lie in [0, 1]");
    config.cascade.lambda = *flags.lambda;
  }
  if (flags.method) config.method = *flags.method;
  if (flags.ablate) {
    const auto ablation = parse_ablation(*flags.ablate);
    if (!ablation) raise(Errc::config, "unknown ablation flag in '" + *flags.ablate + "'");
    config.cascade.ablation = *ablation;
  }
  return config;
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Post-hoc calibration with cascaded temperature regression over meta-sets", "cascal"};
  app.footer(kExitCodeHelp);
  Flags flags;
  app.add_option("--config", flags.config_path, "experiment config (JSON)");
  app.add_option("--seed", flags.seed, "master seed");
  app.add_option("--out", flags.out, "output directory");
  app.add_option("--bins", flags.bins, "ECE bin count for eval, sweep and report");
  app.add_option("--lambda", flags.lambda, "fusion coefficient for train");
  app.add_option("--method", flags.method, "method for calibrate (Base, TS, ..., TS-IR-P, Ours)");
  app.add_option("--ablate", flags.ablate, "comma list of f_mu,f_cov,t_cls,z_mu,z_cov,t_con to disable");
  app.require_subcommand(1, 1);

  using Command = void (*)(Run&);
  const std::pair<const char*, std::pair<const char*, Command>> commands[] = {
      {"gen", {"write the validation split and held-out test sets", cmd_gen}},
      {"metasets", {"build the meta-set collection", cmd_metasets}},
      {"train", {"train the cascaded temperature regressor", cmd_train}},
      {"calibrate", {"calibrate the test sets with --method", cmd_calibrate}},
      {"eval", {"compare every method on every test set", cmd_eval}},
      {"sweep", {"retrain over the lambda grid and record test ECE", cmd_sweep}},
      {"report", {"summarize comparison.csv and sweep.csv as Markdown", cmd_report}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first)->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error code=usage exit=" << kUsage << " message=" << one_line(e.what()) << '\n';
    return kUsage;
  }

  std::optional<Failure> failure;
  try {
    Run run(resolve_config(flags), out);
    for (const auto& [name, entry] : commands) {
      if (app.got_subcommand(name)) entry.second(run);
    }
  } catch (const Error& e) {
    const std::string code(to_string(e.code()));
    std::string message = e.what();
    if (message.rfind(code + ": ", 0) == 0) message.erase(0, code.size() + 2);
    failure = Failure{exit_code_for(e.code()), code, message};
  } catch (const fs::filesystem_error& e) {
    failure = Failure{kIo, "io", e.what()};
  } catch (const std::exception& e) {
    failure = Failure{kInternal, "internal", e.what()};
  }
  if (failure) {
    err << "error code=" << failure->code << " exit=" << failure->exit_code
        << " message=" << one_line(failure->message) << '\n';
    return failure->exit_code;
  }
  return kOk;
}

}  // namespace cascal::cli
