#include "cascal/experiment.hpp"

#include <algorithm>
#include <initializer_list>
#include <nlohmann/json.hpp>

#include "cascal/error.hpp"
#include "cascal/metrics.hpp"
#include "cascal/report.hpp"

namespace cascal {
namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) raise(Errc::config, where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      raise(Errc::config, "unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& into, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const json::exception&) {
    raise(Errc::config, std::string("bad value for '") + key + "' in " + where);
  }
}

ShiftKind read_kind(const json& value, const std::string& where) {
  if (!value.is_string()) raise(Errc::config, "shift kind in " + where + " must be a string");
  const auto kind = parse_shift_kind(value.get<std::string>());
  if (!kind) raise(Errc::config, "unknown shift kind '" + value.get<std::string>() + "' in " + where);
  return *kind;
}

ShiftSpec read_shift(const json& obj, const std::string& where) {
  check_keys(obj, {"kind", "severity"}, where);
  if (!obj.contains("kind") || !obj.contains("severity")) {
    raise(Errc::config, where + " needs both 'kind' and 'severity'");
  }
  ShiftSpec spec{read_kind(obj.at("kind"), where), 0};
  read(obj, "severity", spec.severity, where);
  if (spec.severity < 1 || spec.severity > 5) raise(Errc::config, "severity in " + where + " must be 1..5");
  return spec;
}

void read_world(const json& obj, WorldConfig& w) {
  const std::string where = "world";
  check_keys(obj, {"classes", "dims", "noise_scale", "mean_scale", "min_separation", "prior_spread",
                   "overconfidence"},
             where);
  read(obj, "classes", w.classes, where);
  read(obj, "dims", w.dims, where);
  read(obj, "noise_scale", w.noise_scale, where);
  read(obj, "mean_scale", w.mean_scale, where);
  read(obj, "min_separation", w.min_separation, where);
  read(obj, "prior_spread", w.prior_spread, where);
  read(obj, "overconfidence", w.overconfidence, where);
}

void read_cascade(const json& obj, CascadeConfig& c) {
  const std::string where = "cascade";
  check_keys(obj, {"lambda", "levels", "hidden", "t_min", "t_max", "loss_bins", "normalizer_floor",
                   "learning_rate", "beta1", "beta2", "epsilon", "epochs", "thresholds", "ablate"},
             where);
  read(obj, "lambda", c.lambda, where);
  read(obj, "levels", c.levels, where);
  read(obj, "hidden", c.hidden, where);
  read(obj, "t_min", c.t_min, where);
  read(obj, "t_max", c.t_max, where);
  read(obj, "loss_bins", c.loss_bins, where);
  read(obj, "normalizer_floor", c.normalizer_floor, where);
  read(obj, "learning_rate", c.adam.learning_rate, where);
  read(obj, "beta1", c.adam.beta1, where);
  read(obj, "beta2", c.adam.beta2, where);
  read(obj, "epsilon", c.adam.epsilon, where);
  read(obj, "epochs", c.epochs, where);
  if (obj.contains("thresholds")) {
    std::vector<double> t;
    read(obj, "thresholds", t, where);
    if (t.size() != 2 || !(t[0] < t[1])) raise(Errc::config, "cascade.thresholds must be [low_mid, mid_high]");
    c.thresholds = {t[0], t[1]};
  }
  if (obj.contains("ablate")) {
    std::string list;
    read(obj, "ablate", list, where);
    const auto flags = parse_ablation(list);
    if (!flags) raise(Errc::config, "unknown ablation flag in '" + list + "'");
    c.ablation = *flags;
  }
}

std::string join_labels(std::span<const ShiftTransform> transforms) {
  std::string name;
  for (const auto& t : transforms) {
    if (!name.empty()) name += '+';
    name += t.label();
  }
  return name;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    raise(Errc::config, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig config;
  const std::string where = "config";
  check_keys(doc, {"seed", "out", "world", "validation_size", "test_size", "metaset_grid", "test_sets",
                   "cascade", "bins", "sweep_lambdas", "method"},
             where);
  read(doc, "seed", config.seed, where);
  read(doc, "out", config.out, where);
  if (doc.contains("world")) read_world(doc.at("world"), config.world);
  read(doc, "validation_size", config.validation_size, where);
  read(doc, "test_size", config.test_size, where);
  if (doc.contains("metaset_grid")) {
    const auto& g = doc.at("metaset_grid");
    check_keys(g, {"kinds", "severities"}, "metaset_grid");
    if (g.contains("kinds")) {
      if (!g.at("kinds").is_array()) raise(Errc::config, "metaset_grid.kinds must be an array");
      config.grid.kinds.clear();
      for (const auto& k : g.at("kinds")) config.grid.kinds.push_back(read_kind(k, "metaset_grid"));
    }
    read(g, "severities", config.grid.severities, "metaset_grid");
    for (int s : config.grid.severities) {
      if (s < 1 || s > 5) raise(Errc::config, "metaset_grid severities must be 1..5");
    }
  }
  if (doc.contains("test_sets")) {
    const auto& list = doc.at("test_sets");
    if (!list.is_array()) raise(Errc::config, "test_sets must be an array");
    config.test_sets.clear();
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string at = "test_sets[" + std::to_string(k) + "]";
      const auto& entry = list[k];
      if (!entry.is_array() || entry.empty()) raise(Errc::config, at + " must be a nonempty array of shifts");
      std::vector<ShiftSpec> shifts;
      for (const auto& s : entry) shifts.push_back(read_shift(s, at));
      config.test_sets.push_back(std::move(shifts));
    }
  }
  if (doc.contains("cascade")) read_cascade(doc.at("cascade"), config.cascade);
  config.cascade.classes = config.world.classes;
  read(doc, "bins", config.bins, where);
  read(doc, "sweep_lambdas", config.sweep_lambdas, where);
  read(doc, "method", config.method, where);

  if (config.world.classes < 2) raise(Errc::config, "world.classes must be >= 2");
  if (config.world.dims < 2) raise(Errc::config, "world.dims must be >= 2");
  if (config.validation_size < 1 || config.test_size < 1) raise(Errc::config, "split sizes must be >= 1");
  if (config.bins < 1) raise(Errc::config, "bins must be >= 1");
  for (double l : config.sweep_lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) raise(Errc::config, "sweep_lambdas must lie in [0, 1]");
  }
  if (!(config.cascade.lambda >= 0.0 && config.cascade.lambda <= 1.0)) {
    raise(Errc::config, "cascade.lambda must lie in [0, 1]");
  }
  return config;
}

std::string to_json(const ExperimentConfig& config) {
  json doc;
  doc["seed"] = config.seed;
  doc["out"] = config.out;
  const auto& w = config.world;
  doc["world"] = {{"classes", w.classes},           {"dims", w.dims},
                  {"noise_scale", w.noise_scale},   {"mean_scale", w.mean_scale},
                  {"min_separation", w.min_separation}, {"prior_spread", w.prior_spread},
                  {"overconfidence", w.overconfidence}};
  doc["validation_size"] = config.validation_size;
  doc["test_size"] = config.test_size;
  json kinds = json::array();
  for (auto k : config.grid.kinds) kinds.push_back(std::string(to_string(k)));
  doc["metaset_grid"] = {{"kinds", kinds}, {"severities", config.grid.severities}};
  json tests = json::array();
  for (const auto& set : config.test_sets) {
    json shifts = json::array();
    for (const auto& s : set) shifts.push_back({{"kind", std::string(to_string(s.kind))}, {"severity", s.severity}});
    tests.push_back(shifts);
  }
  doc["test_sets"] = tests;
  const auto& c = config.cascade;
  doc["cascade"] = {{"lambda", c.lambda},
                    {"levels", c.levels},
                    {"hidden", c.hidden},
                    {"t_min", c.t_min},
                    {"t_max", c.t_max},
                    {"loss_bins", c.loss_bins},
                    {"normalizer_floor", c.normalizer_floor},
                    {"learning_rate", c.adam.learning_rate},
                    {"beta1", c.adam.beta1},
                    {"beta2", c.adam.beta2},
                    {"epsilon", c.adam.epsilon},
                    {"epochs", c.epochs},
                    {"thresholds", {c.thresholds.low_mid, c.thresholds.mid_high}},
                    {"ablate", ablation_list(c.ablation)}};
  doc["bins"] = config.bins;
  doc["sweep_lambdas"] = config.sweep_lambdas;
  doc["method"] = config.method;
  return doc.dump(2) + "\n";
}

RunSeeds run_seeds(std::uint64_t seed) noexcept {
  return {mix_seed(seed, 1), mix_seed(seed, 2), mix_seed(seed, 3),
          mix_seed(seed, 4), mix_seed(seed, 5), mix_seed(seed, 6)};
}

SyntheticWorld make_world(const ExperimentConfig& config) {
  return sample_world(config.world, run_seeds(config.seed).world);
}

LogitsTable make_validation(const ExperimentConfig& config, const SyntheticWorld& world) {
  return generate_split(world, config.validation_size, std::span<const ShiftTransform>{},
                        run_seeds(config.seed).validation, "validation");
}

std::vector<TestRecipe> test_recipes(const ExperimentConfig& config) {
  const auto base = run_seeds(config.seed).tests;
  std::vector<TestRecipe> out;
  for (std::size_t k = 0; k < config.test_sets.size(); ++k) {
    const auto seed = mix_seed(base, k);
    TestRecipe r;
    for (std::size_t j = 0; j < config.test_sets[k].size(); ++j) {
      const auto& s = config.test_sets[k][j];
      r.transforms.push_back(make_shift(s.kind, s.severity, mix_seed(seed, j + 1)));
    }
    r.name = join_labels(r.transforms);
    r.sample_seed = mix_seed(seed, 0);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LogitsTable> make_test_sets(const ExperimentConfig& config, const SyntheticWorld& world) {
  std::vector<LogitsTable> out;
  for (const auto& r : test_recipes(config)) {
    out.push_back(generate_split(world, config.test_size, r.transforms, r.sample_seed, r.name));
  }
  return out;
}

MetaSetCollection make_metasets(const ExperimentConfig& config, const SyntheticWorld& world) {
  std::vector<std::vector<ShiftTransform>> held_out;
  for (const auto& r : test_recipes(config)) held_out.push_back(r.transforms);
  const auto seeds = run_seeds(config.seed);
  return build_metasets(world, {config.validation_size, seeds.validation}, config.grid, seeds.metasets,
                        held_out);
}

TrainResult train_cascade(const ExperimentConfig& config, const MetaSetCollection& metasets,
                          RepresentationCache* cache) {
  auto cc = config.cascade;
  cc.classes = metasets.n_classes();
  const auto seeds = run_seeds(config.seed);
  return train(CascadeModel(cc, seeds.model), metasets, cc.epochs, seeds.training, cache);
}

std::vector<Calibrator> fit_baselines(const LogitsTable& validation, const MetaSetCollection& metasets) {
  constexpr CalibratorKind kinds[] = {CalibratorKind::ts, CalibratorKind::ets, CalibratorKind::ir,
                                      CalibratorKind::irm, CalibratorKind::ts_ir};
  std::vector<Calibrator> out;
  for (auto k : kinds) out.push_back(fit(k, validation));
  const auto pooled = metasets.tables();
  for (auto k : kinds) out.push_back(fit_pooled(k, pooled, FitSource::perturbed));
  return out;
}

std::vector<std::string> comparison_methods() {
  return {"Base", "TS", "ETS", "IR", "IRM", "TS-IR", "TS-P", "ETS-P", "IR-P", "IRM-P", "TS-IR-P", "Ours"};
}

Comparison compare_methods(std::span<const Calibrator> baselines, const CascadeModel* model,
                           std::span<const LogitsTable> tests, std::size_t bins,
                           RepresentationCache* cache) {
  Comparison out;
  auto add = [&](const std::string& method, const LogitsTable& test, PredictionView view) {
    out.rows.push_back({method, test.name(), ece(view, bins), sce(view, bins), accuracy(view), nll(view)});
    out.views.push_back(std::move(view));
  };
  for (const auto& t : tests) add("Base", t, derive_predictions(t));
  for (const auto& cal : baselines) {
    for (const auto& t : tests) add(cal.method_name(), t, apply(cal, t));
  }
  if (model) {
    for (const auto& t : tests) {
      auto result = apply(*model, t, cache);
      out.cascade_temperatures.push_back(std::move(result.temperatures));
      add("Ours", t, std::move(result.view));
    }
  }
  return out;
}

std::string comparison_csv(std::span<const ComparisonRow> rows) {
  std::string out = "method,test_set,ece,sce,accuracy,nll\n";
  for (const auto& r : rows) {
    out += r.method + ',' + r.test_set + ',' + format_fixed(r.ece, 8) + ',' + format_fixed(r.sce, 8) + ',' +
           format_fixed(r.accuracy, 8) + ',' + format_fixed(r.nll, 8) + '\n';
  }
  return out;
}

std::vector<SweepRow> sweep_lambda(const ExperimentConfig& config, const MetaSetCollection& metasets,
                                   std::span<const LogitsTable> tests, RepresentationCache* cache) {
  std::vector<SweepRow> rows;
  for (double lambda : config.sweep_lambdas) {
    auto cfg = config;
    cfg.cascade.lambda = lambda;
    const auto trained = train_cascade(cfg, metasets, cache);
    for (const auto& t : tests) {
      rows.push_back({lambda, t.name(), ece(apply(trained.model, t, cache).view, config.bins)});
    }
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "lambda,test_set,ece\n";
  for (const auto& r : rows) out += format_fixed(r.lambda, 2) + ',' + r.test_set + ',' + format_fixed(r.ece, 8) + '\n';
  return out;
}

}  // namespace cascal
