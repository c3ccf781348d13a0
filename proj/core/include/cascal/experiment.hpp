#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cascal/baselines.hpp"
#include "cascal/cascade.hpp"
#include "cascal/metaset.hpp"

namespace cascal {

struct ShiftSpec {
  ShiftKind kind = ShiftKind::feature_noise;
  int severity = 1;
  bool operator==(const ShiftSpec&) const = default;
};

// One run, end to end. Parsed from a single JSON document; every key is
// optional and unknown keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out = "run";
  WorldConfig world;
  std::size_t validation_size = 5000;
  std::size_t test_size = 10000;
  TransformGrid grid{{ShiftKind::feature_noise, ShiftKind::mean_drift, ShiftKind::covariance_scale},
                     {1, 2, 4, 5}};
  // Each test set applies its shifts in order; severities or combinations
  // must not coincide with a grid point.
  std::vector<std::vector<ShiftSpec>> test_sets{
      {{ShiftKind::feature_noise, 3}},
      {{ShiftKind::covariance_scale, 3}},
      {{ShiftKind::mean_drift, 3}},
      {{ShiftKind::rotation, 2}, {ShiftKind::feature_noise, 2}},
  };
  CascadeConfig cascade;
  std::size_t bins = 15;
  std::vector<double> sweep_lambdas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::string method = "Ours";
};

ExperimentConfig parse_experiment_config(std::string_view json_text);
std::string to_json(const ExperimentConfig& config);

// Child seeds of config.seed, one stream per artifact.
struct RunSeeds {
  std::uint64_t world;
  std::uint64_t validation;
  std::uint64_t metasets;
  std::uint64_t tests;
  std::uint64_t model;
  std::uint64_t training;
};
RunSeeds run_seeds(std::uint64_t seed) noexcept;

struct TestRecipe {
  std::string name;  // shift labels joined by '+'
  std::vector<ShiftTransform> transforms;
  std::uint64_t sample_seed = 0;
};

SyntheticWorld make_world(const ExperimentConfig& config);
LogitsTable make_validation(const ExperimentConfig& config, const SyntheticWorld& world);
std::vector<TestRecipe> test_recipes(const ExperimentConfig& config);
std::vector<LogitsTable> make_test_sets(const ExperimentConfig& config, const SyntheticWorld& world);
MetaSetCollection make_metasets(const ExperimentConfig& config, const SyntheticWorld& world);

TrainResult train_cascade(const ExperimentConfig& config, const MetaSetCollection& metasets,
                          RepresentationCache* cache = nullptr);

// TS, ETS, IR, IRM, TS-IR fitted on the validation split, then the same
// five pooled over the meta-sets.
std::vector<Calibrator> fit_baselines(const LogitsTable& validation,
                                      const MetaSetCollection& metasets);

// "Base", the ten baselines in fit_baselines order, then "Ours".
std::vector<std::string> comparison_methods();

struct ComparisonRow {
  std::string method;
  std::string test_set;
  double ece = 0.0;
  double sce = 0.0;
  double accuracy = 0.0;
  double nll = 0.0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;                // method-major
  std::vector<PredictionView> views;              // parallel to rows
  std::vector<TemperaturePair> cascade_temperatures;  // one per test set
};

// Every method on every test set. Without a model the "Ours" rows are
// skipped.
Comparison compare_methods(std::span<const Calibrator> baselines, const CascadeModel* model,
                           std::span<const LogitsTable> tests, std::size_t bins,
                           RepresentationCache* cache = nullptr);

// `method,test_set,ece,sce,accuracy,nll`
std::string comparison_csv(std::span<const ComparisonRow> rows);

struct SweepRow {
  double lambda = 0.0;
  std::string test_set;
  double ece = 0.0;
};

// Retrains the cascade once per lambda; rows are lambda-major.
std::vector<SweepRow> sweep_lambda(const ExperimentConfig& config, const MetaSetCollection& metasets,
                                   std::span<const LogitsTable> tests,
                                   RepresentationCache* cache = nullptr);

// `lambda,test_set,ece`
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace cascal
