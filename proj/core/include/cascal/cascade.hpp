#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cascal/metaset.hpp"
#include "cascal/prediction.hpp"
#include "cascal/regressor.hpp"
#include "cascal/representation.hpp"
#include "cascal/table.hpp"

namespace cascal {

// Which representation blocks feed the networks and which scaling stages
// run. A disabled block is zeroed; a disabled stage uses temperature 1.
struct AblationFlags {
  bool use_f_mu = true;
  bool use_f_cov = true;
  bool use_t_cls = true;
  bool use_z_mu = true;
  bool use_z_cov = true;
  bool use_t_con = true;

  bool operator==(const AblationFlags&) const = default;
};

// Comma-separated names of parts to disable: f_mu, f_cov, t_cls, z_mu,
// z_cov, t_con. Empty input disables nothing; unknown names give nullopt.
std::optional<AblationFlags> parse_ablation(std::string_view list);
std::string ablation_list(const AblationFlags& flags);  // inverse of parse_ablation

struct CascadeConfig {
  std::size_t classes = 10;
  std::size_t levels = kConfidenceLevels;  // M
  double lambda = 0.4;
  AblationFlags ablation;
  SubgroupThresholds thresholds;
  std::vector<std::size_t> hidden{128, 64};
  double t_min = kDefaultTMin;
  double t_max = kDefaultTMax;
  std::size_t loss_bins = kConfidenceLevels;
  double normalizer_floor = 1.0;  // minimum feature scale for input standardization
  AdamConfig adam;
  std::size_t epochs = 300;

  bool operator==(const CascadeConfig&) const = default;
};

struct TemperaturePair {
  std::vector<double> t_cls;  // C
  std::vector<double> t_con;  // M
  bool operator==(const TemperaturePair&) const = default;
};

// Category network (2*3*C^2 + 3C -> C) and confidence network (2MC + M -> M).
class CascadeModel {
 public:
  CascadeModel(CascadeConfig config, std::uint64_t seed);

  const CascadeConfig& config() const noexcept { return config_; }
  const MlpNetwork& category_net() const noexcept { return category_net_; }
  const MlpNetwork& confidence_net() const noexcept { return confidence_net_; }
  MlpNetwork& category_net() noexcept { return category_net_; }
  MlpNetwork& confidence_net() noexcept { return confidence_net_; }

  // Temperatures for a raw table / for a category-scaled view.
  std::vector<double> category_temperatures(const PredictionView& raw_view) const;
  std::vector<double> confidence_temperatures(const PredictionView& scaled_view) const;

  std::vector<double> category_input(const PredictionView& raw_view) const;
  std::vector<double> category_input(const CategoryRepresentation& rep) const;
  std::vector<double> confidence_input(const PredictionView& scaled_view) const;

  // "CSCD" file: configuration, both network checkpoints, FNV-1a footer.
  std::vector<std::uint8_t> serialize() const;
  static CascadeModel deserialize(std::span<const std::uint8_t> bytes);

  bool operator==(const CascadeModel&) const = default;

 private:
  CascadeModel() = default;

  CascadeConfig config_;
  MlpNetwork category_net_;
  MlpNetwork confidence_net_;
};

// Row i divided by t_cls[argmax_i] (the original prediction).
LogitsTable scale_by_category(const LogitsTable& table, std::span<const double> t_cls);

// Each row divided by the temperature of its confidence bin, the bin taken
// from the input table's own top confidence over M = t_con.size() bins.
PredictionView scale_by_confidence(const LogitsTable& scaled, std::span<const double> t_con);

// Same, with predictions and bins supplied by the caller.
PredictionView scale_by_confidence(const LogitsTable& scaled, std::span<const double> t_con,
                                   std::span<const Label> pred,
                                   std::span<const std::size_t> bin_of);

struct CascadeLoss {
  double total = 0.0;
  double category = 0.0;    // L_cls
  double confidence = 0.0;  // L_con
  TemperaturePair temperatures;
  std::vector<double> t_cls_grad;  // dL/dt_cls (lambda applied)
  std::vector<double> t_con_grad;  // dL/dt_con (1 - lambda applied)
  std::vector<double> category_grad;    // over category_net parameters
  std::vector<double> confidence_grad;  // over confidence_net parameters
};

// The training objective around one reference model. Everything the exact
// gradient treats as constant is captured at construction: ECE bin
// membership of both stages, the category-scaled logits the confidence
// stage consumes, the confidence network's input and each instance's
// confidence level. Evaluating at the reference model reproduces the live
// loss; elsewhere it is the smooth surrogate whose gradient backprop
// computes, which is what finite-difference checks compare against.
class FrozenCascadeLoss {
 public:
  FrozenCascadeLoss(const CascadeModel& reference, const LogitsTable& metaset);

  CascadeLoss evaluate(const CascadeModel& model) const;

  // Loss and temperature gradients for explicit temperature vectors.
  CascadeLoss evaluate_temperatures(std::span<const double> t_cls,
                                    std::span<const double> t_con) const;

  const std::vector<double>& category_input() const noexcept { return category_input_; }
  const std::vector<double>& confidence_input() const noexcept { return confidence_input_; }

 private:
  CascadeConfig config_;
  LogitsTable raw_;
  std::vector<Label> pred_;
  std::vector<double> correct_;
  std::vector<double> category_input_;
  LogitsTable scaled_;
  std::vector<double> confidence_input_;
  std::vector<std::size_t> category_loss_bins_;
  std::vector<std::size_t> level_of_;
  std::vector<std::size_t> confidence_loss_bins_;
};

// L = lambda ECE(category-scaled) + (1 - lambda) ECE(fully cascaded), with
// L_cls reaching only the category network and L_con only the confidence
// network. Throws Errc::invalid_input for unlabeled tables.
CascadeLoss cascade_loss(const CascadeModel& model, const LogitsTable& metaset);

// The same loss evaluated in two passes over the table with reusable
// scratch buffers; train() keeps one per run. `category_input` may be
// precomputed since it depends only on the raw table.
class CascadeLossEvaluator {
 public:
  CascadeLoss operator()(const CascadeModel& model, const LogitsTable& metaset,
                         std::span<const double> category_input = {});

 private:
  Matrix probs_;
  std::vector<double> z_;
  std::vector<double> scaled_;
  std::vector<double> row_probs_;
  std::vector<double> conf_;
  std::vector<double> dconf_;
  std::vector<double> dloss_;
  std::vector<double> correct_;
  std::vector<Label> pred_;
  std::vector<std::size_t> loss_bins_;
  std::vector<std::size_t> levels_;
};

struct TrainResult {
  CascadeModel model;
  std::vector<double> loss_history;  // mean loss per epoch
};

// Fits input normalizers on the collection, then for each epoch visits the
// meta-sets in a seed-determined order taking one Adam step per enabled
// network per meta-set. Category representations come from `cache` when
// one is given.
TrainResult train(const CascadeModel& model, const MetaSetCollection& metasets,
                  std::size_t epochs, std::uint64_t seed, RepresentationCache* cache = nullptr);

struct CascadeResult {
  PredictionView view;
  TemperaturePair temperatures;
};

// Representation -> t_cls -> category scaling -> representation of the
// scaled view -> t_con -> confidence scaling. Labels are never read.
CascadeResult apply(const CascadeModel& model, const LogitsTable& test,
                    RepresentationCache* cache = nullptr);

}  // namespace cascal
