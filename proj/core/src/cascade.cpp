#include "cascal/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "cascal/error.hpp"
#include "cascal/io_util.hpp"
#include "cascal/metrics.hpp"

namespace cascal {
namespace {

constexpr char kCascadeMagic[4] = {'C', 'S', 'C', 'D'};
constexpr std::uint8_t kCascadeVersion = 1;

constexpr std::pair<const char*, bool AblationFlags::*> kAblationNames[] = {
    {"f_mu", &AblationFlags::use_f_mu},   {"f_cov", &AblationFlags::use_f_cov},
    {"t_cls", &AblationFlags::use_t_cls}, {"z_mu", &AblationFlags::use_z_mu},
    {"z_cov", &AblationFlags::use_z_cov}, {"t_con", &AblationFlags::use_t_con},
};

void check_temperatures(std::span<const double> t, const char* what) {
  for (double v : t) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      raise(Errc::invalid_argument, std::string(what) + " temperatures must be positive and finite");
    }
  }
}

struct StageConfidence {
  double conf;
  double dconf_dt;
};

// conf = softmax(z / t)[top]; d conf / dt = -(1/t^2) conf (z_top - sum_j p_j z_j).
StageConfidence stage_confidence(std::span<const double> z, double t, Label top,
                                 std::span<double> scaled, std::span<double> probs) {
  for (std::size_t c = 0; c < z.size(); ++c) scaled[c] = z[c] / t;
  softmax_row(scaled, probs);
  double mean_z = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) mean_z += probs[c] * z[c];
  const double conf = probs[top];
  return {conf, -conf * (z[top] - mean_z) / (t * t)};
}

// ECE with frozen membership: (1/N) sum_b |sum_{i in b} (correct_i - conf_i)|.
// Writes dECE/dconf_i into `dconf`.
double frozen_ece(std::span<const double> conf, std::span<const double> correct,
                  std::span<const std::size_t> bins, std::size_t bin_count,
                  std::span<double> dconf) {
  std::vector<double> gap(bin_count, 0.0);
  for (std::size_t i = 0; i < conf.size(); ++i) gap[bins[i]] += correct[i] - conf[i];
  const double n = static_cast<double>(conf.size());
  double total = 0.0;
  for (double g : gap) total += std::abs(g);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const double g = gap[bins[i]];
    dconf[i] = g > 0.0 ? -1.0 / n : (g < 0.0 ? 1.0 / n : 0.0);
  }
  return total / n;
}

std::vector<std::size_t> bins_of(std::span<const double> conf, std::size_t bins) {
  std::vector<std::size_t> out(conf.size());
  for (std::size_t i = 0; i < conf.size(); ++i) out[i] = bin_index(conf[i], bins);
  return out;
}

Matrix divide_rows(const LogitsTable& table, std::span<const double> row_temperature) {
  Matrix out(table.n_instances(), table.n_classes());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto z = table.logits().row(i);
    auto o = out.row(i);
    for (std::size_t c = 0; c < z.size(); ++c) o[c] = z[c] / row_temperature[i];
  }
  return out;
}

}  // namespace

std::optional<AblationFlags> parse_ablation(std::string_view list) {
  AblationFlags flags;
  while (!list.empty()) {
    const auto comma = list.find(',');
    auto name = list.substr(0, comma);
    while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
    while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
    list = comma == std::string_view::npos ? std::string_view{} : list.substr(comma + 1);
    if (name.empty() || name == "none") continue;
    bool found = false;
    for (const auto& [label, member] : kAblationNames) {
      if (name == label) {
        flags.*member = false;
        found = true;
      }
    }
    if (!found) return std::nullopt;
  }
  return flags;
}

std::string ablation_list(const AblationFlags& flags) {
  std::string out;
  for (const auto& [label, member] : kAblationNames) {
    if (flags.*member) continue;
    if (!out.empty()) out += ',';
    out += label;
  }
  return out;
}

CascadeModel::CascadeModel(CascadeConfig config, std::uint64_t seed) : config_(std::move(config)) {
  if (config_.classes < 2) raise(Errc::config, "cascade needs at least 2 classes");
  if (config_.levels < 1) raise(Errc::config, "cascade needs at least 1 confidence level");
  if (config_.loss_bins < 1) raise(Errc::config, "loss bin count must be >= 1");
  if (!(config_.lambda >= 0.0 && config_.lambda <= 1.0)) raise(Errc::config, "lambda must lie in [0, 1]");
  if (!config_.ablation.use_t_cls && !config_.ablation.use_t_con) {
    raise(Errc::config, "at least one of t_cls and t_con must stay enabled");
  }
  std::vector<std::size_t> cls_sizes{category_feature_size(config_.classes)};
  std::vector<std::size_t> con_sizes{confidence_feature_size(config_.levels, config_.classes)};
  for (auto h : config_.hidden) {
    cls_sizes.push_back(h);
    con_sizes.push_back(h);
  }
  cls_sizes.push_back(config_.classes);
  con_sizes.push_back(config_.levels);
  category_net_ = MlpNetwork(cls_sizes, mix_seed(seed, 11), config_.t_min, config_.t_max);
  confidence_net_ = MlpNetwork(con_sizes, mix_seed(seed, 12), config_.t_min, config_.t_max);
}

std::vector<double> CascadeModel::category_input(const PredictionView& raw_view) const {
  if (raw_view.n_classes() != config_.classes) {
    raise(Errc::dimension_mismatch, "model expects C=" + std::to_string(config_.classes) +
                                        ", table has C=" + std::to_string(raw_view.n_classes()));
  }
  return category_input(category_representation(raw_view, config_.thresholds));
}

std::vector<double> CascadeModel::category_input(const CategoryRepresentation& rep) const {
  if (rep.classes != config_.classes) {
    raise(Errc::dimension_mismatch, "model expects C=" + std::to_string(config_.classes) +
                                        ", representation has C=" + std::to_string(rep.classes));
  }
  return category_features(rep, config_.ablation.use_f_mu, config_.ablation.use_f_cov);
}

std::vector<double> CascadeModel::confidence_input(const PredictionView& scaled_view) const {
  return confidence_features(confidence_bins(scaled_view, config_.levels),
                             config_.ablation.use_z_mu, config_.ablation.use_z_cov);
}

std::vector<double> CascadeModel::category_temperatures(const PredictionView& raw_view) const {
  if (!config_.ablation.use_t_cls) return std::vector<double>(config_.classes, 1.0);
  return category_net_.forward(category_input(raw_view));
}

std::vector<double> CascadeModel::confidence_temperatures(const PredictionView& scaled_view) const {
  if (!config_.ablation.use_t_con) return std::vector<double>(config_.levels, 1.0);
  return confidence_net_.forward(confidence_input(scaled_view));
}

std::vector<std::uint8_t> CascadeModel::serialize() const {
  ByteWriter w;
  for (char ch : kCascadeMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u8(kCascadeVersion);
  w.u32(static_cast<std::uint32_t>(config_.classes));
  w.u32(static_cast<std::uint32_t>(config_.levels));
  w.f64(config_.lambda);
  std::uint8_t bits = 0;
  for (std::size_t k = 0; k < std::size(kAblationNames); ++k) {
    if (config_.ablation.*kAblationNames[k].second) bits |= static_cast<std::uint8_t>(1u << k);
  }
  w.u8(bits);
  w.f64(config_.thresholds.low_mid);
  w.f64(config_.thresholds.mid_high);
  w.u32(static_cast<std::uint32_t>(config_.hidden.size()));
  for (auto h : config_.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.f64(config_.t_min);
  w.f64(config_.t_max);
  w.u32(static_cast<std::uint32_t>(config_.loss_bins));
  w.f64(config_.normalizer_floor);
  w.f64(config_.adam.learning_rate);
  w.f64(config_.adam.beta1);
  w.f64(config_.adam.beta2);
  w.f64(config_.adam.epsilon);
  w.u32(static_cast<std::uint32_t>(config_.epochs));
  for (const auto* net : {&category_net_, &confidence_net_}) {
    const auto blob = net->serialize();
    w.u64(blob.size());
    w.raw(blob);
  }
  w.u64(fnv1a64(w.bytes()));
  return w.take();
}

CascadeModel CascadeModel::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCascadeMagic, 4) != 0) {
    raise(Errc::bad_magic, "model file does not start with \"CSCD\"");
  }
  if (bytes.size() < 13) raise(Errc::truncated_payload, "model file cut short");
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader footer(bytes.last(8));
  if (footer.u64() != fnv1a64(body)) raise(Errc::corrupt_checkpoint, "model file hash mismatch");

  ByteReader r(body.subspan(4));
  if (r.u8() != kCascadeVersion) raise(Errc::version_mismatch, "unsupported model file version");
  CascadeModel model;
  auto& c = model.config_;
  c.classes = r.u32();
  c.levels = r.u32();
  c.lambda = r.f64();
  const auto bits = r.u8();
  for (std::size_t k = 0; k < std::size(kAblationNames); ++k) {
    c.ablation.*kAblationNames[k].second = (bits >> k) & 1u;
  }
  c.thresholds.low_mid = r.f64();
  c.thresholds.mid_high = r.f64();
  const auto hidden = r.u32();
  if (!r.ok() || hidden > 64) raise(Errc::corrupt_checkpoint, "bad hidden layer count");
  c.hidden.resize(hidden);
  for (auto& h : c.hidden) h = r.u32();
  c.t_min = r.f64();
  c.t_max = r.f64();
  c.loss_bins = r.u32();
  c.normalizer_floor = r.f64();
  c.adam.learning_rate = r.f64();
  c.adam.beta1 = r.f64();
  c.adam.beta2 = r.f64();
  c.adam.epsilon = r.f64();
  c.epochs = r.u32();
  for (auto* net : {&model.category_net_, &model.confidence_net_}) {
    const auto size = r.u64();
    if (!r.ok() || r.remaining() < size) raise(Errc::truncated_payload, "network blob cut short");
    const auto start = body.size() - r.remaining();
    *net = MlpNetwork::deserialize(body.subspan(start, size));
    for (std::uint64_t k = 0; k < size; ++k) r.u8();
  }
  if (!r.ok() || r.remaining() != 0) raise(Errc::corrupt_checkpoint, "model file has trailing data");
  if (model.category_net_.output_size() != c.classes ||
      model.confidence_net_.output_size() != c.levels ||
      model.category_net_.input_size() != category_feature_size(c.classes) ||
      model.confidence_net_.input_size() != confidence_feature_size(c.levels, c.classes)) {
    raise(Errc::corrupt_checkpoint, "network shapes do not match the model configuration");
  }
  return model;
}

LogitsTable scale_by_category(const LogitsTable& table, std::span<const double> t_cls) {
  if (t_cls.size() != table.n_classes()) {
    raise(Errc::dimension_mismatch, "t_cls needs one temperature per class");
  }
  check_temperatures(t_cls, "category");
  std::vector<double> row_t(table.n_instances());
  for (std::size_t i = 0; i < row_t.size(); ++i) row_t[i] = t_cls[argmax(table.logits().row(i))];
  Matrix scaled = divide_rows(table, row_t);
  if (!table.has_labels()) return LogitsTable::unlabeled(table.name(), std::move(scaled));
  return LogitsTable(table.name(), std::move(scaled),
                     std::vector<Label>(table.labels().begin(), table.labels().end()));
}

PredictionView scale_by_confidence(const LogitsTable& scaled, std::span<const double> t_con) {
  const auto view = derive_predictions(scaled);
  const auto bins = bins_of(view.conf(), t_con.size());
  return scale_by_confidence(scaled, t_con, view.pred(), bins);
}

PredictionView scale_by_confidence(const LogitsTable& scaled, std::span<const double> t_con,
                                   std::span<const Label> pred,
                                   std::span<const std::size_t> bin_of) {
  if (t_con.empty()) raise(Errc::invalid_argument, "t_con is empty");
  check_temperatures(t_con, "confidence");
  if (pred.size() != scaled.n_instances() || bin_of.size() != scaled.n_instances()) {
    raise(Errc::dimension_mismatch, "predictions or bins do not match the table");
  }
  std::vector<double> row_t(scaled.n_instances());
  for (std::size_t i = 0; i < row_t.size(); ++i) {
    if (bin_of[i] >= t_con.size()) raise(Errc::invalid_argument, "bin index out of range");
    row_t[i] = t_con[bin_of[i]];
  }
  Matrix z = divide_rows(scaled, row_t);
  Matrix probs(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) softmax_row(z.row(i), probs.row(i));
  return PredictionView(std::move(probs), std::vector<Label>(pred.begin(), pred.end()),
                        scaled.labels());
}

FrozenCascadeLoss::FrozenCascadeLoss(const CascadeModel& reference, const LogitsTable& metaset)
    : config_(reference.config()), raw_(metaset), scaled_(metaset) {
  if (!metaset.has_labels()) {
    raise(Errc::invalid_input, "cascade loss needs a labeled meta-set; '" + metaset.name() +
                                   "' has no labels");
  }
  if (metaset.n_classes() != config_.classes) {
    raise(Errc::dimension_mismatch, "meta-set has C=" + std::to_string(metaset.n_classes()) +
                                        ", model expects C=" + std::to_string(config_.classes));
  }
  const auto raw_view = derive_predictions(metaset);
  pred_.assign(raw_view.pred().begin(), raw_view.pred().end());
  correct_.assign(raw_view.correct().begin(), raw_view.correct().end());
  category_input_ = reference.category_input(raw_view);

  const auto t_cls = config_.ablation.use_t_cls ? reference.category_net().forward(category_input_)
                                                : std::vector<double>(config_.classes, 1.0);
  scaled_ = scale_by_category(metaset, t_cls);
  const PredictionView scaled_view(softmax_rows(scaled_.logits()), pred_, metaset.labels());
  category_loss_bins_ = bins_of(scaled_view.conf(), config_.loss_bins);
  level_of_ = bins_of(scaled_view.conf(), config_.levels);
  confidence_input_ = reference.confidence_input(scaled_view);

  const auto t_con = config_.ablation.use_t_con
                         ? reference.confidence_net().forward(confidence_input_)
                         : std::vector<double>(config_.levels, 1.0);
  const auto final_view = scale_by_confidence(scaled_, t_con, pred_, level_of_);
  confidence_loss_bins_ = bins_of(final_view.conf(), config_.loss_bins);
}

CascadeLoss FrozenCascadeLoss::evaluate_temperatures(std::span<const double> t_cls,
                                                     std::span<const double> t_con) const {
  if (t_cls.size() != config_.classes || t_con.size() != config_.levels) {
    raise(Errc::dimension_mismatch, "temperature vectors do not match the model shape");
  }
  const std::size_t n = raw_.n_instances();
  const std::size_t classes = config_.classes;
  const double lambda = config_.lambda;
  std::vector<double> scaled(classes), probs(classes);
  std::vector<double> conf(n), dconf_dt(n), dloss(n);

  CascadeLoss out;
  out.temperatures = {std::vector<double>(t_cls.begin(), t_cls.end()),
                      std::vector<double>(t_con.begin(), t_con.end())};

  for (std::size_t i = 0; i < n; ++i) {
    const auto s = stage_confidence(raw_.logits().row(i), t_cls[pred_[i]], pred_[i], scaled, probs);
    conf[i] = s.conf;
    dconf_dt[i] = s.dconf_dt;
  }
  out.category = frozen_ece(conf, correct_, category_loss_bins_, config_.loss_bins, dloss);
  out.t_cls_grad.assign(classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) out.t_cls_grad[pred_[i]] += lambda * dloss[i] * dconf_dt[i];

  for (std::size_t i = 0; i < n; ++i) {
    const auto s = stage_confidence(scaled_.logits().row(i), t_con[level_of_[i]], pred_[i], scaled, probs);
    conf[i] = s.conf;
    dconf_dt[i] = s.dconf_dt;
  }
  out.confidence = frozen_ece(conf, correct_, confidence_loss_bins_, config_.loss_bins, dloss);
  out.t_con_grad.assign(config_.levels, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.t_con_grad[level_of_[i]] += (1.0 - lambda) * dloss[i] * dconf_dt[i];
  }

  out.total = lambda * out.category + (1.0 - lambda) * out.confidence;
  return out;
}

CascadeLoss FrozenCascadeLoss::evaluate(const CascadeModel& model) const {
  const auto& flags = config_.ablation;
  MlpNetwork::Cache cls_cache, con_cache;
  const auto t_cls = flags.use_t_cls ? model.category_net().forward(category_input_, &cls_cache)
                                     : std::vector<double>(config_.classes, 1.0);
  const auto t_con = flags.use_t_con ? model.confidence_net().forward(confidence_input_, &con_cache)
                                     : std::vector<double>(config_.levels, 1.0);
  CascadeLoss out = evaluate_temperatures(t_cls, t_con);
  out.category_grad = flags.use_t_cls ? model.category_net().backward(cls_cache, out.t_cls_grad).params
                                      : std::vector<double>(model.category_net().parameter_count(), 0.0);
  out.confidence_grad =
      flags.use_t_con ? model.confidence_net().backward(con_cache, out.t_con_grad).params
                      : std::vector<double>(model.confidence_net().parameter_count(), 0.0);
  return out;
}

CascadeLoss cascade_loss(const CascadeModel& model, const LogitsTable& metaset) {
  CascadeLossEvaluator evaluator;
  return evaluator(model, metaset);
}

CascadeLoss CascadeLossEvaluator::operator()(const CascadeModel& model, const LogitsTable& metaset,
                                             std::span<const double> category_input) {
  const auto& config = model.config();
  const auto& flags = config.ablation;
  if (!metaset.has_labels()) {
    raise(Errc::invalid_input, "cascade loss needs a labeled meta-set; '" + metaset.name() +
                                   "' has no labels");
  }
  if (metaset.n_classes() != config.classes) {
    raise(Errc::dimension_mismatch, "meta-set has C=" + std::to_string(metaset.n_classes()) +
                                        ", model expects C=" + std::to_string(config.classes));
  }
  const std::size_t n = metaset.n_instances();
  const std::size_t classes = config.classes;
  const double lambda = config.lambda;
  const auto& logits = metaset.logits();

  pred_.resize(n);
  correct_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred_[i] = argmax(logits.row(i));
    correct_[i] = pred_[i] == metaset.labels()[i] ? 1.0 : 0.0;
  }
  std::vector<double> own_input;
  if (category_input.empty() && flags.use_t_cls) {
    own_input = model.category_input(derive_predictions(metaset));
    category_input = own_input;
  }

  MlpNetwork::Cache cls_cache, con_cache;
  const auto t_cls = flags.use_t_cls ? model.category_net().forward(category_input, &cls_cache)
                                     : std::vector<double>(classes, 1.0);
  check_temperatures(t_cls, "category");

  // Pass 1: category-scaled confidences and the scaled probability rows.
  if (probs_.rows() != n || probs_.cols() != classes) probs_ = Matrix(n, classes);
  scaled_.resize(classes);
  conf_.resize(n);
  dconf_.resize(n);
  dloss_.resize(n);
  loss_bins_.resize(n);
  levels_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = probs_.row(i);
    const auto s = stage_confidence(logits.row(i), t_cls[pred_[i]], pred_[i], scaled_, row);
    conf_[i] = s.conf;
    dconf_[i] = s.dconf_dt;
    loss_bins_[i] = bin_index(s.conf, config.loss_bins);
    levels_[i] = bin_index(s.conf, config.levels);
  }
  CascadeLoss out;
  out.category = frozen_ece(conf_, correct_, loss_bins_, config.loss_bins, dloss_);
  out.t_cls_grad.assign(classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) out.t_cls_grad[pred_[i]] += lambda * dloss_[i] * dconf_[i];

  const PredictionView scaled_view(probs_, pred_, {});
  const auto t_con = flags.use_t_con
                         ? model.confidence_net().forward(model.confidence_input(scaled_view), &con_cache)
                         : std::vector<double>(config.levels, 1.0);
  check_temperatures(t_con, "confidence");

  // Pass 2: confidence-level scaling of the category-scaled logits.
  z_.resize(classes);
  row_probs_.resize(classes);
  for (std::size_t i = 0; i < n; ++i) {
    auto raw = logits.row(i);
    const double t = t_cls[pred_[i]];
    for (std::size_t c = 0; c < classes; ++c) z_[c] = raw[c] / t;
    const auto s = stage_confidence(z_, t_con[levels_[i]], pred_[i], scaled_, row_probs_);
    conf_[i] = s.conf;
    dconf_[i] = s.dconf_dt;
    loss_bins_[i] = bin_index(s.conf, config.loss_bins);
  }
  out.confidence = frozen_ece(conf_, correct_, loss_bins_, config.loss_bins, dloss_);
  out.t_con_grad.assign(config.levels, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.t_con_grad[levels_[i]] += (1.0 - lambda) * dloss_[i] * dconf_[i];
  }
  out.total = lambda * out.category + (1.0 - lambda) * out.confidence;
  out.temperatures = {t_cls, t_con};
  out.category_grad = flags.use_t_cls ? model.category_net().backward(cls_cache, out.t_cls_grad).params
                                      : std::vector<double>(model.category_net().parameter_count(), 0.0);
  out.confidence_grad =
      flags.use_t_con ? model.confidence_net().backward(con_cache, out.t_con_grad).params
                      : std::vector<double>(model.confidence_net().parameter_count(), 0.0);
  return out;
}

TrainResult train(const CascadeModel& initial, const MetaSetCollection& metasets,
                  std::size_t epochs, std::uint64_t seed, RepresentationCache* cache) {
  const auto& config = initial.config();
  if (metasets.n_classes() != config.classes) {
    raise(Errc::dimension_mismatch, "meta-sets have C=" + std::to_string(metasets.n_classes()) +
                                        ", model expects C=" + std::to_string(config.classes));
  }
  TrainResult result{initial, {}};
  CascadeModel& model = result.model;
  const auto& members = metasets.members();

  std::vector<std::vector<double>> cls_inputs, con_inputs;
  cls_inputs.reserve(members.size());
  for (const auto& m : members) {
    if (!m.table.has_labels()) {
      raise(Errc::invalid_input, "meta-set '" + m.table.name() + "' has no labels");
    }
    const auto view = derive_predictions(m.table);
    cls_inputs.push_back(cache ? model.category_input(cache->category(m.table, config.thresholds))
                               : model.category_input(view));
    con_inputs.push_back(model.confidence_input(view));
  }
  model.category_net().set_normalizer(Normalizer::fit(cls_inputs, config.normalizer_floor));
  model.confidence_net().set_normalizer(Normalizer::fit(con_inputs, config.normalizer_floor));

  const bool step_cls = config.ablation.use_t_cls && config.lambda > 0.0;
  const bool step_con = config.ablation.use_t_con && config.lambda < 1.0;
  AdamState cls_state(model.category_net().parameter_count(), config.adam);
  AdamState con_state(model.confidence_net().parameter_count(), config.adam);

  CascadeLossEvaluator evaluator;
  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 0x7472));
  result.loss_history.reserve(epochs);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t k = order.size(); k > 1; --k) {
      std::swap(order[k - 1], order[static_cast<std::size_t>(rng() % k)]);
    }
    double epoch_loss = 0.0;
    for (auto idx : order) {
      const auto loss = evaluator(model, members[idx].table, cls_inputs[idx]);
      epoch_loss += loss.total;
      if (step_cls) adam_step(cls_state, model.category_net().parameters(), loss.category_grad);
      if (step_con) adam_step(con_state, model.confidence_net().parameters(), loss.confidence_grad);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(members.size()));
  }
  return result;
}

CascadeResult apply(const CascadeModel& model, const LogitsTable& test, RepresentationCache* cache) {
  const auto& config = model.config();
  if (test.n_classes() != config.classes) {
    raise(Errc::dimension_mismatch, "model expects C=" + std::to_string(config.classes) +
                                        ", test table has C=" + std::to_string(test.n_classes()));
  }
  const auto unlabeled = test.has_labels() ? test.without_labels() : test;
  const auto raw_view = derive_predictions(unlabeled);
  auto t_cls = std::vector<double>(config.classes, 1.0);
  if (config.ablation.use_t_cls) {
    t_cls = model.category_net().forward(
        cache ? model.category_input(cache->category(unlabeled, config.thresholds))
              : model.category_input(raw_view));
  }
  const auto scaled = scale_by_category(unlabeled, t_cls);
  const PredictionView scaled_view(softmax_rows(scaled.logits()),
                                   std::vector<Label>(raw_view.pred().begin(), raw_view.pred().end()),
                                   {});
  auto t_con = model.confidence_temperatures(scaled_view);
  const auto levels = bins_of(scaled_view.conf(), config.levels);
  const auto final_view = scale_by_confidence(scaled, t_con, raw_view.pred(), levels);
  // Re-attach labels (if any) for evaluation; they never influenced the result.
  PredictionView view(final_view.probs(), std::vector<Label>(final_view.pred().begin(), final_view.pred().end()),
                      test.labels());
  return {std::move(view), {std::move(t_cls), std::move(t_con)}};
}

}  // namespace cascal
