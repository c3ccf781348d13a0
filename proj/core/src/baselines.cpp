#include "cascal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <vector>

#include "cascal/error.hpp"
#include "cascal/metrics.hpp"

namespace cascal {
namespace {

using nlohmann::json;

void require_labels(const LogitsTable& t, const char* what) {
  if (!t.has_labels()) {
    raise(Errc::invalid_input, std::string(what) + " needs a labeled table; '" + t.name() +
                                   "' has no labels");
  }
}

void require_kind(const Calibrator& cal, std::initializer_list<CalibratorKind> kinds) {
  if (std::find(kinds.begin(), kinds.end(), cal.kind) == kinds.end()) {
    raise(Errc::kind_mismatch, "calibrator of kind " + std::string(to_string(cal.kind)) +
                                   " cannot be applied here");
  }
}

std::vector<Label> raw_predictions(const LogitsTable& table) {
  std::vector<Label> pred(table.n_instances());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = argmax(table.logits().row(i));
  return pred;
}

Matrix scaled_probs(const LogitsTable& table, double temperature) {
  const std::size_t classes = table.n_classes();
  Matrix probs(table.n_instances(), classes);
  std::vector<double> scaled(classes);
  for (std::size_t i = 0; i < table.n_instances(); ++i) {
    auto z = table.logits().row(i);
    for (std::size_t c = 0; c < classes; ++c) scaled[c] = z[c] / temperature;
    softmax_row(scaled, probs.row(i));
  }
  return probs;
}

double mixture(const std::array<double, 3>& w, double scaled, double raw, double uniform) {
  return w[0] * scaled + w[1] * raw + w[2] * uniform;
}

}  // namespace

std::string_view to_string(CalibratorKind kind) noexcept {
  switch (kind) {
    case CalibratorKind::ts: return "TS";
    case CalibratorKind::ets: return "ETS";
    case CalibratorKind::ir: return "IR";
    case CalibratorKind::irm: return "IRM";
    case CalibratorKind::ts_ir: return "TS-IR";
  }
  return "?";
}

std::optional<CalibratorKind> parse_calibrator_kind(std::string_view name) noexcept {
  for (auto k : {CalibratorKind::ts, CalibratorKind::ets, CalibratorKind::ir,
                 CalibratorKind::irm, CalibratorKind::ts_ir}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

std::string Calibrator::method_name() const {
  std::string name(to_string(kind));
  if (source == FitSource::perturbed) name += "-P";
  return name;
}

PredictionView temperature_view(const LogitsTable& table, double temperature) {
  if (!(temperature > 0.0)) raise(Errc::invalid_argument, "temperature must be positive");
  return PredictionView(scaled_probs(table, temperature), raw_predictions(table),
                        table.labels());
}

double temperature_nll(const LogitsTable& table, double temperature) {
  require_labels(table, "temperature NLL");
  const std::size_t classes = table.n_classes();
  std::vector<double> scaled(classes), probs(classes);
  double total = 0.0;
  for (std::size_t i = 0; i < table.n_instances(); ++i) {
    auto z = table.logits().row(i);
    for (std::size_t c = 0; c < classes; ++c) scaled[c] = z[c] / temperature;
    softmax_row(scaled, probs);
    total -= std::log(std::max(probs[table.labels()[i]], kProbabilityFloor));
  }
  return total / static_cast<double>(table.n_instances());
}

Calibrator fit_ts(const LogitsTable& val) {
  require_labels(val, "TS");
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = std::log(kMinTemperature);
  double hi = std::log(kMaxTemperature);
  double a = hi - kInvPhi * (hi - lo);
  double b = lo + kInvPhi * (hi - lo);
  double fa = temperature_nll(val, std::exp(a));
  double fb = temperature_nll(val, std::exp(b));
  while (std::exp(hi) - std::exp(lo) > 1e-4) {
    if (fa <= fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - kInvPhi * (hi - lo);
      fa = temperature_nll(val, std::exp(a));
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + kInvPhi * (hi - lo);
      fb = temperature_nll(val, std::exp(b));
    }
  }
  Calibrator cal;
  cal.kind = CalibratorKind::ts;
  const double t = std::exp(0.5 * (lo + hi));
  cal.temperature = temperature_nll(val, t) < temperature_nll(val, 1.0) ? t : 1.0;
  return cal;
}

Calibrator fit_ets(const LogitsTable& val) {
  Calibrator cal = fit_ts(val);
  cal.kind = CalibratorKind::ets;

  // Only the probability at the label enters the NLL.
  const std::size_t n = val.n_instances();
  const double uniform = 1.0 / static_cast<double>(val.n_classes());
  const Matrix scaled = scaled_probs(val, cal.temperature);
  const Matrix raw = softmax_rows(val.logits());
  std::vector<double> at_scaled(n), at_raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    at_scaled[i] = scaled(i, val.labels()[i]);
    at_raw[i] = raw(i, val.labels()[i]);
  }
  auto objective = [&](const std::array<double, 3>& w) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total -= std::log(std::max(mixture(w, at_scaled[i], at_raw[i], uniform), kProbabilityFloor));
    }
    return total / static_cast<double>(n);
  };

  std::array<double, 3> best{1.0, 0.0, 0.0};
  double best_loss = objective(best);
  constexpr int kSteps = 50;  // 0.02 grid
  for (int i = 0; i <= kSteps; ++i) {
    for (int j = 0; i + j <= kSteps; ++j) {
      const std::array<double, 3> w{i / double(kSteps), j / double(kSteps),
                                    (kSteps - i - j) / double(kSteps)};
      const double loss = objective(w);
      if (loss < best_loss) {
        best_loss = loss;
        best = w;
      }
    }
  }
  const auto coarse = best;
  for (int di = -10; di <= 10; ++di) {
    for (int dj = -10; dj <= 10; ++dj) {
      const double w1 = coarse[0] + di * 0.002;
      const double w2 = coarse[1] + dj * 0.002;
      const double w3 = 1.0 - w1 - w2;
      if (w1 < 0.0 || w2 < 0.0 || w3 < 0.0) continue;
      const std::array<double, 3> w{w1, w2, w3};
      const double loss = objective(w);
      if (loss < best_loss) {
        best_loss = loss;
        best = w;
      }
    }
  }
  cal.weights = best;
  return cal;
}

Calibrator fit_isotonic(const LogitsTable& val) {
  require_labels(val, "IR");
  const auto view = derive_predictions(val);
  std::vector<double> targets(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) targets[i] = view.correct()[i];
  Calibrator cal;
  cal.kind = CalibratorKind::ir;
  cal.map = fit_isotonic_map(view.conf(), targets);
  return cal;
}

Calibrator fit_irm(const LogitsTable& val) {
  require_labels(val, "IRM");
  const Matrix probs = softmax_rows(val.logits());
  std::vector<double> x(probs.data().begin(), probs.data().end());
  std::vector<double> targets(x.size(), 0.0);
  for (std::size_t i = 0; i < val.n_instances(); ++i) {
    targets[i * val.n_classes() + val.labels()[i]] = 1.0;
  }
  Calibrator cal;
  cal.kind = CalibratorKind::irm;
  cal.map = fit_isotonic_map(x, targets);
  return cal;
}

Calibrator fit_ts_ir(const LogitsTable& val) {
  Calibrator cal = fit_ts(val);
  cal.kind = CalibratorKind::ts_ir;
  const auto view = temperature_view(val, cal.temperature);
  std::vector<double> targets(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) targets[i] = view.correct()[i];
  cal.map = fit_isotonic_map(view.conf(), targets);
  return cal;
}

Calibrator fit(CalibratorKind kind, const LogitsTable& val) {
  switch (kind) {
    case CalibratorKind::ts: return fit_ts(val);
    case CalibratorKind::ets: return fit_ets(val);
    case CalibratorKind::ir: return fit_isotonic(val);
    case CalibratorKind::irm: return fit_irm(val);
    case CalibratorKind::ts_ir: return fit_ts_ir(val);
  }
  raise(Errc::invalid_argument, "unknown calibrator kind");
}

Calibrator fit_pooled(CalibratorKind kind, std::span<const LogitsTable> sources,
                      FitSource source) {
  Calibrator cal = sources.size() == 1 ? fit(kind, sources.front())
                                       : fit(kind, concatenate(sources, "pooled"));
  cal.source = source;
  return cal;
}

PredictionView apply_ts(const Calibrator& cal, const LogitsTable& table) {
  require_kind(cal, {CalibratorKind::ts});
  return temperature_view(table, cal.temperature);
}

PredictionView apply_ets(const Calibrator& cal, const LogitsTable& table) {
  require_kind(cal, {CalibratorKind::ets});
  const double uniform = 1.0 / static_cast<double>(table.n_classes());
  const Matrix scaled = scaled_probs(table, cal.temperature);
  const Matrix raw = softmax_rows(table.logits());
  Matrix probs(table.n_instances(), table.n_classes());
  for (std::size_t k = 0; k < probs.size(); ++k) {
    probs.data()[k] = mixture(cal.weights, scaled.data()[k], raw.data()[k], uniform);
  }
  return PredictionView(std::move(probs), raw_predictions(table), table.labels());
}

PredictionView remap_top_label(const IsotonicMap& map, const PredictionView& view) {
  const std::size_t classes = view.n_classes();
  const double uniform = 1.0 / static_cast<double>(classes);
  Matrix probs = view.probs();
  for (std::size_t i = 0; i < view.size(); ++i) {
    auto row = probs.row(i);
    const Label top = view.pred()[i];
    double rest = 0.0;
    double second = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (c == top) continue;
      rest += row[c];
      second = std::max(second, row[c]);
    }
    // Proportional rescaling of the rest multiplies `second` by (1-g)/rest;
    // g >= second / (rest + second) keeps the top class on top.
    double floor = uniform;
    if (rest > 0.0) floor = std::max(floor, second / (rest + second));
    const double g = std::clamp(map(view.conf()[i]), floor, 1.0);
    for (std::size_t c = 0; c < classes; ++c) {
      if (c == top) continue;
      row[c] = rest > 0.0 ? row[c] * ((1.0 - g) / rest)
                          : (1.0 - g) / static_cast<double>(classes - 1);
    }
    row[top] = g;
  }
  return PredictionView(std::move(probs), std::vector<Label>(view.pred().begin(), view.pred().end()),
                        view.labels());
}

PredictionView apply_isotonic(const Calibrator& cal, const LogitsTable& table) {
  require_kind(cal, {CalibratorKind::ir});
  return remap_top_label(cal.map, derive_predictions(table));
}

PredictionView apply_irm(const Calibrator& cal, const LogitsTable& table) {
  require_kind(cal, {CalibratorKind::irm});
  const auto base = derive_predictions(table);
  Matrix probs = base.probs();
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    double total = 0.0;
    for (auto& p : row) {
      p = cal.map(p);
      total += p;
    }
    if (total > 0.0) {
      for (auto& p : row) p /= total;
    } else {
      auto orig = base.probs().row(i);
      std::copy(orig.begin(), orig.end(), row.begin());
    }
  }
  return PredictionView(std::move(probs), std::vector<Label>(base.pred().begin(), base.pred().end()),
                        table.labels());
}

PredictionView apply_ts_ir(const Calibrator& cal, const LogitsTable& table) {
  require_kind(cal, {CalibratorKind::ts_ir});
  return remap_top_label(cal.map, temperature_view(table, cal.temperature));
}

PredictionView apply(const Calibrator& cal, const LogitsTable& table) {
  switch (cal.kind) {
    case CalibratorKind::ts: return apply_ts(cal, table);
    case CalibratorKind::ets: return apply_ets(cal, table);
    case CalibratorKind::ir: return apply_isotonic(cal, table);
    case CalibratorKind::irm: return apply_irm(cal, table);
    case CalibratorKind::ts_ir: return apply_ts_ir(cal, table);
  }
  raise(Errc::invalid_argument, "unknown calibrator kind");
}

std::string to_json(const Calibrator& cal) {
  json doc;
  doc["kind"] = std::string(to_string(cal.kind));
  doc["source"] = cal.source == FitSource::clean ? "clean" : "perturbed";
  doc["temperature"] = cal.temperature;
  doc["weights"] = cal.weights;
  doc["knots"] = cal.map.knots;
  doc["levels"] = cal.map.levels;
  return doc.dump(2) + "\n";
}

Calibrator calibrator_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    Calibrator cal;
    const auto kind = parse_calibrator_kind(doc.at("kind").get<std::string>());
    if (!kind) raise(Errc::invalid_input, "unknown calibrator kind in JSON");
    cal.kind = *kind;
    const auto source = doc.at("source").get<std::string>();
    if (source != "clean" && source != "perturbed") {
      raise(Errc::invalid_input, "unknown fit source '" + source + "'");
    }
    cal.source = source == "clean" ? FitSource::clean : FitSource::perturbed;
    cal.temperature = doc.at("temperature").get<double>();
    cal.weights = doc.at("weights").get<std::array<double, 3>>();
    cal.map.knots = doc.at("knots").get<std::vector<double>>();
    cal.map.levels = doc.at("levels").get<std::vector<double>>();
    if (cal.map.knots.size() != cal.map.levels.size()) {
      raise(Errc::invalid_input, "isotonic knots and levels differ in length");
    }
    if (!(cal.temperature > 0.0)) raise(Errc::invalid_input, "temperature must be positive");
    return cal;
  } catch (const json::exception& e) {
    raise(Errc::invalid_input, std::string("malformed calibrator JSON: ") + e.what());
  }
}

}  // namespace cascal
