#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "cascal/isotonic.hpp"
#include "cascal/prediction.hpp"
#include "cascal/table.hpp"

namespace cascal {

enum class CalibratorKind { ts, ets, ir, irm, ts_ir };

// clean: fitted on the untouched validation split. perturbed: fitted on the
// pooled meta-set collection (the "-P" variants).
enum class FitSource { clean, perturbed };

std::string_view to_string(CalibratorKind kind) noexcept;
std::optional<CalibratorKind> parse_calibrator_kind(std::string_view name) noexcept;

// Search bounds for every temperature in the toolkit.
inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;

struct Calibrator {
  CalibratorKind kind = CalibratorKind::ts;
  FitSource source = FitSource::clean;
  double temperature = 1.0;                  // ts, ets, ts_ir
  std::array<double, 3> weights{1.0, 0.0, 0.0};  // ets: scaled, raw, uniform
  IsotonicMap map;                           // ir, irm, ts_ir

  // e.g. "TS", "TS-IR-P"
  std::string method_name() const;
};

// Scalar temperature minimizing NLL; golden-section search over log T in
// [log 0.05, log 20] until the bracket is narrower than 1e-4 in T. Falls
// back to T = 1 when the optimum does not beat it.
Calibrator fit_ts(const LogitsTable& val);

// w1 softmax(z/T) + w2 softmax(z) + w3 / C with T from fit_ts and the
// weights chosen on a 0.02 simplex grid, then refined on a 0.002 grid.
Calibrator fit_ets(const LogitsTable& val);

// Top-label isotonic regression on (confidence, correct).
Calibrator fit_isotonic(const LogitsTable& val);

// One isotonic map shared by all classes, fitted on every
// (probs[i][c], label_i == c) pair.
Calibrator fit_irm(const LogitsTable& val);

// fit_ts, then top-label isotonic regression on the temperature-scaled view.
Calibrator fit_ts_ir(const LogitsTable& val);

Calibrator fit(CalibratorKind kind, const LogitsTable& val);

// Pools `sources` in order and fits once; the result is tagged with `source`.
Calibrator fit_pooled(CalibratorKind kind, std::span<const LogitsTable> sources,
                      FitSource source);

PredictionView apply_ts(const Calibrator& cal, const LogitsTable& table);
PredictionView apply_ets(const Calibrator& cal, const LogitsTable& table);
PredictionView apply_isotonic(const Calibrator& cal, const LogitsTable& table);
PredictionView apply_irm(const Calibrator& cal, const LogitsTable& table);
PredictionView apply_ts_ir(const Calibrator& cal, const LogitsTable& table);

// Dispatches on cal.kind.
PredictionView apply(const Calibrator& cal, const LogitsTable& table);

// Top-label isotonic remap of an existing view; non-top classes share the
// remaining mass proportionally. The mapped top probability is floored so
// that it stays the row maximum.
PredictionView remap_top_label(const IsotonicMap& map, const PredictionView& view);

// Scaled-logit view with predictions carried over from the raw logits.
PredictionView temperature_view(const LogitsTable& table, double temperature);

// Mean NLL of softmax(z / T) at the labels (probability floor 1e-12).
double temperature_nll(const LogitsTable& table, double temperature);

std::string to_json(const Calibrator& cal);
Calibrator calibrator_from_json(std::string_view json);

}  // namespace cascal
