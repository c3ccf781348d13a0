#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cascal/matrix.hpp"
#include "cascal/table.hpp"

namespace cascal {

// Per-instance softmax probabilities, predicted class, top confidence and
// correctness. `correct` is empty when the source table is unlabeled.
//
// Views produced by calibrators inherit `pred` from the uncalibrated view:
// every calibrator here is argmax-preserving, and carrying the prediction
// through makes accuracy preservation hold bit-for-bit even when rounding
// produces probability ties.
class PredictionView {
 public:
  PredictionView() = default;

  // conf[i] = probs(i, pred[i]); labels may be empty.
  PredictionView(Matrix probs, std::vector<Label> pred, std::span<const Label> labels);

  std::size_t size() const noexcept { return probs_.rows(); }
  std::size_t n_classes() const noexcept { return probs_.cols(); }
  const Matrix& probs() const noexcept { return probs_; }
  std::span<const Label> pred() const noexcept { return pred_; }
  std::span<const double> conf() const noexcept { return conf_; }
  std::span<const Label> labels() const noexcept { return labels_; }
  std::span<const std::uint8_t> correct() const noexcept { return correct_; }
  bool has_labels() const noexcept { return !labels_.empty(); }

 private:
  Matrix probs_;
  std::vector<Label> pred_;
  std::vector<double> conf_;
  std::vector<Label> labels_;
  std::vector<std::uint8_t> correct_;
};

// Numerically stable softmax of one row (max subtraction).
void softmax_row(std::span<const double> logits, std::span<double> out);

// Throws Errc::invalid_input naming the first row holding a non-finite value.
Matrix softmax_rows(const Matrix& logits);

// Index of the row maximum; ties resolve to the lowest index.
Label argmax(std::span<const double> row) noexcept;

PredictionView derive_predictions(const LogitsTable& table);

}  // namespace cascal
