#include "cascal/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cascal/error.hpp"

namespace cascal {

PredictionView::PredictionView(Matrix probs, std::vector<Label> pred,
                               std::span<const Label> labels)
    : probs_(std::move(probs)), pred_(std::move(pred)), labels_(labels.begin(), labels.end()) {
  const std::size_t n = probs_.rows();
  if (pred_.size() != n) raise(Errc::dimension_mismatch, "prediction count differs from rows");
  if (!labels_.empty() && labels_.size() != n) {
    raise(Errc::dimension_mismatch, "label count differs from rows");
  }
  conf_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pred_[i] >= probs_.cols()) raise(Errc::invalid_input, "prediction out of range");
    conf_[i] = probs_(i, pred_[i]);
  }
  if (!labels_.empty()) {
    correct_.resize(n);
    for (std::size_t i = 0; i < n; ++i) correct_[i] = pred_[i] == labels_[i] ? 1 : 0;
  }
}

void softmax_row(std::span<const double> logits, std::span<double> out) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] - top);
    total += out[c];
  }
  for (auto& v : out) v /= total;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    if (!std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); })) {
      raise(Errc::invalid_input, "non-finite logit in row " + std::to_string(r));
    }
    softmax_row(row, probs.row(r));
  }
  return probs;
}

Label argmax(std::span<const double> row) noexcept {
  Label best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = static_cast<Label>(c);
  }
  return best;
}

PredictionView derive_predictions(const LogitsTable& table) {
  Matrix probs = softmax_rows(table.logits());
  std::vector<Label> pred(table.n_instances());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = argmax(table.logits().row(i));
  return PredictionView(std::move(probs), std::move(pred), table.labels());
}

}  // namespace cascal
