#pragma once

#include <cstddef>
#include <vector>

#include "cascal/prediction.hpp"

namespace cascal {

inline constexpr std::size_t kDefaultReportBins = 15;

// Equal-width bin over (0,1]: bin b covers (b/B, (b+1)/B]. Values <= 0 map
// to bin 0 and values > 1 to bin B-1. Edges are compared as the doubles
// b/B, so e.g. 0.3 lands in (0.2, 0.3] at B = 10.
std::size_t bin_index(double value, std::size_t bins) noexcept;

// Top-label reliability summary. Empty bins carry conf = acc = 0.
struct BinStats {
  std::size_t bins = 0;
  std::size_t total = 0;
  std::vector<std::size_t> count;
  std::vector<double> conf;
  std::vector<double> acc;

  double lower(std::size_t b) const noexcept { return static_cast<double>(b) / bins; }
  double upper(std::size_t b) const noexcept { return static_cast<double>(b + 1) / bins; }
};

BinStats reliability_bins(const PredictionView& view, std::size_t bins);

// sum_b (n_b / N) |acc_b - conf_b|
double ece_from_bins(const BinStats& stats) noexcept;

double ece(const PredictionView& view, std::size_t bins = kDefaultReportBins);

// Static calibration error: the ECE construction repeated for every class
// column (acc = frequency of label == c in the cell), weighted by 1/(N C).
double sce(const PredictionView& view, std::size_t bins = kDefaultReportBins);

double accuracy(const PredictionView& view);

// Mean negative log-probability of the true label, probabilities floored at 1e-12.
double nll(const PredictionView& view);

inline constexpr double kProbabilityFloor = 1e-12;

}  // namespace cascal
