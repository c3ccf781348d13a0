#include "cascal/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cascal/error.hpp"

namespace cascal {
namespace {

void require_bins(std::size_t bins) {
  if (bins == 0) raise(Errc::invalid_argument, "bin count must be >= 1");
}

void require_labels(const PredictionView& view, const char* what) {
  if (!view.has_labels()) raise(Errc::invalid_input, std::string(what) + " needs labels");
}

}  // namespace

std::size_t bin_index(double value, std::size_t bins) noexcept {
  if (!(value > 0.0)) return 0;
  if (value >= 1.0) return bins - 1;
  const double scaled = std::ceil(value * static_cast<double>(bins));
  std::size_t b = scaled < 1.0 ? 0 : static_cast<std::size_t>(scaled) - 1;
  b = std::min(b, bins - 1);
  // ceil(v * B) can be off by one when v * B rounds across an integer.
  while (b > 0 && value <= static_cast<double>(b) / bins) --b;
  while (b + 1 < bins && value > static_cast<double>(b + 1) / bins) ++b;
  return b;
}

BinStats reliability_bins(const PredictionView& view, std::size_t bins) {
  require_bins(bins);
  require_labels(view, "reliability binning");
  BinStats s;
  s.bins = bins;
  s.total = view.size();
  s.count.assign(bins, 0);
  s.conf.assign(bins, 0.0);
  s.acc.assign(bins, 0.0);
  auto conf = view.conf();
  auto correct = view.correct();
  for (std::size_t i = 0; i < view.size(); ++i) {
    const auto b = bin_index(conf[i], bins);
    ++s.count[b];
    s.conf[b] += conf[i];
    s.acc[b] += correct[i];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (s.count[b] == 0) continue;
    s.conf[b] /= static_cast<double>(s.count[b]);
    s.acc[b] /= static_cast<double>(s.count[b]);
  }
  return s;
}

double ece_from_bins(const BinStats& stats) noexcept {
  if (stats.total == 0) return 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < stats.bins; ++b) {
    if (stats.count[b] == 0) continue;
    total += static_cast<double>(stats.count[b]) / static_cast<double>(stats.total) *
             std::abs(stats.acc[b] - stats.conf[b]);
  }
  return total;
}

double ece(const PredictionView& view, std::size_t bins) {
  return ece_from_bins(reliability_bins(view, bins));
}

double sce(const PredictionView& view, std::size_t bins) {
  require_bins(bins);
  require_labels(view, "sce");
  const std::size_t n = view.size();
  const std::size_t classes = view.n_classes();
  std::vector<std::size_t> count(bins);
  std::vector<double> conf(bins);
  std::vector<double> hits(bins);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::fill(count.begin(), count.end(), 0);
    std::fill(conf.begin(), conf.end(), 0.0);
    std::fill(hits.begin(), hits.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = view.probs()(i, c);
      const auto b = bin_index(p, bins);
      ++count[b];
      conf[b] += p;
      hits[b] += view.labels()[i] == c ? 1.0 : 0.0;
    }
    for (std::size_t b = 0; b < bins; ++b) {
      if (count[b] == 0) continue;
      const double nb = static_cast<double>(count[b]);
      total += nb / static_cast<double>(n * classes) * std::abs(hits[b] / nb - conf[b] / nb);
    }
  }
  return total;
}

double accuracy(const PredictionView& view) {
  require_labels(view, "accuracy");
  double hits = 0.0;
  for (auto c : view.correct()) hits += c;
  return hits / static_cast<double>(view.size());
}

double nll(const PredictionView& view) {
  require_labels(view, "nll");
  double total = 0.0;
  for (std::size_t i = 0; i < view.size(); ++i) {
    total -= std::log(std::max(view.probs()(i, view.labels()[i]), kProbabilityFloor));
  }
  return total / static_cast<double>(view.size());
}

}  // namespace cascal
