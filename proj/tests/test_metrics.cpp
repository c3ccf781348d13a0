#include <doctest.h>

#include <cmath>
#include <random>

#include "cascal/metaset.hpp"
#include "cascal/metrics.hpp"
#include "cascal/prediction.hpp"
#include "support.hpp"

using namespace cascal;
using cascal::testing::error_code_of;
using cascal::testing::random_table;

namespace {

// Bin by scanning the intervals (b/B, (b+1)/B] directly.
std::size_t oracle_bin(double v, std::size_t bins) {
  if (v <= 0.0) return 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / static_cast<double>(bins);
    const double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
    if (v > lo && v <= hi) return b;
  }
  return bins - 1;
}

double oracle_ece(const PredictionView& v, std::size_t bins) {
  double total = 0.0;
  const double n = static_cast<double>(v.size());
  for (std::size_t b = 0; b < bins; ++b) {
    double count = 0.0, conf = 0.0, hits = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (oracle_bin(v.conf()[i], bins) != b) continue;
      count += 1.0;
      conf += v.conf()[i];
      hits += v.pred()[i] == v.labels()[i] ? 1.0 : 0.0;
    }
    if (count > 0.0) total += count / n * std::abs(hits / count - conf / count);
  }
  return total;
}

double oracle_sce(const PredictionView& v, std::size_t bins) {
  double total = 0.0;
  const double n = static_cast<double>(v.size());
  const double c_count = static_cast<double>(v.n_classes());
  for (std::size_t c = 0; c < v.n_classes(); ++c) {
    for (std::size_t b = 0; b < bins; ++b) {
      double count = 0.0, conf = 0.0, hits = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double p = v.probs()(i, c);
        if (oracle_bin(p, bins) != b) continue;
        count += 1.0;
        conf += p;
        hits += v.labels()[i] == c ? 1.0 : 0.0;
      }
      if (count > 0.0) total += count / (n * c_count) * std::abs(hits / count - conf / count);
    }
  }
  return total;
}

PredictionView view_of(std::vector<std::vector<double>> probs, std::vector<Label> pred,
                       std::vector<Label> labels) {
  Matrix m(probs.size(), probs.front().size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    for (std::size_t k = 0; k < probs[i].size(); ++k) m(i, k) = probs[i][k];
  }
  return PredictionView(std::move(m), std::move(pred), labels);
}

}  // namespace

TEST_CASE("bin edges") {
  CHECK(bin_index(0.3, 10) == 2);
  CHECK(bin_index(1.0, 10) == 9);
  CHECK(bin_index(0.1, 10) == 0);
  CHECK(bin_index(0.0, 10) == 0);
  CHECK(bin_index(0.75, 4) == 2);
  for (std::size_t bins : {1u, 3u, 10u, 15u}) {
    for (std::size_t b = 0; b <= bins; ++b) {
      const double edge = static_cast<double>(b) / static_cast<double>(bins);
      CHECK(bin_index(edge, bins) == oracle_bin(edge, bins));
      CHECK(bin_index(std::nextafter(edge, 2.0), bins) == oracle_bin(std::nextafter(edge, 2.0), bins));
    }
  }
}

TEST_CASE("ECE hand examples") {
  const auto perfect = view_of({{1.0, 0.0}, {0.0, 1.0}}, {0, 1}, {0, 1});
  CHECK(ece(perfect, 10) == 0.0);

  const auto half = view_of({{0.8, 0.2}, {0.8, 0.2}}, {0, 0}, {0, 1});
  CHECK(std::abs(ece(half, 10) - 0.3) < 1e-15);

  CHECK(error_code_of([&] { ece(half, 0); }) == Errc::invalid_argument);
  CHECK(error_code_of([&] { sce(half, 0); }) == Errc::invalid_argument);
}

TEST_CASE("SCE hand examples") {
  std::vector<std::vector<double>> rows(10, {0.5, 0.5});
  std::vector<Label> labels{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  const auto uniform = view_of(rows, std::vector<Label>(10, 0), labels);
  CHECK(sce(uniform, 10) == doctest::Approx(0.0).epsilon(1e-15));

  const auto single = view_of({{1.0, 0.0}}, {0}, {0});
  CHECK(sce(single, 10) == 0.0);
}

TEST_CASE("ECE and SCE match brute-force oracles") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> n_dist(1, 1000), c_dist(2, 10), b_dist(1, 20);
  for (int rep = 0; rep < 100; ++rep) {
    const auto t = random_table(rng, n_dist(rng), c_dist(rng), 2.5);
    const auto v = derive_predictions(t);
    const std::size_t bins = b_dist(rng);
    CHECK(std::abs(ece(v, bins) - oracle_ece(v, bins)) < 1e-12);
    CHECK(std::abs(sce(v, bins) - oracle_sce(v, bins)) < 1e-12);
    CHECK(sce(v, bins) >= 0.0);
    CHECK(sce(v, bins) <= 1.0);
    CHECK(ece_from_bins(reliability_bins(v, bins)) == ece(v, bins));
  }
}

TEST_CASE("self-consistent sampler is calibrated") {
  std::mt19937_64 rng(5);
  const std::size_t n = 100000, c = 10;
  std::normal_distribution<double> normal(0.0, 2.0);
  Matrix logits(n, c);
  std::vector<Label> labels(n);
  std::vector<double> p(c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) logits(i, k) = normal(rng);
    softmax_row(logits.row(i), p);
    labels[i] = static_cast<Label>(std::discrete_distribution<std::size_t>(p.begin(), p.end())(rng));
  }
  const auto v = derive_predictions(LogitsTable("s", std::move(logits), std::move(labels)));
  CHECK(ece(v, 15) < 0.02);
}

TEST_CASE("reliability bins") {
  std::vector<std::vector<double>> rows(8, {0.75, 0.25});
  const auto v = view_of(rows, std::vector<Label>(8, 0), {0, 0, 0, 1, 0, 0, 1, 0});
  const auto s = reliability_bins(v, 4);
  CHECK(s.total == 8);
  CHECK(s.count == std::vector<std::size_t>{0, 0, 8, 0});
  CHECK(s.lower(2) == 0.5);
  CHECK(s.upper(2) == 0.75);
  CHECK(s.conf[2] == doctest::Approx(0.75));
  CHECK(s.acc[2] == doctest::Approx(0.75));
  CHECK(s.conf[0] == 0.0);
  CHECK(s.acc[0] == 0.0);
}

TEST_CASE("accuracy and nll") {
  const auto all = view_of({{0.9, 0.1}, {0.2, 0.8}}, {0, 1}, {0, 1});
  CHECK(accuracy(all) == 1.0);
  const auto onehot = view_of({{1.0, 0.0}, {0.0, 1.0}}, {0, 1}, {0, 1});
  CHECK(nll(onehot) <= 1e-12);
  const auto halves = view_of({{0.5, 0.5}, {0.5, 0.5}}, {0, 0}, {0, 1});
  CHECK(std::abs(nll(halves) - std::log(2.0)) < 1e-15);
  const auto zero = view_of({{1.0, 0.0}}, {0}, {1});
  CHECK(nll(zero) == doctest::Approx(-std::log(kProbabilityFloor)));
}

TEST_CASE("calibrated world has small ECE") {
  WorldConfig wc;
  wc.overconfidence = 1.0;
  const auto world = sample_world(wc, 3);
  const auto t = generate_split(world, 100000, std::nullopt, 4, "iid");
  CHECK(ece(derive_predictions(t), 15) < 0.02);
}
