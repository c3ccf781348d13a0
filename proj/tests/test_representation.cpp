#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "cascal/representation.hpp"
#include "support.hpp"

using namespace cascal;
using cascal::testing::error_code_of;
using cascal::testing::random_table;

namespace {

PredictionView view_of(std::vector<std::vector<double>> probs, std::vector<Label> pred) {
  Matrix m(probs.size(), probs.front().size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    for (std::size_t k = 0; k < probs[i].size(); ++k) m(i, k) = probs[i][k];
  }
  return PredictionView(std::move(m), std::move(pred), {});
}

LogitsTable permuted(const LogitsTable& t, const std::vector<std::size_t>& order) {
  Matrix m(t.n_instances(), t.n_classes());
  std::vector<Label> labels(t.n_instances());
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t k = 0; k < t.n_classes(); ++k) m(i, k) = t.logits()(order[i], k);
    labels[i] = t.labels()[order[i]];
  }
  return LogitsTable(t.name(), std::move(m), std::move(labels));
}

// Straight per-cell loop, independent of the grouped implementation.
void oracle_cell(const PredictionView& v, const std::vector<std::size_t>& members, std::size_t k,
                 double& mean, double& var) {
  mean = 0.0;
  var = 0.0;
  if (members.empty()) return;
  for (auto i : members) mean += v.probs()(i, k);
  mean /= static_cast<double>(members.size());
  for (auto i : members) var += (v.probs()(i, k) - mean) * (v.probs()(i, k) - mean);
  var /= static_cast<double>(members.size());
}

}  // namespace

TEST_CASE("confidence levels use half-open intervals") {
  const SubgroupThresholds t;
  CHECK(confidence_level(0.3, t) == ConfidenceLevel::low);
  CHECK(confidence_level(0.5, t) == ConfidenceLevel::low);
  CHECK(confidence_level(0.50001, t) == ConfidenceLevel::mid);
  CHECK(confidence_level(0.8, t) == ConfidenceLevel::mid);
  CHECK(confidence_level(0.9, t) == ConfidenceLevel::high);
  CHECK(confidence_level(1.0, t) == ConfidenceLevel::high);
}

TEST_CASE("subgroups partition by predicted class and level") {
  const auto v = view_of({{0.9, 0.1}, {0.6, 0.4}, {0.2, 0.8}, {0.45, 0.55}, {0.95, 0.05}},
                         {0, 0, 1, 1, 0});
  const auto g = category_subgroups(v);
  CHECK(g.cells.size() == 6);
  CHECK(g.cell(0, ConfidenceLevel::high) == std::vector<std::size_t>{0, 4});
  CHECK(g.cell(0, ConfidenceLevel::mid) == std::vector<std::size_t>{1});
  CHECK(g.cell(1, ConfidenceLevel::mid) == std::vector<std::size_t>{2, 3});
  CHECK(g.cell(0, ConfidenceLevel::low).empty());
  std::size_t total = 0;
  for (const auto& c : g.cells) total += c.size();
  CHECK(total == 5);
}

TEST_CASE("cell statistics by hand") {
  const auto v = view_of({{1.0, 0.0}, {0.0, 1.0}}, {0, 0});
  const auto rep = category_representation(v, {1.0, 1.0});
  CHECK(rep.sizes[0] == 2);
  CHECK(rep.mu(0, ConfidenceLevel::low, 0) == 0.5);
  CHECK(rep.mu(0, ConfidenceLevel::low, 1) == 0.5);
  CHECK(rep.cov(0, ConfidenceLevel::low, 0) == 0.25);
  CHECK(rep.cov(0, ConfidenceLevel::low, 1) == 0.25);
  CHECK(rep.mu(1, ConfidenceLevel::high, 0) == 0.0);
  CHECK(rep.cov(1, ConfidenceLevel::high, 0) == 0.0);

  const auto single = view_of({{0.7, 0.3}}, {0});
  const auto r1 = category_representation(single);
  CHECK(r1.mu(0, ConfidenceLevel::mid, 0) == 0.7);
  CHECK(r1.cov(0, ConfidenceLevel::mid, 0) == 0.0);
  CHECK(r1.cov(0, ConfidenceLevel::mid, 1) == 0.0);
}

TEST_CASE("representation shapes and feature sizes") {
  std::mt19937_64 rng(6);
  const auto t = random_table(rng, 300, 10);
  const auto v = derive_predictions(t);
  const auto cat = category_representation(v);
  CHECK(cat.f_mu.size() == 300);
  CHECK(cat.f_cov.size() == 300);
  CHECK(cat.sizes.size() == 30);
  CHECK(category_feature_size(10) == 630);
  CHECK(category_features(cat, true, true).size() == 630);

  const auto con = confidence_bins(v);
  CHECK(con.levels == 10);
  CHECK(con.z_mu.size() == 100);
  CHECK(con.bin_of.size() == 300);
  CHECK(confidence_feature_size(10, 10) == 210);
  CHECK(confidence_features(con, true, true).size() == 210);
  CHECK(std::accumulate(con.sizes.begin(), con.sizes.end(), std::size_t{0}) == 300);

  CHECK(error_code_of([&] { confidence_bins(v, 0); }) == Errc::invalid_argument);
}

TEST_CASE("confidence bins follow the ECE binning") {
  const auto v = view_of({{0.75, 0.25}, {0.5, 0.5}, {1.0, 0.0}, {0.55, 0.45}}, {0, 0, 0, 0});
  const auto rep = confidence_bins(v, 4);
  CHECK(rep.bin_of == std::vector<std::size_t>{2, 1, 3, 2});
  CHECK(rep.sizes == std::vector<std::size_t>{0, 1, 2, 1});
  CHECK(rep.z_mu[2 * 2 + 0] == doctest::Approx(0.65));
  CHECK(rep.z_cov[2 * 2 + 0] == doctest::Approx(0.01));
}

TEST_CASE("representations match a per-cell oracle") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    const auto t = random_table(rng, 400, 2 + rep % 6, 2.0);
    const auto v = derive_predictions(t);
    const auto cat = category_representation(v);
    const auto groups = category_subgroups(v);
    for (std::size_t c = 0; c < cat.classes; ++c) {
      for (auto l : {ConfidenceLevel::low, ConfidenceLevel::mid, ConfidenceLevel::high}) {
        for (std::size_t k = 0; k < cat.classes; ++k) {
          double mean, var;
          oracle_cell(v, groups.cell(c, l), k, mean, var);
          CHECK(std::abs(cat.mu(c, l, k) - mean) < 1e-12);
          CHECK(std::abs(cat.cov(c, l, k) - var) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("representations ignore instance order and logit shifts") {
  std::mt19937_64 rng(14);
  const auto t = random_table(rng, 500, 7);
  std::vector<std::size_t> order(t.n_instances());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto p = permuted(t, order);

  Matrix shifted = t.logits();
  for (std::size_t i = 0; i < shifted.rows(); ++i) {
    for (auto& x : shifted.row(i)) x += 3.25;
  }
  const auto s = LogitsTable("s", std::move(shifted), std::vector<Label>(t.labels().begin(), t.labels().end()));

  const auto base = category_representation(derive_predictions(t));
  const auto base_con = confidence_bins(derive_predictions(t));
  for (const auto& other : {p, s}) {
    const auto r = category_representation(derive_predictions(other));
    const auto c = confidence_bins(derive_predictions(other));
    CHECK(r.sizes == base.sizes);
    CHECK(c.sizes == base_con.sizes);
    for (std::size_t k = 0; k < r.f_mu.size(); ++k) {
      CHECK(std::abs(r.f_mu[k] - base.f_mu[k]) < 1e-12);
      CHECK(std::abs(r.f_cov[k] - base.f_cov[k]) < 1e-12);
    }
    for (std::size_t k = 0; k < c.z_mu.size(); ++k) {
      CHECK(std::abs(c.z_mu[k] - base_con.z_mu[k]) < 1e-12);
      CHECK(std::abs(c.z_cov[k] - base_con.z_cov[k]) < 1e-12);
    }
  }
}

TEST_CASE("disabled blocks are zeroed") {
  std::mt19937_64 rng(15);
  const auto v = derive_predictions(random_table(rng, 200, 4));
  const auto cat = category_representation(v);
  const auto full = category_features(cat, true, true);
  const auto no_mu = category_features(cat, false, true);
  const auto no_cov = category_features(cat, true, false);
  const std::size_t block = 3 * 4 * 4;
  REQUIRE(no_mu.size() == full.size());
  for (std::size_t k = 0; k < full.size(); ++k) {
    CHECK(no_mu[k] == (k < block ? 0.0 : full[k]));
    CHECK(no_cov[k] == (k >= block && k < 2 * block ? 0.0 : full[k]));
  }
  double fractions = 0.0;
  for (std::size_t k = 2 * block; k < full.size(); ++k) fractions += full[k];
  CHECK(std::abs(fractions - 1.0) < 1e-12);
}

TEST_CASE("representation blobs round trip") {
  std::mt19937_64 rng(16);
  const auto v = derive_predictions(random_table(rng, 200, 5));
  const auto cat = category_representation(v);
  const auto con = confidence_bins(v);
  const auto cat_blob = encode_representation(cat);
  const auto con_blob = encode_representation(con);
  CHECK(decode_category_representation(cat_blob) == cat);
  auto con_back = decode_confidence_representation(con_blob);
  CHECK(con_back.z_mu == con.z_mu);
  CHECK(con_back.z_cov == con.z_cov);
  CHECK(con_back.sizes == con.sizes);

  CHECK(error_code_of([&] { decode_category_representation(con_blob); }) == Errc::invalid_input);
  auto bad = cat_blob;
  bad[0] = 'X';
  CHECK(error_code_of([&] { decode_category_representation(bad); }) == Errc::bad_magic);
  const std::vector<std::uint8_t> cut(cat_blob.begin(), cat_blob.end() - 3);
  CHECK(error_code_of([&] { decode_category_representation(cut); }) == Errc::truncated_payload);
}

TEST_CASE("representation cache hits on identical content") {
  const auto dir = std::filesystem::temp_directory_path() / "cascal_test_repcache";
  std::filesystem::remove_all(dir);
  std::mt19937_64 rng(17);
  const auto t = random_table(rng, 300, 6);
  const auto expected = category_representation(derive_predictions(t));
  {
    RepresentationCache cache(dir);
    CHECK(cache.category(t, {}) == expected);
    CHECK(cache.misses() == 1);
    CHECK(cache.category(t.renamed("other"), {}) == expected);
    CHECK(cache.hits() == 1);
    cache.category(t, {0.4, 0.9});
    CHECK(cache.misses() == 2);
  }
  RepresentationCache reopened(dir);
  CHECK(reopened.category(t, {}) == expected);
  CHECK(reopened.hits() == 1);
  CHECK(table_content_hash(t) == table_content_hash(t.renamed("x")));
  std::filesystem::remove_all(dir);
}
