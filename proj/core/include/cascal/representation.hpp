#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cascal/prediction.hpp"
#include "cascal/table.hpp"

namespace cascal {

inline constexpr std::size_t kConfidenceLevels = 10;  // M
inline constexpr std::size_t kSubgroupLevels = 3;     // low, mid, high

// Within a predicted category, conf in (1/C, low_mid] is low, (low_mid,
// mid_high] is mid and (mid_high, 1] is high.
struct SubgroupThresholds {
  double low_mid = 0.5;
  double mid_high = 0.8;
  bool operator==(const SubgroupThresholds&) const = default;
};

enum class ConfidenceLevel : std::size_t { low = 0, mid = 1, high = 2 };

ConfidenceLevel confidence_level(double conf, const SubgroupThresholds& thresholds) noexcept;

// Partition of instance indices into (predicted category, level) cells.
struct CategorySubgroups {
  std::size_t classes = 0;
  std::vector<std::vector<std::size_t>> cells;  // index c * 3 + level

  const std::vector<std::size_t>& cell(std::size_t category, ConfidenceLevel level) const {
    return cells[category * kSubgroupLevels + static_cast<std::size_t>(level)];
  }
};

CategorySubgroups category_subgroups(const PredictionView& view,
                                     const SubgroupThresholds& thresholds = {});

// f_mu and f_cov, each C x 3 x C flattened as ((c * 3) + level) * C + k:
// the per-coordinate mean and population variance of the probability rows
// in each cell. Empty cells are zero with size 0.
struct CategoryRepresentation {
  std::size_t classes = 0;
  std::vector<double> f_mu;
  std::vector<double> f_cov;
  std::vector<std::size_t> sizes;  // C x 3

  double mu(std::size_t c, ConfidenceLevel l, std::size_t k) const noexcept {
    return f_mu[(c * kSubgroupLevels + static_cast<std::size_t>(l)) * classes + k];
  }
  double cov(std::size_t c, ConfidenceLevel l, std::size_t k) const noexcept {
    return f_cov[(c * kSubgroupLevels + static_cast<std::size_t>(l)) * classes + k];
  }
  bool operator==(const CategoryRepresentation&) const = default;
};

CategoryRepresentation category_representation(const PredictionView& view,
                                               const SubgroupThresholds& thresholds = {});

// z_mu and z_cov, each M x C flattened row-major, over equal-width
// confidence bins (b/M, (b+1)/M].
struct ConfidenceRepresentation {
  std::size_t levels = 0;
  std::size_t classes = 0;
  std::vector<double> z_mu;
  std::vector<double> z_cov;
  std::vector<std::size_t> sizes;    // M
  std::vector<std::size_t> bin_of;   // N

  bool operator==(const ConfidenceRepresentation&) const = default;
};

ConfidenceRepresentation confidence_bins(const PredictionView& view,
                                         std::size_t levels = kConfidenceLevels);

// Network inputs: [mean block, variance block, cell sizes / N]. A disabled
// block is zeroed rather than dropped so every ablation shares one shape.
std::size_t category_feature_size(std::size_t classes) noexcept;
std::size_t confidence_feature_size(std::size_t levels, std::size_t classes) noexcept;

std::vector<double> category_features(const CategoryRepresentation& rep, bool use_mean,
                                      bool use_variance);
std::vector<double> confidence_features(const ConfidenceRepresentation& rep, bool use_mean,
                                        bool use_variance);

// Flat blob: magic "REPR", kind byte (1 category, 2 confidence), u32 shape
// header, then f64 payload (means, variances, sizes).
std::vector<std::uint8_t> encode_representation(const CategoryRepresentation& rep);
std::vector<std::uint8_t> encode_representation(const ConfidenceRepresentation& rep);
CategoryRepresentation decode_category_representation(std::span<const std::uint8_t> bytes);
ConfidenceRepresentation decode_confidence_representation(std::span<const std::uint8_t> bytes);

// FNV-1a over the logits bytes, labels and shape.
std::uint64_t table_content_hash(const LogitsTable& table) noexcept;

// On-disk cache of category representations of raw tables, keyed by
// content hash and thresholds.
class RepresentationCache {
 public:
  explicit RepresentationCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  CategoryRepresentation category(const LogitsTable& table, const SubgroupThresholds& thresholds);

  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  std::filesystem::path dir_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace cascal
