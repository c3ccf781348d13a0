#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cascal/matrix.hpp"
#include "cascal/table.hpp"

namespace cascal {

// SplitMix64 finalizer; derives independent child seeds from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept;

struct WorldConfig {
  std::size_t classes = 10;
  std::size_t dims = 16;
  double noise_scale = 1.0;       // isotropic class-conditional std (sigma)
  double mean_scale = 0.7;        // class means ~ N(0, (mean_scale sigma)^2 I)
  double min_separation = 1.0;    // pairwise mean distance, in units of sigma
  double prior_spread = 0.3;      // log-priors ~ N(0, prior_spread^2), then normalized
  double overconfidence = 2.5;    // gamma >= 1 multiplying every logit
  bool operator==(const WorldConfig&) const = default;
};

// Gaussian class-conditionals with shared isotropic covariance and the
// Bayes-optimal affine classifier for them. With overconfidence = 1 the
// classifier is calibrated on in-distribution data by construction.
struct SyntheticWorld {
  WorldConfig config;
  std::uint64_t seed = 0;
  Matrix means;                 // C x d
  std::vector<double> priors;   // C, sums to 1
  Matrix weights;               // C x d
  std::vector<double> bias;     // C

  bool operator==(const SyntheticWorld&) const = default;
};

SyntheticWorld sample_world(const WorldConfig& config, std::uint64_t seed);

enum class ShiftKind { feature_noise, mean_drift, rotation, covariance_scale, prior_shift };

std::string_view to_string(ShiftKind kind) noexcept;
std::optional<ShiftKind> parse_shift_kind(std::string_view name) noexcept;

// Feature-space distribution shift. Severity 1..5 indexes the fixed
// parameter table below; the seed fixes the random direction, plane, scale
// pattern or prior tilt so a transform is a deterministic function.
struct ShiftTransform {
  ShiftKind kind = ShiftKind::feature_noise;
  int severity = 1;
  std::uint64_t seed = 0;

  // The scalar parameter the severity selects:
  //   feature_noise     additive noise std, 0.35 s sigma
  //   mean_drift        offset length along a random unit direction, 0.4 s sigma
  //   rotation          angle in every plane of a random orthogonal basis, 0.12 s rad
  //   covariance_scale  per-dimension spread factor 1 + 0.25 s u, u ~ U(0,1)
  //   prior_shift       log-prior tilt 0.5 s g, g ~ N(0,1)
  double magnitude() const noexcept;

  std::string label() const;  // e.g. "feature_noise_s3"
  bool operator==(const ShiftTransform&) const = default;
};

ShiftTransform make_shift(ShiftKind kind, int severity, std::uint64_t seed);

// Draws n labelled instances, applies the transforms in order to the data
// (never to the classifier), and stores the classifier logits rounded to f32.
// Labels are drawn before features from their own stream, so transforms
// other than prior_shift leave the label sequence unchanged.
LogitsTable generate_split(const SyntheticWorld& world, std::size_t n,
                           std::span<const ShiftTransform> transforms, std::uint64_t seed,
                           std::string name = "split");
LogitsTable generate_split(const SyntheticWorld& world, std::size_t n,
                           const std::optional<ShiftTransform>& transform, std::uint64_t seed,
                           std::string name = "split");

enum class Provenance { synthetic, ingested };

struct MetaSet {
  LogitsTable table;
  std::vector<ShiftTransform> transforms;  // empty when ingested without manifest

  bool operator==(const MetaSet&) const = default;
};

// k >= 2 tables sharing C, with unique names.
class MetaSetCollection {
 public:
  MetaSetCollection(std::vector<MetaSet> members, Provenance provenance);

  std::size_t size() const noexcept { return members_.size(); }
  std::size_t n_classes() const noexcept { return members_.front().table.n_classes(); }
  const std::vector<MetaSet>& members() const noexcept { return members_; }
  Provenance provenance() const noexcept { return provenance_; }
  std::vector<LogitsTable> tables() const;

 private:
  std::vector<MetaSet> members_;
  Provenance provenance_;
};

struct ValidationRecipe {
  std::size_t n = 5000;
  std::uint64_t seed = 1;
};

struct TransformGrid {
  std::vector<ShiftKind> kinds;
  std::vector<int> severities;
};

// One meta-set per (kind, severity) grid point, each a transformed copy of
// the same validation draw. Grid point g gets transform seed
// mix_seed(seed, g), so serial and parallel generation agree bitwise.
// Throws Errc::config when a held-out single-transform test recipe
// coincides with a grid point.
MetaSetCollection build_metasets(const SyntheticWorld& world, const ValidationRecipe& recipe,
                                 const TransformGrid& grid, std::uint64_t seed,
                                 std::span<const std::vector<ShiftTransform>> held_out = {});

// Writes `<dir>/<name>.lgts` per member plus manifest.json
// ([{file, kind, severity, seed}]; composite transforms join kinds with '+').
void save_metaset_dir(const MetaSetCollection& collection, const std::filesystem::path& dir);

// Loads every *.lgts in `dir` (sorted by file name) and the optional manifest.
MetaSetCollection load_metaset_dir(const std::filesystem::path& dir);

}  // namespace cascal
