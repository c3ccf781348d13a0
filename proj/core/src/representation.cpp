#include "cascal/representation.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "cascal/error.hpp"
#include "cascal/io_util.hpp"
#include "cascal/metrics.hpp"

namespace cascal {
namespace {

// Two-pass mean and population variance of probability rows grouped by
// `group_of`. Groups with no members stay zero.
void grouped_moments(const Matrix& probs, std::span<const std::size_t> group_of,
                     std::size_t groups, std::vector<double>& mean, std::vector<double>& var,
                     std::vector<std::size_t>& sizes) {
  const std::size_t classes = probs.cols();
  mean.assign(groups * classes, 0.0);
  var.assign(groups * classes, 0.0);
  sizes.assign(groups, 0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto g = group_of[i];
    ++sizes[g];
    auto row = probs.row(i);
    for (std::size_t k = 0; k < classes; ++k) mean[g * classes + k] += row[k];
  }
  for (std::size_t g = 0; g < groups; ++g) {
    if (sizes[g] == 0) continue;
    for (std::size_t k = 0; k < classes; ++k) mean[g * classes + k] /= static_cast<double>(sizes[g]);
  }
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto g = group_of[i];
    auto row = probs.row(i);
    for (std::size_t k = 0; k < classes; ++k) {
      const double d = row[k] - mean[g * classes + k];
      var[g * classes + k] += d * d;
    }
  }
  for (std::size_t g = 0; g < groups; ++g) {
    if (sizes[g] == 0) continue;
    for (std::size_t k = 0; k < classes; ++k) var[g * classes + k] /= static_cast<double>(sizes[g]);
  }
}

std::vector<double> features(std::span<const double> mean, std::span<const double> var,
                             std::span<const std::size_t> sizes, bool use_mean, bool use_variance) {
  std::vector<double> out;
  out.reserve(mean.size() + var.size() + sizes.size());
  for (double v : mean) out.push_back(use_mean ? v : 0.0);
  for (double v : var) out.push_back(use_variance ? v : 0.0);
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  for (auto s : sizes) out.push_back(total ? static_cast<double>(s) / static_cast<double>(total) : 0.0);
  return out;
}

constexpr char kReprMagic[4] = {'R', 'E', 'P', 'R'};

void write_header(ByteWriter& w, std::uint8_t kind) {
  for (char ch : kReprMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u8(kind);
}

ByteReader read_header(std::span<const std::uint8_t> bytes, std::uint8_t kind) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kReprMagic, 4) != 0) {
    raise(Errc::bad_magic, "representation blob does not start with \"REPR\"");
  }
  if (bytes[4] != kind) raise(Errc::invalid_input, "representation blob holds the other kind");
  return ByteReader(bytes.subspan(5));
}

std::vector<double> read_doubles(ByteReader& r, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = r.f64();
  return v;
}

std::vector<std::size_t> read_sizes(ByteReader& r, std::size_t n) {
  std::vector<std::size_t> v(n);
  for (auto& x : v) x = static_cast<std::size_t>(r.f64());
  return v;
}

}  // namespace

ConfidenceLevel confidence_level(double conf, const SubgroupThresholds& t) noexcept {
  if (conf <= t.low_mid) return ConfidenceLevel::low;
  if (conf <= t.mid_high) return ConfidenceLevel::mid;
  return ConfidenceLevel::high;
}

CategorySubgroups category_subgroups(const PredictionView& view,
                                     const SubgroupThresholds& thresholds) {
  CategorySubgroups groups;
  groups.classes = view.n_classes();
  groups.cells.resize(groups.classes * kSubgroupLevels);
  for (std::size_t i = 0; i < view.size(); ++i) {
    const auto level = static_cast<std::size_t>(confidence_level(view.conf()[i], thresholds));
    groups.cells[view.pred()[i] * kSubgroupLevels + level].push_back(i);
  }
  return groups;
}

CategoryRepresentation category_representation(const PredictionView& view,
                                               const SubgroupThresholds& thresholds) {
  std::vector<std::size_t> cell_of(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    cell_of[i] = view.pred()[i] * kSubgroupLevels +
                 static_cast<std::size_t>(confidence_level(view.conf()[i], thresholds));
  }
  CategoryRepresentation rep;
  rep.classes = view.n_classes();
  grouped_moments(view.probs(), cell_of, rep.classes * kSubgroupLevels, rep.f_mu, rep.f_cov,
                  rep.sizes);
  return rep;
}

ConfidenceRepresentation confidence_bins(const PredictionView& view, std::size_t levels) {
  if (levels == 0) raise(Errc::invalid_argument, "confidence level count must be >= 1");
  ConfidenceRepresentation rep;
  rep.levels = levels;
  rep.classes = view.n_classes();
  rep.bin_of.resize(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) rep.bin_of[i] = bin_index(view.conf()[i], levels);
  grouped_moments(view.probs(), rep.bin_of, levels, rep.z_mu, rep.z_cov, rep.sizes);
  return rep;
}

std::size_t category_feature_size(std::size_t classes) noexcept {
  return 2 * kSubgroupLevels * classes * classes + kSubgroupLevels * classes;
}

std::size_t confidence_feature_size(std::size_t levels, std::size_t classes) noexcept {
  return 2 * levels * classes + levels;
}

std::vector<double> category_features(const CategoryRepresentation& rep, bool use_mean,
                                      bool use_variance) {
  return features(rep.f_mu, rep.f_cov, rep.sizes, use_mean, use_variance);
}

std::vector<double> confidence_features(const ConfidenceRepresentation& rep, bool use_mean,
                                        bool use_variance) {
  return features(rep.z_mu, rep.z_cov, rep.sizes, use_mean, use_variance);
}

std::vector<std::uint8_t> encode_representation(const CategoryRepresentation& rep) {
  ByteWriter w;
  write_header(w, 1);
  w.u32(static_cast<std::uint32_t>(rep.classes));
  w.u32(static_cast<std::uint32_t>(kSubgroupLevels));
  w.u32(static_cast<std::uint32_t>(rep.classes));
  for (double v : rep.f_mu) w.f64(v);
  for (double v : rep.f_cov) w.f64(v);
  for (auto s : rep.sizes) w.f64(static_cast<double>(s));
  return w.take();
}

std::vector<std::uint8_t> encode_representation(const ConfidenceRepresentation& rep) {
  ByteWriter w;
  write_header(w, 2);
  w.u32(static_cast<std::uint32_t>(rep.levels));
  w.u32(static_cast<std::uint32_t>(rep.classes));
  w.u32(static_cast<std::uint32_t>(rep.bin_of.size()));
  for (double v : rep.z_mu) w.f64(v);
  for (double v : rep.z_cov) w.f64(v);
  for (auto s : rep.sizes) w.f64(static_cast<double>(s));
  for (auto b : rep.bin_of) w.u32(static_cast<std::uint32_t>(b));
  return w.take();
}

CategoryRepresentation decode_category_representation(std::span<const std::uint8_t> bytes) {
  ByteReader r = read_header(bytes, 1);
  CategoryRepresentation rep;
  rep.classes = r.u32();
  const auto levels = r.u32();
  const auto classes_again = r.u32();
  if (!r.ok() || levels != kSubgroupLevels || classes_again != rep.classes) {
    raise(Errc::invalid_input, "category representation blob has a malformed shape header");
  }
  const std::size_t cells = rep.classes * kSubgroupLevels;
  if (r.remaining() != (2 * cells * rep.classes + cells) * 8) {
    raise(Errc::truncated_payload, "category representation blob has the wrong payload size");
  }
  rep.f_mu = read_doubles(r, cells * rep.classes);
  rep.f_cov = read_doubles(r, cells * rep.classes);
  rep.sizes = read_sizes(r, cells);
  return rep;
}

ConfidenceRepresentation decode_confidence_representation(std::span<const std::uint8_t> bytes) {
  ByteReader r = read_header(bytes, 2);
  ConfidenceRepresentation rep;
  rep.levels = r.u32();
  rep.classes = r.u32();
  const std::size_t n = r.u32();
  if (!r.ok()) raise(Errc::truncated_payload, "confidence representation header cut short");
  if (r.remaining() != (2 * rep.levels * rep.classes + rep.levels) * 8 + n * 4) {
    raise(Errc::truncated_payload, "confidence representation blob has the wrong payload size");
  }
  rep.z_mu = read_doubles(r, rep.levels * rep.classes);
  rep.z_cov = read_doubles(r, rep.levels * rep.classes);
  rep.sizes = read_sizes(r, rep.levels);
  rep.bin_of.resize(n);
  for (auto& b : rep.bin_of) b = r.u32();
  return rep;
}

std::uint64_t table_content_hash(const LogitsTable& table) noexcept {
  ByteWriter w;
  w.u64(table.n_instances());
  w.u64(table.n_classes());
  for (double v : table.logits().data()) w.f64(v);
  for (Label y : table.labels()) w.u32(y);
  return fnv1a64(w.bytes());
}

CategoryRepresentation RepresentationCache::category(const LogitsTable& table,
                                                     const SubgroupThresholds& thresholds) {
  ByteWriter key;
  key.u64(table_content_hash(table));
  key.f64(thresholds.low_mid);
  key.f64(thresholds.mid_high);
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.repr",
                static_cast<unsigned long long>(fnv1a64(key.bytes())));
  const auto path = dir_ / name;
  if (std::filesystem::exists(path)) {
    try {
      auto rep = decode_category_representation(read_file_bytes(path));
      ++hits_;
      return rep;
    } catch (const Error&) {
      // Stale or damaged entry; recompute below.
    }
  }
  ++misses_;
  auto rep = category_representation(derive_predictions(table), thresholds);
  write_file_atomic(path, encode_representation(rep));
  return rep;
}

}  // namespace cascal
