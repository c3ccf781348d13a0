#include "cascal/metaset.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "cascal/error.hpp"
#include "cascal/io_util.hpp"
#include "cascal/logits_io.hpp"

namespace cascal {
namespace {

using nlohmann::json;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<double> unit_gaussian(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal;
  std::vector<double> v(d);
  for (auto& x : v) x = normal(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Rows form an orthonormal basis (Gram-Schmidt on Gaussian draws).
Matrix random_orthonormal(std::mt19937_64& rng, std::size_t d) {
  Matrix q(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    auto v = unit_gaussian(rng, d);
    for (std::size_t p = 0; p < r; ++p) {
      const double proj = dot(v, q.row(p));
      for (std::size_t k = 0; k < d; ++k) v[k] -= proj * q(p, k);
    }
    const double norm = std::sqrt(dot(v, v));
    for (std::size_t k = 0; k < d; ++k) q(r, k) = v[k] / norm;
  }
  return q;
}

std::vector<double> shifted_priors(const ShiftTransform& t, std::span<const double> priors) {
  std::mt19937_64 rng(mix_seed(t.seed, 0x5052));
  auto tilt = unit_gaussian(rng, priors.size());
  std::vector<double> out(priors.size());
  double total = 0.0;
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c] = priors[c] * std::exp(t.magnitude() * tilt[c]);
    total += out[c];
  }
  for (auto& p : out) p /= total;
  return out;
}

void apply_transform(const SyntheticWorld& world, const ShiftTransform& t, std::size_t position,
                     std::uint64_t split_seed, std::span<const Label> labels, Matrix& x) {
  const std::size_t d = x.cols();
  const double sigma = world.config.noise_scale;
  std::mt19937_64 param_rng(mix_seed(t.seed, 0x5041));
  switch (t.kind) {
    case ShiftKind::feature_noise: {
      std::mt19937_64 rng(mix_seed(split_seed ^ t.seed, 3 + position));
      std::normal_distribution<double> normal(0.0, t.magnitude() * sigma);
      for (auto& v : x.data()) v += normal(rng);
      break;
    }
    case ShiftKind::mean_drift: {
      auto dir = unit_gaussian(param_rng, d);
      const double norm = std::sqrt(dot(dir, dir));
      for (std::size_t i = 0; i < x.rows(); ++i) {
        auto row = x.row(i);
        for (std::size_t k = 0; k < d; ++k) row[k] += t.magnitude() * sigma * dir[k] / norm;
      }
      break;
    }
    case ShiftKind::rotation: {
      const Matrix q = random_orthonormal(param_rng, d);
      const double c = std::cos(t.magnitude());
      const double s = std::sin(t.magnitude());
      std::vector<double> delta(d);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        auto row = x.row(i);
        std::fill(delta.begin(), delta.end(), 0.0);
        for (std::size_t p = 0; p + 1 < d; p += 2) {
          const double a = dot(row, q.row(p));
          const double b = dot(row, q.row(p + 1));
          const double da = (c - 1.0) * a - s * b;
          const double db = s * a + (c - 1.0) * b;
          for (std::size_t k = 0; k < d; ++k) delta[k] += da * q(p, k) + db * q(p + 1, k);
        }
        for (std::size_t k = 0; k < d; ++k) row[k] += delta[k];
      }
      break;
    }
    case ShiftKind::covariance_scale: {
      std::vector<double> factor(d);
      for (auto& f : factor) f = 1.0 + t.magnitude() * uniform01(param_rng);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        auto row = x.row(i);
        auto mu = world.means.row(labels[i]);
        for (std::size_t k = 0; k < d; ++k) row[k] = mu[k] + factor[k] * (row[k] - mu[k]);
      }
      break;
    }
    case ShiftKind::prior_shift:
      break;  // acts on label sampling
  }
}

Label draw_label(std::mt19937_64& rng, std::span<const double> cdf) {
  const double u = uniform01(rng);
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) return static_cast<Label>(cdf.size() - 1);
  return static_cast<Label>(it - cdf.begin());
}

json transform_json(const ShiftTransform& t) {
  return {{"kind", std::string(to_string(t.kind))}, {"severity", t.severity}, {"seed", t.seed}};
}

ShiftTransform transform_from_json(const json& j) {
  const auto kind = parse_shift_kind(j.at("kind").get<std::string>());
  if (!kind) raise(Errc::invalid_input, "unknown shift kind in manifest");
  return make_shift(*kind, j.at("severity").get<int>(), j.at("seed").get<std::uint64_t>());
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SyntheticWorld sample_world(const WorldConfig& config, std::uint64_t seed) {
  if (config.classes < 2) raise(Errc::invalid_argument, "world needs at least 2 classes");
  if (config.dims < 2) raise(Errc::invalid_argument, "world needs at least 2 feature dimensions");
  if (!(config.noise_scale > 0.0)) raise(Errc::invalid_argument, "noise scale must be positive");
  if (!(config.overconfidence >= 1.0)) raise(Errc::invalid_argument, "overconfidence must be >= 1");

  const std::size_t c_count = config.classes;
  const std::size_t d = config.dims;
  const double sigma = config.noise_scale;
  std::mt19937_64 rng(mix_seed(seed, 0));
  std::normal_distribution<double> normal;

  SyntheticWorld world;
  world.config = config;
  world.seed = seed;
  world.means = Matrix(c_count, d);
  bool separated = false;
  for (int attempt = 0; attempt < 1000 && !separated; ++attempt) {
    for (auto& v : world.means.data()) v = config.mean_scale * sigma * normal(rng);
    separated = true;
    for (std::size_t a = 0; a < c_count && separated; ++a) {
      for (std::size_t b = a + 1; b < c_count; ++b) {
        double dist2 = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = world.means(a, k) - world.means(b, k);
          dist2 += diff * diff;
        }
        if (std::sqrt(dist2) < config.min_separation * sigma) {
          separated = false;
          break;
        }
      }
    }
  }
  if (!separated) {
    raise(Errc::config, "could not place class means with the requested separation");
  }

  world.priors.resize(c_count);
  double total = 0.0;
  for (auto& p : world.priors) {
    p = std::exp(config.prior_spread * normal(rng));
    total += p;
  }
  for (auto& p : world.priors) p /= total;

  world.weights = Matrix(c_count, d);
  world.bias.resize(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      world.weights(c, k) = world.means(c, k) / (sigma * sigma);
      norm2 += world.means(c, k) * world.means(c, k);
    }
    world.bias[c] = -norm2 / (2.0 * sigma * sigma) + std::log(world.priors[c]);
  }
  return world;
}

std::string_view to_string(ShiftKind kind) noexcept {
  switch (kind) {
    case ShiftKind::feature_noise: return "feature_noise";
    case ShiftKind::mean_drift: return "mean_drift";
    case ShiftKind::rotation: return "rotation";
    case ShiftKind::covariance_scale: return "covariance_scale";
    case ShiftKind::prior_shift: return "prior_shift";
  }
  return "?";
}

std::optional<ShiftKind> parse_shift_kind(std::string_view name) noexcept {
  for (auto k : {ShiftKind::feature_noise, ShiftKind::mean_drift, ShiftKind::rotation,
                 ShiftKind::covariance_scale, ShiftKind::prior_shift}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

double ShiftTransform::magnitude() const noexcept {
  const double s = severity;
  switch (kind) {
    case ShiftKind::feature_noise: return 0.35 * s;
    case ShiftKind::mean_drift: return 0.4 * s;
    case ShiftKind::rotation: return 0.12 * s;
    case ShiftKind::covariance_scale: return 0.25 * s;
    case ShiftKind::prior_shift: return 0.5 * s;
  }
  return 0.0;
}

std::string ShiftTransform::label() const {
  return std::string(to_string(kind)) + "_s" + std::to_string(severity);
}

ShiftTransform make_shift(ShiftKind kind, int severity, std::uint64_t seed) {
  if (severity < 1 || severity > 5) {
    raise(Errc::invalid_argument, "shift severity must be in 1..5, got " + std::to_string(severity));
  }
  return {kind, severity, seed};
}

LogitsTable generate_split(const SyntheticWorld& world, std::size_t n,
                           std::span<const ShiftTransform> transforms, std::uint64_t seed,
                           std::string name) {
  if (n < 1) raise(Errc::invalid_argument, "split size must be >= 1");
  const std::size_t c_count = world.config.classes;
  const std::size_t d = world.config.dims;

  std::vector<double> priors = world.priors;
  for (const auto& t : transforms) {
    if (t.kind == ShiftKind::prior_shift) priors = shifted_priors(t, priors);
  }
  std::vector<double> cdf(c_count);
  double acc = 0.0;
  for (std::size_t c = 0; c < c_count; ++c) cdf[c] = acc += priors[c];

  std::mt19937_64 label_rng(mix_seed(seed, 1));
  std::vector<Label> labels(n);
  for (auto& y : labels) y = draw_label(label_rng, cdf);

  std::mt19937_64 noise_rng(mix_seed(seed, 2));
  std::normal_distribution<double> normal(0.0, world.config.noise_scale);
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto mu = world.means.row(labels[i]);
    auto row = x.row(i);
    for (std::size_t k = 0; k < d; ++k) row[k] = mu[k] + normal(noise_rng);
  }
  for (std::size_t j = 0; j < transforms.size(); ++j) {
    apply_transform(world, transforms[j], j, seed, labels, x);
  }

  const double gamma = world.config.overconfidence;
  Matrix logits(n, c_count);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < c_count; ++c) {
      const double z = gamma * (dot(world.weights.row(c), x.row(i)) + world.bias[c]);
      logits(i, c) = static_cast<double>(static_cast<float>(z));
    }
  }
  return LogitsTable(std::move(name), std::move(logits), std::move(labels));
}

LogitsTable generate_split(const SyntheticWorld& world, std::size_t n,
                           const std::optional<ShiftTransform>& transform, std::uint64_t seed,
                           std::string name) {
  if (!transform) return generate_split(world, n, std::span<const ShiftTransform>{}, seed, std::move(name));
  return generate_split(world, n, std::span(&*transform, 1), seed, std::move(name));
}

MetaSetCollection::MetaSetCollection(std::vector<MetaSet> members, Provenance provenance)
    : members_(std::move(members)), provenance_(provenance) {
  if (members_.size() < 2) {
    raise(Errc::too_few_members, "a meta-set collection needs at least 2 members, got " +
                                     std::to_string(members_.size()));
  }
  std::set<std::string> names;
  const std::size_t classes = members_.front().table.n_classes();
  for (const auto& m : members_) {
    if (m.table.n_classes() != classes) {
      raise(Errc::inconsistent_classes, "meta-set '" + m.table.name() + "' has C=" +
                                            std::to_string(m.table.n_classes()) + ", expected " +
                                            std::to_string(classes));
    }
    if (!names.insert(m.table.name()).second) {
      raise(Errc::invalid_input, "duplicate meta-set name '" + m.table.name() + "'");
    }
  }
}

std::vector<LogitsTable> MetaSetCollection::tables() const {
  std::vector<LogitsTable> out;
  out.reserve(members_.size());
  for (const auto& m : members_) out.push_back(m.table);
  return out;
}

MetaSetCollection build_metasets(const SyntheticWorld& world, const ValidationRecipe& recipe,
                                 const TransformGrid& grid, std::uint64_t seed,
                                 std::span<const std::vector<ShiftTransform>> held_out) {
  if (grid.kinds.empty() || grid.severities.empty()) {
    raise(Errc::config, "meta-set transform grid is empty");
  }
  std::vector<ShiftTransform> points;
  for (auto kind : grid.kinds) {
    for (int severity : grid.severities) {
      points.push_back(make_shift(kind, severity, mix_seed(seed, points.size())));
    }
  }
  for (const auto& test : held_out) {
    if (test.size() != 1) continue;
    for (const auto& p : points) {
      if (p.kind == test.front().kind && p.severity == test.front().severity) {
        raise(Errc::config, "held-out test transform " + test.front().label() +
                                " also appears in the meta-set grid");
      }
    }
  }

  std::vector<std::future<LogitsTable>> jobs;
  jobs.reserve(points.size());
  for (const auto& p : points) {
    jobs.push_back(std::async(std::launch::async, [&world, &recipe, p] {
      return generate_split(world, recipe.n, std::span(&p, 1), recipe.seed, p.label());
    }));
  }
  std::vector<MetaSet> members;
  members.reserve(points.size());
  for (std::size_t g = 0; g < points.size(); ++g) {
    members.push_back({jobs[g].get(), {points[g]}});
  }
  return MetaSetCollection(std::move(members), Provenance::synthetic);
}

void save_metaset_dir(const MetaSetCollection& collection, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest = json::array();
  for (const auto& m : collection.members()) {
    const std::string file = m.table.name() + ".lgts";
    write_logits_file(m.table, dir / file);
    json entry = {{"file", file}};
    if (m.transforms.size() == 1) {
      const auto& t = m.transforms.front();
      entry["kind"] = std::string(to_string(t.kind));
      entry["severity"] = t.severity;
      entry["seed"] = t.seed;
    } else if (!m.transforms.empty()) {
      std::string kinds;
      int severity = 0;
      json parts = json::array();
      for (const auto& t : m.transforms) {
        if (!kinds.empty()) kinds += '+';
        kinds += to_string(t.kind);
        severity = std::max(severity, t.severity);
        parts.push_back(transform_json(t));
      }
      entry["kind"] = kinds;
      entry["severity"] = severity;
      entry["seed"] = m.transforms.front().seed;
      entry["transforms"] = parts;
    }
    manifest.push_back(entry);
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

MetaSetCollection load_metaset_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    raise(Errc::missing_input, "meta-set directory '" + dir.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".lgts") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2) {
    raise(Errc::too_few_members, "'" + dir.string() + "' holds " + std::to_string(files.size()) +
                                     " .lgts files; at least 2 required");
  }

  std::map<std::string, std::vector<ShiftTransform>> tags;
  const auto manifest_path = dir / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    try {
      const json manifest = json::parse(read_file_text(manifest_path));
      for (const auto& entry : manifest) {
        std::vector<ShiftTransform> ts;
        if (entry.contains("transforms")) {
          for (const auto& part : entry.at("transforms")) ts.push_back(transform_from_json(part));
        } else {
          ts.push_back(transform_from_json(entry));
        }
        tags[entry.at("file").get<std::string>()] = std::move(ts);
      }
    } catch (const json::exception& e) {
      raise(Errc::invalid_input, "malformed manifest '" + manifest_path.string() + "': " + e.what());
    }
  }

  std::vector<MetaSet> members;
  for (const auto& f : files) {
    auto table = read_logits_file(f);
    if (!members.empty() && table.n_classes() != members.front().table.n_classes()) {
      raise(Errc::inconsistent_classes, "'" + f.filename().string() + "' has C=" +
                                            std::to_string(table.n_classes()) + " but '" +
                                            members.front().table.name() + "' has C=" +
                                            std::to_string(members.front().table.n_classes()));
    }
    auto it = tags.find(f.filename().string());
    members.push_back({std::move(table), it == tags.end() ? std::vector<ShiftTransform>{} : it->second});
  }
  return MetaSetCollection(std::move(members), Provenance::ingested);
}

}  // namespace cascal
