#include "cascal/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include "cascal/error.hpp"
#include "cascal/io_util.hpp"

namespace cascal {
namespace {

constexpr char kMlpMagic[4] = {'M', 'L', 'P', 'N'};

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t count_parameters(const std::vector<std::size_t>& sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l + 1] * sizes[l] + sizes[l + 1];
  return n;
}

}  // namespace

double softplus(double x) noexcept {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double inverse_softplus(double y) noexcept {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

Normalizer Normalizer::fit(std::span<const std::vector<double>> samples, double floor) {
  if (samples.empty()) raise(Errc::invalid_argument, "cannot fit a normalizer on no samples");
  const std::size_t dim = samples.front().size();
  Normalizer norm;
  norm.mean.assign(dim, 0.0);
  norm.scale.assign(dim, 0.0);
  for (const auto& s : samples) {
    if (s.size() != dim) raise(Errc::dimension_mismatch, "normalizer samples differ in length");
    for (std::size_t k = 0; k < dim; ++k) norm.mean[k] += s[k];
  }
  for (auto& m : norm.mean) m /= static_cast<double>(samples.size());
  for (const auto& s : samples) {
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = s[k] - norm.mean[k];
      norm.scale[k] += d * d;
    }
  }
  for (auto& v : norm.scale) {
    v = std::sqrt(v / static_cast<double>(samples.size()) + floor * floor);
    if (v < 1e-12) v = 1.0;
  }
  return norm;
}

Normalizer Normalizer::identity(std::size_t size) {
  return {std::vector<double>(size, 0.0), std::vector<double>(size, 1.0)};
}

MlpNetwork::MlpNetwork(std::vector<std::size_t> layer_sizes, std::uint64_t seed, double t_min,
                       double t_max)
    : sizes_(std::move(layer_sizes)), t_min_(t_min), t_max_(t_max) {
  if (sizes_.size() < 2) raise(Errc::invalid_argument, "a network needs input and output sizes");
  for (auto s : sizes_) {
    if (s == 0) raise(Errc::invalid_argument, "layer sizes must be positive");
  }
  if (!(t_min_ > 0.0) || !(t_max_ > t_min_)) {
    raise(Errc::invalid_argument, "temperature range must satisfy 0 < t_min < t_max");
  }
  params_.assign(count_parameters(sizes_), 0.0);
  normalizer_ = Normalizer::identity(sizes_.front());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::size_t offset = 0;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    double std_dev = std::sqrt(2.0 / static_cast<double>(in));
    if (l + 1 == layers) std_dev *= 0.01;
    for (std::size_t k = 0; k < out * in; ++k) params_[offset + k] = std_dev * normal(rng);
    offset += out * in;
    const double b = l + 1 == layers ? inverse_softplus(1.0 - t_min_) : 0.0;
    for (std::size_t k = 0; k < out; ++k) params_[offset + k] = b;
    offset += out;
  }
}

void MlpNetwork::set_normalizer(Normalizer normalizer) {
  if (normalizer.mean.size() != input_size() || normalizer.scale.size() != input_size()) {
    raise(Errc::dimension_mismatch, "normalizer size does not match network input");
  }
  normalizer_ = std::move(normalizer);
}

std::vector<double> MlpNetwork::forward(std::span<const double> input, Cache* cache) const {
  if (input.size() != input_size()) {
    raise(Errc::dimension_mismatch, "network expects " + std::to_string(input_size()) +
                                        " inputs, got " + std::to_string(input.size()));
  }
  std::vector<double> a(input.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    a[k] = (input[k] - normalizer_.mean[k]) / normalizer_.scale[k];
  }
  if (cache) {
    cache->layer_sizes = sizes_;
    cache->activations.clear();
    cache->pre.clear();
  }
  const std::size_t layers = sizes_.size() - 1;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params_.data() + offset;
    const double* b = w + out * in;
    std::vector<double> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * a[i];
      z[o] = s;
    }
    offset += out * in + out;
    std::vector<double> next(out);
    if (l + 1 < layers) {
      for (std::size_t o = 0; o < out; ++o) next[o] = z[o] > 0.0 ? z[o] : 0.0;
    } else {
      for (std::size_t o = 0; o < out; ++o) next[o] = std::min(softplus(z[o]) + t_min_, t_max_);
    }
    if (cache) {
      cache->activations.push_back(std::move(a));
      cache->pre.push_back(std::move(z));
    }
    a = std::move(next);
  }
  return a;
}

MlpNetwork::Gradients MlpNetwork::backward(const Cache& cache,
                                           std::span<const double> output_grad) const {
  if (cache.layer_sizes != sizes_ || cache.pre.size() + 1 != sizes_.size()) {
    raise(Errc::dimension_mismatch, "forward cache was produced by a different network");
  }
  if (output_grad.size() != output_size()) {
    raise(Errc::dimension_mismatch, "output gradient has the wrong length");
  }
  const std::size_t layers = sizes_.size() - 1;
  Gradients grads;
  grads.params.assign(params_.size(), 0.0);

  std::vector<double> g(output_grad.begin(), output_grad.end());
  const auto& head = cache.pre.back();
  for (std::size_t o = 0; o < g.size(); ++o) {
    const bool clamped = softplus(head[o]) + t_min_ >= t_max_;
    g[o] *= clamped ? 0.0 : sigmoid(head[o]);
  }

  std::size_t offset = params_.size();
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    offset -= out * in + out;
    const double* w = params_.data() + offset;
    double* dw = grads.params.data() + offset;
    double* db = dw + out * in;
    const auto& a = cache.activations[l];
    std::vector<double> ga(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double go = g[o];
      db[o] = go;
      if (go == 0.0) continue;
      const double* wr = w + o * in;
      double* dwr = dw + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        dwr[i] = go * a[i];
        ga[i] += go * wr[i];
      }
    }
    if (l > 0) {
      const auto& z = cache.pre[l - 1];
      for (std::size_t i = 0; i < in; ++i) {
        if (!(z[i] > 0.0)) ga[i] = 0.0;
      }
    } else {
      for (std::size_t i = 0; i < in; ++i) ga[i] /= normalizer_.scale[i];
    }
    g = std::move(ga);
  }
  grads.input = std::move(g);
  return grads;
}

std::vector<std::uint8_t> MlpNetwork::serialize() const {
  ByteWriter w;
  for (char ch : kMlpMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u32(static_cast<std::uint32_t>(sizes_.size()));
  for (auto s : sizes_) w.u32(static_cast<std::uint32_t>(s));
  w.f64(t_min_);
  w.f64(t_max_);
  w.u64(params_.size());
  for (double p : params_) w.f64(p);
  w.u64(normalizer_.mean.size());
  for (double m : normalizer_.mean) w.f64(m);
  for (double s : normalizer_.scale) w.f64(s);
  w.u64(fnv1a64(w.bytes()));
  return w.take();
}

MlpNetwork MlpNetwork::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMlpMagic, 4) != 0) {
    raise(Errc::bad_magic, "network checkpoint does not start with \"MLPN\"");
  }
  if (bytes.size() < 12) raise(Errc::truncated_payload, "network checkpoint cut short");
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader footer(bytes.last(8));
  if (footer.u64() != fnv1a64(body)) {
    raise(Errc::corrupt_checkpoint, "network checkpoint hash mismatch");
  }
  ByteReader r(body.subspan(4));
  MlpNetwork net;
  const auto layers = r.u32();
  if (!r.ok() || layers < 2 || layers > 64) raise(Errc::corrupt_checkpoint, "bad layer count");
  net.sizes_.resize(layers);
  for (auto& s : net.sizes_) s = r.u32();
  net.t_min_ = r.f64();
  net.t_max_ = r.f64();
  const auto count = r.u64();
  if (!r.ok() || count != count_parameters(net.sizes_) || r.remaining() < count * 8) {
    raise(Errc::corrupt_checkpoint, "parameter count does not match layer sizes");
  }
  net.params_.resize(count);
  for (auto& p : net.params_) p = r.f64();
  const auto norm_size = r.u64();
  if (!r.ok() || norm_size != net.sizes_.front() || r.remaining() != norm_size * 16) {
    raise(Errc::corrupt_checkpoint, "normalizer does not match network input");
  }
  net.normalizer_.mean.resize(norm_size);
  net.normalizer_.scale.resize(norm_size);
  for (auto& m : net.normalizer_.mean) m = r.f64();
  for (auto& s : net.normalizer_.scale) s = r.f64();
  return net;
}

AdamState::AdamState(std::size_t parameter_count, AdamConfig cfg)
    : config(cfg), first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0) {}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    raise(Errc::dimension_mismatch, "optimizer state, parameters and gradients differ in shape");
  }
  const auto& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[k];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[k] * grads[k];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

double gradient_relative_error(double analytic, double numeric, double floor) noexcept {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport compare_gradients(std::span<double> params, const std::function<double()>& loss,
                                  std::span<const double> analytic, double epsilon,
                                  double floor) {
  if (params.size() != analytic.size()) {
    raise(Errc::dimension_mismatch, "analytic gradient length differs from parameter count");
  }
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + epsilon;
    const double up = loss();
    params[k] = saved - epsilon;
    const double down = loss();
    params[k] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double err = gradient_relative_error(analytic[k], numeric, floor);
    if (report.checked == 0 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = k;
      report.analytic_at_worst = analytic[k];
      report.numeric_at_worst = numeric;
    }
    ++report.checked;
  }
  return report;
}

GradCheckReport grad_check(const MlpNetwork& net, std::span<const double> input,
                           const OutputLoss& loss, double epsilon, double floor) {
  MlpNetwork probe = net;
  std::vector<double> x(input.begin(), input.end());
  MlpNetwork::Cache cache;
  const auto out = probe.forward(x, &cache);
  const auto eval = loss(out);
  const auto grads = probe.backward(cache, eval.output_grad);

  auto value = [&] { return loss(probe.forward(x)).value; };
  GradCheckReport report = compare_gradients(probe.parameters(), value, grads.params, epsilon, floor);
  GradCheckReport inputs = compare_gradients(x, value, grads.input, epsilon, floor);
  if (inputs.max_relative_error > report.max_relative_error) {
    report.max_relative_error = inputs.max_relative_error;
    report.worst_index = probe.parameter_count() + inputs.worst_index;
    report.analytic_at_worst = inputs.analytic_at_worst;
    report.numeric_at_worst = inputs.numeric_at_worst;
  }
  report.checked += inputs.checked;
  return report;
}

}  // namespace cascal
