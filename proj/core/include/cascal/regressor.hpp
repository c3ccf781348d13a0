#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cascal {

inline constexpr double kDefaultTMin = 0.05;
inline constexpr double kDefaultTMax = 20.0;

double softplus(double x) noexcept;
double inverse_softplus(double y) noexcept;

// Per-feature affine standardization, (x - mean) / scale.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> scale;

  // scale = sqrt(var + floor^2) with the population variance; a feature
  // that is constant with floor 0 gets scale 1.
  static Normalizer fit(std::span<const std::vector<double>> samples, double floor = 0.0);
  static Normalizer identity(std::size_t size);

  bool operator==(const Normalizer&) const = default;
};

// Fully connected ReLU network whose head emits temperatures:
//   t = min(softplus(a) + t_min, t_max)
// Parameters live in one flat vector, layer by layer: W (out x in,
// row-major) then b.
class MlpNetwork {
 public:
  MlpNetwork() = default;

  // He-normal hidden weights; the output layer starts at 1% of that scale
  // with its bias set so an untrained network emits temperatures near 1.
  MlpNetwork(std::vector<std::size_t> layer_sizes, std::uint64_t seed,
             double t_min = kDefaultTMin, double t_max = kDefaultTMax);

  // Forward cache for backward(). Holds the layer sizes it was made with.
  struct Cache {
    std::vector<std::size_t> layer_sizes;
    std::vector<std::vector<double>> activations;  // [0] = normalized input
    std::vector<std::vector<double>> pre;          // pre-activation per layer
  };

  struct Gradients {
    std::vector<double> params;
    std::vector<double> input;  // with respect to the raw (unnormalized) input
  };

  std::vector<double> forward(std::span<const double> input, Cache* cache = nullptr) const;
  Gradients backward(const Cache& cache, std::span<const double> output_grad) const;

  std::size_t input_size() const noexcept { return sizes_.front(); }
  std::size_t output_size() const noexcept { return sizes_.back(); }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  double t_min() const noexcept { return t_min_; }
  double t_max() const noexcept { return t_max_; }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  const Normalizer& normalizer() const noexcept { return normalizer_; }
  void set_normalizer(Normalizer normalizer);

  // "MLPN" blob: layer sizes, temperature range, parameters, normalizer,
  // then an FNV-1a footer over everything before it.
  std::vector<std::uint8_t> serialize() const;
  static MlpNetwork deserialize(std::span<const std::uint8_t> bytes);

  bool operator==(const MlpNetwork&) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<double> params_;
  Normalizer normalizer_;
  double t_min_ = kDefaultTMin;
  double t_max_ = kDefaultTMax;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  AdamState() = default;
  AdamState(std::size_t parameter_count, AdamConfig config);

  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
};

// Bias-corrected adaptive-moment update in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;

  bool passed(double tolerance) const noexcept { return max_relative_error < tolerance; }
};

// |a - n| / max(|a|, |n|, floor): relative where gradients are meaningful,
// absolute below `floor`.
double gradient_relative_error(double analytic, double numeric, double floor = 1e-6) noexcept;

// Central differences of `loss` with respect to every entry of `params`
// (restored afterwards), compared against `analytic`.
GradCheckReport compare_gradients(std::span<double> params, const std::function<double()>& loss,
                                  std::span<const double> analytic, double epsilon = 1e-5,
                                  double floor = 1e-6);

struct LossEval {
  double value = 0.0;
  std::vector<double> output_grad;
};
using OutputLoss = std::function<LossEval(std::span<const double> output)>;

// Checks backward() through a scalar loss of the network output, over all
// parameters and all input coordinates. The worst index counts parameters
// first, then inputs.
GradCheckReport grad_check(const MlpNetwork& net, std::span<const double> input,
                           const OutputLoss& loss, double epsilon = 1e-5, double floor = 1e-6);

}  // namespace cascal
