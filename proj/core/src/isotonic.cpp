#include "cascal/isotonic.hpp"

#include <algorithm>
#include <numeric>

#include "cascal/error.hpp"

namespace cascal {

std::vector<double> pool_adjacent_violators(std::span<const double> values,
                                            std::span<const double> weights) {
  if (values.size() != weights.size()) {
    raise(Errc::dimension_mismatch, "PAV values and weights differ in length");
  }
  struct Block {
    double mean;
    double weight;
    std::size_t size;
  };
  std::vector<Block> stack;
  stack.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    stack.push_back({values[i], weights[i], 1});
    while (stack.size() > 1 && stack[stack.size() - 2].mean >= stack.back().mean) {
      Block top = stack.back();
      stack.pop_back();
      Block& prev = stack.back();
      const double w = prev.weight + top.weight;
      prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w;
      prev.weight = w;
      prev.size += top.size;
    }
  }
  std::vector<double> fitted;
  fitted.reserve(values.size());
  for (const auto& b : stack) fitted.insert(fitted.end(), b.size, b.mean);
  return fitted;
}

double IsotonicMap::operator()(double x) const noexcept {
  if (knots.empty()) return x;
  auto it = std::upper_bound(knots.begin(), knots.end(), x);
  if (it == knots.begin()) return levels.front();
  return levels[static_cast<std::size_t>(it - knots.begin()) - 1];
}

IsotonicMap fit_isotonic_map(std::span<const double> x, std::span<const double> targets) {
  if (x.size() != targets.size()) {
    raise(Errc::dimension_mismatch, "isotonic inputs and targets differ in length");
  }
  if (x.empty()) raise(Errc::invalid_input, "isotonic fit needs at least one point");

  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });

  std::vector<double> xs, means, weights;
  for (auto idx : order) {
    if (!xs.empty() && xs.back() == x[idx]) {
      means.back() += targets[idx];
      weights.back() += 1.0;
    } else {
      xs.push_back(x[idx]);
      means.push_back(targets[idx]);
      weights.push_back(1.0);
    }
  }
  for (std::size_t k = 0; k < means.size(); ++k) means[k] /= weights[k];

  const auto fitted = pool_adjacent_violators(means, weights);
  IsotonicMap map;
  for (std::size_t k = 0; k < fitted.size(); ++k) {
    if (k == 0 || fitted[k] != fitted[k - 1]) {
      map.knots.push_back(xs[k]);
      map.levels.push_back(fitted[k]);
    }
  }
  return map;
}

}  // namespace cascal
