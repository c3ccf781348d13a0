#pragma once

#include <span>
#include <vector>

namespace cascal {

// Weighted pool-adjacent-violators: the nondecreasing sequence closest to
// `values` in weighted least squares. Returns one fitted value per input.
std::vector<double> pool_adjacent_violators(std::span<const double> values,
                                            std::span<const double> weights);

// Monotone piecewise-constant map produced by isotonic regression. Block k
// starts at knots[k] and carries levels[k]; inputs below the first knot take
// the first level.
struct IsotonicMap {
  std::vector<double> knots;
  std::vector<double> levels;

  double operator()(double x) const noexcept;
  bool empty() const noexcept { return knots.empty(); }
  bool operator==(const IsotonicMap&) const = default;
};

// Fits targets against x. Points are stably sorted by x and points sharing
// an x are merged into one weighted point before pooling, so the result is
// a function of x.
IsotonicMap fit_isotonic_map(std::span<const double> x, std::span<const double> targets);

}  // namespace cascal
