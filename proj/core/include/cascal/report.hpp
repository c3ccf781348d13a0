#pragma once

#include <string>
#include <string_view>

#include "cascal/metrics.hpp"

namespace cascal {

// `bin_lo,bin_hi,count,conf,acc`, one line per bin, fixed-precision numbers
// so identical inputs give identical bytes.
std::string bins_to_csv(const BinStats& stats);

// Reliability diagram: accuracy bars per bin, mean-confidence markers and
// the identity diagonal. No timestamps or other run-dependent content.
std::string reliability_svg(const BinStats& stats, std::string_view title);

// printf-style "%.*f" without locale surprises.
std::string format_fixed(double value, int digits);

}  // namespace cascal
