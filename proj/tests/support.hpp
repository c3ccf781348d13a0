#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cascal/error.hpp"
#include "cascal/logits_io.hpp"
#include "cascal/table.hpp"

namespace cascal::testing {

// Random labelled table with f32-representable logits of spread `scale`.
inline LogitsTable random_table(std::mt19937_64& rng, std::size_t n, std::size_t c,
                                double scale = 3.0, std::string name = "random") {
  std::normal_distribution<double> normal(0.0, scale);
  std::uniform_int_distribution<Label> label(0, static_cast<Label>(c - 1));
  Matrix logits(n, c);
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) logits(i, k) = static_cast<float>(normal(rng));
    labels[i] = label(rng);
  }
  return LogitsTable(std::move(name), std::move(logits), std::move(labels));
}

inline LogitsTable table_of(std::vector<std::vector<double>> rows, std::vector<Label> labels,
                            std::string name = "t") {
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(i, k) = rows[i][k];
  }
  return LogitsTable(std::move(name), std::move(m), std::move(labels));
}

template <typename F>
Errc error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected a cascal::Error");
}

}  // namespace cascal::testing
