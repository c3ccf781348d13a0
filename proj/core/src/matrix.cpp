#include "cascal/matrix.hpp"

#include <string>

#include "cascal/error.hpp"

namespace cascal {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    raise(Errc::dimension_mismatch, "matrix data has " + std::to_string(data_.size()) +
                                        " entries, expected " + std::to_string(rows_ * cols_));
  }
}

}  // namespace cascal
