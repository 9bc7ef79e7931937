#include "lutkan/matrix.hpp"

#include <algorithm>

#include "lutkan/error.hpp"

namespace lutkan {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorKind::input_shape, "matrix data size " + std::to_string(data_.size()) +
                                            " does not match " + std::to_string(rows_) + "x" +
                                            std::to_string(cols_));
  }
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace lutkan
