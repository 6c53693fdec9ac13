#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "mmfuse/errors.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

// Dense row-major matrix of doubles: the only numeric container in the
// library. Vectors are 1xN matrices. Immutable by convention once built by an
// operation; all operations below are pure functions returning new values.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::vector<double> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

// Standard product; throws ShapeError naming both shapes on a mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Elementwise product of same-shape matrices.
Matrix hadamard(const Matrix& a, const Matrix& b);

// Elementwise sum; b may also be a 1xN row vector broadcast onto each row of a.
Matrix add(const Matrix& a, const Matrix& b);

Matrix subtract(const Matrix& a, const Matrix& b);

Matrix scale(const Matrix& m, double factor);

// Column-wise mean, producing a 1xC row.
Matrix mean_rows(const Matrix& m);

// Normalizes each row to unit L2 norm; all-zero rows are left as-is.
Matrix l2_normalize_row(const Matrix& m);

// Row-wise softmax with per-row max subtraction, so any finite input is safe.
Matrix softmax_rows(const Matrix& m);

// Elementwise logistic function, computed with the stable piecewise formula.
Matrix sigmoid_elem(const Matrix& m);

// Uniform Glorot initialization: entries in +-sqrt(6 / (rows + cols)).
Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng);

using LossFn = std::function<double(const Matrix&)>;

// Central-difference gradient of a scalar function, one coordinate at a time.
// This is the oracle every analytic gradient in the library is checked against.
Matrix finite_diff_grad(const LossFn& loss_fn, const Matrix& at, double eps = 1e-5);

}  // namespace mmfuse
