#include "mmfuse/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmfuse {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("matrix dimensions must be positive, got " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) {
    throw ShapeError("from_rows: no rows given");
  }
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != m.cols_) {
      throw ShapeError("ragged row " + std::to_string(r) + ": expected " +
                       std::to_string(m.cols_) + " columns, got " +
                       std::to_string(row.size()));
    }
    std::copy(row.begin(), row.end(), m.data_.begin() + r * m.cols_);
    ++r;
  }
  return m;
}

Matrix Matrix::row_vector(std::vector<double> values) {
  Matrix m(1, values.size());
  m.data_ = std::move(values);
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a) +
                     " times " + shape_string(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out(j, i) = m(i, j);
    }
  }
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("hadamard: shapes differ, " + shape_string(a) + " vs " +
                     shape_string(b));
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] *= b.data()[i];
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.same_shape(b)) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
  }
  if (b.rows() == 1 && b.cols() == a.cols()) {
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < a.cols(); ++j) {
        out(i, j) += b(0, j);
      }
    }
    return out;
  }
  throw ShapeError("add: shapes " + shape_string(a) + " and " + shape_string(b) +
                   " are neither equal nor row-broadcastable");
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("subtract: shapes differ, " + shape_string(a) + " vs " +
                     shape_string(b));
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix scale(const Matrix& m, double factor) {
  Matrix out = m;
  for (double& v : out.data()) v *= factor;
  return out;
}

Matrix mean_rows(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out(0, j) += m(i, j);
    }
  }
  const double inv = 1.0 / static_cast<double>(m.rows());
  for (double& v : out.data()) v *= inv;
  return out;
}

Matrix l2_normalize_row(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sumsq = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) sumsq += m(i, j) * m(i, j);
    if (sumsq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sumsq);
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) *= inv;
  }
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double row_max = m(i, 0);
    for (std::size_t j = 1; j < m.cols(); ++j) row_max = std::max(row_max, m(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out(i, j) = std::exp(m(i, j) - row_max);
      sum += out(i, j);
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) *= inv;
  }
  return out;
}

Matrix sigmoid_elem(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) {
    // Both branches avoid exponentiating a large positive argument.
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return out;
}

Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix out(rows, cols);
  for (double& v : out.data()) v = rng.uniform(-bound, bound);
  return out;
}

Matrix finite_diff_grad(const LossFn& loss_fn, const Matrix& at, double eps) {
  if (eps <= 0.0) {
    throw ConfigError("finite_diff_grad: eps must be positive");
  }
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double original = probe.data()[i];
    probe.data()[i] = original + eps;
    const double plus = loss_fn(probe);
    probe.data()[i] = original - eps;
    const double minus = loss_fn(probe);
    probe.data()[i] = original;
    grad.data()[i] = (plus - minus) / (2.0 * eps);
  }
  return grad;
}

}  // namespace mmfuse
