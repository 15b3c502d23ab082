#include "magr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "magr/error.hpp"

namespace magr {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorKind::DimensionMismatch,
                "dense data length " + std::to_string(data_.size()) + " != " +
                    std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorKind::DimensionMismatch, "ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void DenseMatrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool DenseMatrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

DenseMatrix DenseMatrix::gather_rows(std::span<const std::size_t> ids) const {
  DenseMatrix out(ids.size(), cols_);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= rows_) throw Error(ErrorKind::InvalidArgument, "row id out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(ids[r] * cols_), cols_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
  }
  return out;
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& other) {
  if (!same_shape(other)) throw Error(ErrorKind::DimensionMismatch, "matrix +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& other) {
  if (!same_shape(other)) throw Error(ErrorKind::DimensionMismatch, "matrix -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) {
  for (auto& x : data_) x *= s;
  return *this;
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

double frobenius_norm(const DenseMatrix& m) {
  double acc = 0.0;
  for (double x : m.data()) acc += x * x;
  return std::sqrt(acc);
}

double inf_norm(const DenseMatrix& m) {
  double best = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double x : m.row(r)) s += std::abs(x);
    best = std::max(best, s);
  }
  return best;
}

double max_abs(const DenseMatrix& m) {
  double best = 0.0;
  for (double x : m.data()) best = std::max(best, std::abs(x));
  return best;
}

SparseRowMatrix::SparseRowMatrix(std::size_t rows, std::size_t cols,
                                 std::vector<std::size_t> offsets,
                                 std::vector<std::size_t> indices, std::vector<double> values,
                                 bool row_stochastic)
    : rows_(rows),
      cols_(cols),
      offsets_(std::move(offsets)),
      indices_(std::move(indices)),
      values_(std::move(values)),
      row_stochastic_(row_stochastic) {
  validate();
}

SparseRowMatrix SparseRowMatrix::identity(std::size_t n) {
  std::vector<std::size_t> offsets(n + 1), indices(n);
  for (std::size_t i = 0; i <= n; ++i) offsets[i] = i;
  for (std::size_t i = 0; i < n; ++i) indices[i] = i;
  return {n, n, std::move(offsets), std::move(indices), std::vector<double>(n, 1.0), true};
}

SparseRowMatrix SparseRowMatrix::from_dense(const DenseMatrix& m, bool row_stochastic) {
  std::vector<std::size_t> offsets{0}, indices;
  std::vector<double> values;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (m(r, c) != 0.0) {
        indices.push_back(c);
        values.push_back(m(r, c));
      }
    }
    offsets.push_back(indices.size());
  }
  return {m.rows(), m.cols(), std::move(offsets), std::move(indices), std::move(values),
          row_stochastic};
}

SparseRowMatrix SparseRowMatrix::zeros(std::size_t rows, std::size_t cols) {
  return {rows, cols, std::vector<std::size_t>(rows + 1, 0), {}, {}, false};
}

double SparseRowMatrix::at(std::size_t r, std::size_t c) const {
  const auto first = indices_.begin() + static_cast<std::ptrdiff_t>(offsets_[r]);
  const auto last = indices_.begin() + static_cast<std::ptrdiff_t>(offsets_[r + 1]);
  const auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return 0.0;
  return values_[static_cast<std::size_t>(it - indices_.begin())];
}

DenseMatrix SparseRowMatrix::to_dense() const {
  DenseMatrix out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t e = offsets_[r]; e < offsets_[r + 1]; ++e) out(r, indices_[e]) = values_[e];
  }
  return out;
}

void SparseRowMatrix::validate() const {
  if (offsets_.size() != rows_ + 1 || offsets_.front() != 0 ||
      offsets_.back() != indices_.size() || values_.size() != indices_.size()) {
    throw Error(ErrorKind::InvalidArgument, "sparse matrix: inconsistent array lengths");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (offsets_[r] > offsets_[r + 1]) {
      throw Error(ErrorKind::InvalidArgument, "sparse matrix: offsets not monotone");
    }
    double sum = 0.0;
    for (std::size_t e = offsets_[r]; e < offsets_[r + 1]; ++e) {
      if (indices_[e] >= cols_) {
        throw Error(ErrorKind::InvalidArgument, "sparse matrix: column index out of range");
      }
      if (e > offsets_[r] && indices_[e] <= indices_[e - 1]) {
        throw Error(ErrorKind::InvalidArgument,
                    "sparse matrix: columns unsorted or duplicated in row " + std::to_string(r));
      }
      if (!std::isfinite(values_[e])) {
        throw Error(ErrorKind::Numeric, "sparse matrix: non-finite value");
      }
      sum += values_[e];
    }
    if (row_stochastic_) {
      if (offsets_[r] == offsets_[r + 1]) {
        throw Error(ErrorKind::InvalidArgument,
                    "row-stochastic matrix has empty row " + std::to_string(r));
      }
      for (std::size_t e = offsets_[r]; e < offsets_[r + 1]; ++e) {
        if (values_[e] < 0.0) throw Error(ErrorKind::InvalidArgument, "negative stochastic weight");
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw Error(ErrorKind::Numeric,
                    "row " + std::to_string(r) + " sums to " + std::to_string(sum));
      }
    }
  }
}

}  // namespace magr
