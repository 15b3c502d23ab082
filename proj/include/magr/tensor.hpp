#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace magr {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double value);
  bool same_shape(const DenseMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;

  /// Rows selected in the given order.
  DenseMatrix gather_rows(std::span<const std::size_t> ids) const;

  DenseMatrix& operator+=(const DenseMatrix& other);
  DenseMatrix& operator-=(const DenseMatrix& other);
  DenseMatrix& operator*=(double s);

  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(double s, DenseMatrix a);

double frobenius_norm(const DenseMatrix& m);
/// Max absolute row sum.
double inf_norm(const DenseMatrix& m);
double max_abs(const DenseMatrix& m);

/// Compressed sparse rows with sorted, unique column indices per row.
class SparseRowMatrix {
 public:
  SparseRowMatrix() = default;
  SparseRowMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> offsets,
                  std::vector<std::size_t> indices, std::vector<double> values,
                  bool row_stochastic = false);

  static SparseRowMatrix identity(std::size_t n);
  static SparseRowMatrix from_dense(const DenseMatrix& m, bool row_stochastic = false);
  /// Empty pattern (all rows empty).
  static SparseRowMatrix zeros(std::size_t rows, std::size_t cols);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return indices_.size(); }
  bool row_stochastic() const noexcept { return row_stochastic_; }

  std::size_t row_begin(std::size_t r) const { return offsets_[r]; }
  std::size_t row_end(std::size_t r) const { return offsets_[r + 1]; }
  std::size_t row_size(std::size_t r) const { return offsets_[r + 1] - offsets_[r]; }

  const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
  const std::vector<std::size_t>& indices() const noexcept { return indices_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  /// Value at (r, c), zero when absent.
  double at(std::size_t r, std::size_t c) const;
  DenseMatrix to_dense() const;

  /// Throws on any structural violation; checks row sums when flagged row-stochastic.
  void validate() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> indices_;
  std::vector<double> values_;
  bool row_stochastic_ = false;
};

}  // namespace magr
