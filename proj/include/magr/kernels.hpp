#pragma once

// Numeric kernels. Functions in namespace magr are the OpenMP-parallel
// versions used by the pipeline; namespace magr::serial holds the plain
// single-threaded reference loops. Each parallel kernel partitions work by
// output row and keeps the per-row accumulation order of its serial twin, so
// results are bit-identical regardless of thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "magr/tensor.hpp"

namespace magr {

inline constexpr double kNormEps = 1e-12;

/// Sparse-dense product a * b.
DenseMatrix spmm(const SparseRowMatrix& a, const DenseMatrix& b);
/// out += scale * (a * b).
void spmm_accumulate(const SparseRowMatrix& a, const DenseMatrix& b, double scale,
                     DenseMatrix& out);
/// Stable transpose: entries of each output row appear in ascending source-row order.
SparseRowMatrix transpose(const SparseRowMatrix& a);

/// Unit-normalizes each row; rows with norm < eps pass through unchanged.
DenseMatrix l2_normalize_rows(const DenseMatrix& m, double eps = kNormEps);
/// In-place variant that records each row's pre-normalization norm.
void l2_normalize_rows_inplace(DenseMatrix& m, std::vector<double>& norms, double eps = kNormEps);
/// Reverse pass of row normalization: given dL/dy with y = Norm(x), returns dL/dx.
DenseMatrix l2_normalize_rows_backward(const DenseMatrix& grad_y, const DenseMatrix& y,
                                       std::span<const double> norms, double eps = kNormEps);

/// Softmax within each group [offsets[g], offsets[g+1]); throws on an empty group.
std::vector<double> row_softmax_grouped(std::span<const double> logits,
                                        std::span<const std::size_t> offsets);
/// Max-shifted softmax of one group, in place. Empty input is a no-op.
void softmax_inplace(std::span<double> values);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// a * b^T.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
/// a^T * b.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);

/// Solves a * x = b by LU with partial pivoting.
DenseMatrix dense_solve(const DenseMatrix& a, const DenseMatrix& b);

/// For each query row, the k base rows with the highest cosine similarity,
/// best first, ties broken by ascending base index. With exclude_self the
/// base row sharing the query's index is skipped.
std::vector<std::vector<std::size_t>> top_k_cosine(const DenseMatrix& query,
                                                   const DenseMatrix& base, std::size_t k,
                                                   bool exclude_self);

double dot(std::span<const double> a, std::span<const double> b);

namespace serial {

DenseMatrix spmm(const SparseRowMatrix& a, const DenseMatrix& b);
DenseMatrix l2_normalize_rows(const DenseMatrix& m, double eps = kNormEps);
std::vector<double> row_softmax_grouped(std::span<const double> logits,
                                        std::span<const std::size_t> offsets);
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
std::vector<std::vector<std::size_t>> top_k_cosine(const DenseMatrix& query,
                                                   const DenseMatrix& base, std::size_t k,
                                                   bool exclude_self);

}  // namespace serial

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int kernel_threads();

}  // namespace magr
