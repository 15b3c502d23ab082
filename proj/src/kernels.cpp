#include "magr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "magr/error.hpp"

#ifdef MAGR_HAVE_OPENMP
#include <omp.h>
#endif

namespace magr {

namespace {

using Offset = std::ptrdiff_t;

void check_spmm(const SparseRowMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::DimensionMismatch,
                "spmm: lhs has " + std::to_string(a.cols()) + " cols, rhs has " +
                    std::to_string(b.rows()) + " rows");
  }
}

// One output row of a * b, accumulated in stored column order.
inline void spmm_row(const SparseRowMatrix& a, const DenseMatrix& b, std::size_t r,
                     double scale, std::span<double> out) {
  const auto& idx = a.indices();
  const auto& val = a.values();
  const std::size_t width = b.cols();
  for (std::size_t e = a.row_begin(r); e < a.row_end(r); ++e) {
    const double w = scale * val[e];
    const double* src = b.row(idx[e]).data();
    for (std::size_t c = 0; c < width; ++c) out[c] += w * src[c];
  }
}

inline double normalize_row(std::span<double> row, double eps) {
  double sq = 0.0;
  for (double x : row) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm >= eps) {
    const double inv = 1.0 / norm;
    for (double& x : row) x *= inv;
  }
  return norm;
}

void softmax_group(std::span<const double> in, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : in) mx = std::max(mx, x);
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    total += out[i];
  }
  const double inv = 1.0 / total;
  for (double& x : out) x *= inv;
}

void check_groups(std::span<const double> logits, std::span<const std::size_t> offsets) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != logits.size()) {
    throw Error(ErrorKind::InvalidArgument, "row_softmax_grouped: offsets do not cover logits");
  }
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    if (offsets[g + 1] <= offsets[g]) {
      throw Error(ErrorKind::InvalidArgument,
                  "row_softmax_grouped: empty group " + std::to_string(g));
    }
  }
}

inline void matmul_nt_row(const DenseMatrix& a, const DenseMatrix& b, std::size_t r,
                          std::span<double> out) {
  const auto ar = a.row(r);
  for (std::size_t c = 0; c < b.rows(); ++c) out[c] = dot(ar, b.row(c));
}

struct Scored {
  double score;
  std::size_t index;
};

inline bool better(const Scored& x, const Scored& y) {
  return x.score > y.score || (x.score == y.score && x.index < y.index);
}

std::vector<std::size_t> top_k_row(const DenseMatrix& qn, const DenseMatrix& bn, std::size_t r,
                                   std::size_t k, bool exclude_self) {
  std::vector<Scored> scored;
  scored.reserve(bn.rows());
  const auto q = qn.row(r);
  for (std::size_t j = 0; j < bn.rows(); ++j) {
    if (exclude_self && j == r) continue;
    scored.push_back({dot(q, bn.row(j)), j});
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<Offset>(take), scored.end(),
                    better);
  std::vector<std::size_t> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = scored[i].index;
  return out;
}

void check_knn(const DenseMatrix& query, const DenseMatrix& base) {
  if (query.cols() != base.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "top_k_cosine: feature widths differ");
  }
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

int kernel_threads() {
#ifdef MAGR_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

DenseMatrix spmm(const SparseRowMatrix& a, const DenseMatrix& b) {
  check_spmm(a, b);
  DenseMatrix out(a.rows(), b.cols());
  const auto n = static_cast<Offset>(a.rows());
#pragma omp parallel for schedule(static)
  for (Offset r = 0; r < n; ++r) {
    spmm_row(a, b, static_cast<std::size_t>(r), 1.0, out.row(static_cast<std::size_t>(r)));
  }
  return out;
}

void spmm_accumulate(const SparseRowMatrix& a, const DenseMatrix& b, double scale,
                     DenseMatrix& out) {
  check_spmm(a, b);
  if (out.rows() != a.rows() || out.cols() != b.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "spmm_accumulate: output shape");
  }
  // Accumulate into a zeroed row first so the result is bitwise equal to
  // out + scale * spmm(a, b).
  const auto n = static_cast<Offset>(a.rows());
#pragma omp parallel
  {
    std::vector<double> tmp(b.cols());
#pragma omp for schedule(static)
    for (Offset r = 0; r < n; ++r) {
      std::fill(tmp.begin(), tmp.end(), 0.0);
      spmm_row(a, b, static_cast<std::size_t>(r), 1.0, tmp);
      auto dst = out.row(static_cast<std::size_t>(r));
      for (std::size_t c = 0; c < tmp.size(); ++c) dst[c] += scale * tmp[c];
    }
  }
}

SparseRowMatrix transpose(const SparseRowMatrix& a) {
  std::vector<std::size_t> offsets(a.cols() + 1, 0);
  for (std::size_t c : a.indices()) ++offsets[c + 1];
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  std::vector<std::size_t> indices(a.nnz());
  std::vector<double> values(a.nnz());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t e = a.row_begin(r); e < a.row_end(r); ++e) {
      const std::size_t slot = cursor[a.indices()[e]]++;
      indices[slot] = r;
      values[slot] = a.values()[e];
    }
  }
  return {a.cols(), a.rows(), std::move(offsets), std::move(indices), std::move(values), false};
}

DenseMatrix l2_normalize_rows(const DenseMatrix& m, double eps) {
  if (eps <= 0.0) throw Error(ErrorKind::InvalidArgument, "normalization eps must be positive");
  DenseMatrix out = m;
  const auto n = static_cast<Offset>(m.rows());
#pragma omp parallel for schedule(static)
  for (Offset r = 0; r < n; ++r) normalize_row(out.row(static_cast<std::size_t>(r)), eps);
  return out;
}

void l2_normalize_rows_inplace(DenseMatrix& m, std::vector<double>& norms, double eps) {
  norms.assign(m.rows(), 0.0);
  const auto n = static_cast<Offset>(m.rows());
#pragma omp parallel for schedule(static)
  for (Offset r = 0; r < n; ++r) {
    const auto i = static_cast<std::size_t>(r);
    norms[i] = normalize_row(m.row(i), eps);
  }
}

DenseMatrix l2_normalize_rows_backward(const DenseMatrix& grad_y, const DenseMatrix& y,
                                       std::span<const double> norms, double eps) {
  if (!grad_y.same_shape(y) || norms.size() != y.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "normalize backward");
  }
  DenseMatrix gx(y.rows(), y.cols());
  const auto n = static_cast<Offset>(y.rows());
#pragma omp parallel for schedule(static)
  for (Offset rr = 0; rr < n; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const auto gy = grad_y.row(r);
    auto out = gx.row(r);
    if (norms[r] < eps) {
      std::copy(gy.begin(), gy.end(), out.begin());
      continue;
    }
    const auto yr = y.row(r);
    const double proj = dot(yr, gy);
    const double inv = 1.0 / norms[r];
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = (gy[c] - yr[c] * proj) * inv;
  }
  return gx;
}

void softmax_inplace(std::span<double> values) {
  if (values.empty()) return;
  softmax_group(values, values);
}

std::vector<double> row_softmax_grouped(std::span<const double> logits,
                                        std::span<const std::size_t> offsets) {
  check_groups(logits, offsets);
  std::vector<double> out(logits.size());
  const auto groups = static_cast<Offset>(offsets.size() - 1);
#pragma omp parallel for schedule(static)
  for (Offset g = 0; g < groups; ++g) {
    const std::size_t b = offsets[static_cast<std::size_t>(g)];
    const std::size_t e = offsets[static_cast<std::size_t>(g) + 1];
    softmax_group(logits.subspan(b, e - b), std::span<double>(out).subspan(b, e - b));
  }
  return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::DimensionMismatch, "matmul");
  DenseMatrix out(a.rows(), b.cols());
  const auto n = static_cast<Offset>(a.rows());
#pragma omp parallel for schedule(static)
  for (Offset rr = 0; rr < n; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    auto dst = out.row(r);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double w = a(r, k);
      const auto src = b.row(k);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw Error(ErrorKind::DimensionMismatch, "matmul_nt");
  DenseMatrix out(a.rows(), b.rows());
  const auto n = static_cast<Offset>(a.rows());
#pragma omp parallel for schedule(static)
  for (Offset r = 0; r < n; ++r) {
    matmul_nt_row(a, b, static_cast<std::size_t>(r), out.row(static_cast<std::size_t>(r)));
  }
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw Error(ErrorKind::DimensionMismatch, "matmul_tn");
  DenseMatrix out(a.cols(), b.cols());
  const auto n = static_cast<Offset>(a.cols());
#pragma omp parallel for schedule(static)
  for (Offset ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.rows(); ++k) {
      const double w = a(k, i);
      if (w == 0.0) continue;
      const auto src = b.row(k);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

DenseMatrix dense_solve(const DenseMatrix& a, const DenseMatrix& b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.rows() != n) throw Error(ErrorKind::DimensionMismatch, "dense_solve");
  DenseMatrix lu = a;
  DenseMatrix x = b;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(lu(r, col)) > std::abs(lu(pivot, col))) pivot = r;
    }
    if (std::abs(lu(pivot, col)) < 1e-300) {
      throw Error(ErrorKind::Numeric, "dense_solve: singular matrix");
    }
    if (pivot != col) {
      std::swap_ranges(lu.row(col).begin(), lu.row(col).end(), lu.row(pivot).begin());
      std::swap_ranges(x.row(col).begin(), x.row(col).end(), x.row(pivot).begin());
    }
    const double inv = 1.0 / lu(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) * inv;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) lu(r, c) -= f * lu(col, c);
      for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) -= f * x(col, c);
    }
  }
  for (std::size_t rr = n; rr-- > 0;) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double acc = x(rr, c);
      for (std::size_t k = rr + 1; k < n; ++k) acc -= lu(rr, k) * x(k, c);
      x(rr, c) = acc / lu(rr, rr);
    }
  }
  return x;
}

std::vector<std::vector<std::size_t>> top_k_cosine(const DenseMatrix& query,
                                                   const DenseMatrix& base, std::size_t k,
                                                   bool exclude_self) {
  check_knn(query, base);
  const DenseMatrix qn = l2_normalize_rows(query);
  const DenseMatrix bn = l2_normalize_rows(base);
  std::vector<std::vector<std::size_t>> out(query.rows());
  const auto n = static_cast<Offset>(query.rows());
#pragma omp parallel for schedule(dynamic, 16)
  for (Offset r = 0; r < n; ++r) {
    out[static_cast<std::size_t>(r)] =
        top_k_row(qn, bn, static_cast<std::size_t>(r), k, exclude_self);
  }
  return out;
}

namespace serial {

DenseMatrix spmm(const SparseRowMatrix& a, const DenseMatrix& b) {
  check_spmm(a, b);
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) spmm_row(a, b, r, 1.0, out.row(r));
  return out;
}

DenseMatrix l2_normalize_rows(const DenseMatrix& m, double eps) {
  if (eps <= 0.0) throw Error(ErrorKind::InvalidArgument, "normalization eps must be positive");
  DenseMatrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) normalize_row(out.row(r), eps);
  return out;
}

std::vector<double> row_softmax_grouped(std::span<const double> logits,
                                        std::span<const std::size_t> offsets) {
  check_groups(logits, offsets);
  std::vector<double> out(logits.size());
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    const std::size_t b = offsets[g], e = offsets[g + 1];
    softmax_group(logits.subspan(b, e - b), std::span<double>(out).subspan(b, e - b));
  }
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw Error(ErrorKind::DimensionMismatch, "matmul_nt");
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) matmul_nt_row(a, b, r, out.row(r));
  return out;
}

std::vector<std::vector<std::size_t>> top_k_cosine(const DenseMatrix& query,
                                                   const DenseMatrix& base, std::size_t k,
                                                   bool exclude_self) {
  check_knn(query, base);
  const DenseMatrix qn = serial::l2_normalize_rows(query);
  const DenseMatrix bn = serial::l2_normalize_rows(base);
  std::vector<std::vector<std::size_t>> out(query.rows());
  for (std::size_t r = 0; r < query.rows(); ++r) out[r] = top_k_row(qn, bn, r, k, exclude_self);
  return out;
}

}  // namespace serial

}  // namespace magr
