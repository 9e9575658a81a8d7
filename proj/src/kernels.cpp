#include "graphclip/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace graphclip::kernels {

namespace {

void check_nn(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("gemm_nn: " + a.shape_str() + " · " + b.shape_str());
}
void check_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("gemm_nt: " + a.shape_str() + " · " + b.shape_str() + "ᵀ");
}
void check_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("gemm_tn: " + a.shape_str() + "ᵀ · " + b.shape_str());
}

inline void nn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t k = a.cols(), m = b.cols();
  double* ci = c.data() + i * m;
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = a(i, p);
    const double* bp = b.data() + p * m;
    for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
  }
}

inline void nt_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t k = a.cols(), m = b.rows();
  const double* ai = a.data() + i * k;
  for (std::size_t j = 0; j < m; ++j) {
    const double* bj = b.data() + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
    c(i, j) = s;
  }
}

inline void tn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t k = a.rows(), m = b.cols();
  double* ci = c.data() + i * m;
  for (std::size_t p = 0; p < k; ++p) {
    const double api = a(p, i);
    const double* bp = b.data() + p * m;
    for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
  }
}

inline void softmax_row(const Matrix& x, Matrix& y, std::size_t r) {
  const auto in = x.row_span(r);
  auto out = y.row_span(r);
  if (in.empty()) return;
  const double mx = *std::max_element(in.begin(), in.end());
  double z = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp(in[j] - mx);
    z += out[j];
  }
  for (double& v : out) v /= z;
}

}  // namespace

namespace serial {

Matrix gemm_nn(const Matrix& a, const Matrix& b) {
  check_nn(a, b);
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) nn_row(a, b, c, i);
  return c;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  check_nt(a, b);
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) nt_row(a, b, c, i);
  return c;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  check_tn(a, b);
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) tn_row(a, b, c, i);
  return c;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) softmax_row(x, y, r);
  return y;
}

}  // namespace serial

namespace parallel {

Matrix gemm_nn(const Matrix& a, const Matrix& b) {
  check_nn(a, b);
  Matrix c(a.rows(), b.cols());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) nn_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  check_nt(a, b);
  Matrix c(a.rows(), b.rows());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) nt_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  check_tn(a, b);
  Matrix c(a.cols(), b.cols());
  const auto n = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) tn_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  const auto n = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) softmax_row(x, y, static_cast<std::size_t>(r));
  return y;
}

}  // namespace parallel

Matrix gemm_nn(const Matrix& a, const Matrix& b) {
  return a.rows() * a.cols() * b.cols() >= kParallelWorkThreshold ? parallel::gemm_nn(a, b)
                                                                  : serial::gemm_nn(a, b);
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  return a.rows() * a.cols() * b.rows() >= kParallelWorkThreshold ? parallel::gemm_nt(a, b)
                                                                  : serial::gemm_nt(a, b);
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  return a.rows() * a.cols() * b.cols() >= kParallelWorkThreshold ? parallel::gemm_tn(a, b)
                                                                  : serial::gemm_tn(a, b);
}

Matrix softmax_rows(const Matrix& x) {
  return x.size() >= kParallelWorkThreshold ? parallel::softmax_rows(x) : serial::softmax_rows(x);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace graphclip::kernels
