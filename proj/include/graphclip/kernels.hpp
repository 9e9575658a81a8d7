#pragma once

#include "graphclip/matrix.hpp"

// Dense kernels used by the tape. Every kernel has a serial reference and an
// OpenMP variant that parallelizes over output rows only, so both produce
// bit-identical results (the per-element accumulation order is unchanged).
namespace graphclip::kernels {

namespace serial {
Matrix gemm_nn(const Matrix& a, const Matrix& b);  // a · b
Matrix gemm_nt(const Matrix& a, const Matrix& b);  // a · bᵀ
Matrix gemm_tn(const Matrix& a, const Matrix& b);  // aᵀ · b
Matrix softmax_rows(const Matrix& x);
}  // namespace serial

namespace parallel {
Matrix gemm_nn(const Matrix& a, const Matrix& b);
Matrix gemm_nt(const Matrix& a, const Matrix& b);
Matrix gemm_tn(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& x);
}  // namespace parallel

// Dispatching entry points: the parallel path above a work threshold.
Matrix gemm_nn(const Matrix& a, const Matrix& b);
Matrix gemm_nt(const Matrix& a, const Matrix& b);
Matrix gemm_tn(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& x);

// Multiply-add count above which the dispatcher uses the OpenMP path.
inline constexpr std::size_t kParallelWorkThreshold = 1u << 16;

int max_threads();

}  // namespace graphclip::kernels
