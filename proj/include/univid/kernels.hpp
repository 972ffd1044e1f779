#pragma once

#include <cstdint>

// Single-precision matrix products used by every layer.
//
// All routines accumulate into C. Element C[i][j] always sums its K terms in
// increasing k order, whatever M is, so a row computed inside a large batch is
// bitwise identical to the same row computed alone.
namespace univid::kernels {

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(int64_t M, int64_t N, int64_t K, const float* A, int64_t lda, const float* B, int64_t ldb, float* C,
             int64_t ldc);

// C[M,N] += A^T * B with A stored as [K,M]
void gemm_tn(int64_t M, int64_t N, int64_t K, const float* A, int64_t lda, const float* B, int64_t ldb, float* C,
             int64_t ldc);

// C[M,N] += A * B^T with B stored as [N,K]
void gemm_nt(int64_t M, int64_t N, int64_t K, const float* A, int64_t lda, const float* B, int64_t ldb, float* C,
             int64_t ldc);

// dst[cols, rows] = src[rows, cols]^T
void transpose(int64_t rows, int64_t cols, const float* src, int64_t lds, float* dst, int64_t ldd);

}  // namespace univid::kernels
