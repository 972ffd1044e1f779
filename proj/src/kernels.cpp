#include "univid/kernels.hpp"

#include <cstring>
#include <vector>

namespace univid::kernels {
namespace {

constexpr int64_t kRows = 4;
constexpr int64_t kCols = 16;

using v8 = float __attribute__((vector_size(32)));

inline v8 load8(const float* p) {
  v8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(float* p, v8 v) { std::memcpy(p, &v, sizeof v); }

// C block [MR, 16] += A block * B, with A(r, k) = A[r * rs + k * ks]. Each
// element starts from its C value and adds its K terms in increasing k order,
// so the result does not depend on how rows are grouped into blocks.
template <int64_t MR>
inline void block_fixed(int64_t K, const float* A, int64_t rs, int64_t ks, const float* B, int64_t ldb, float* C,
                        int64_t ldc) {
  v8 lo[MR], hi[MR];
  for (int64_t r = 0; r < MR; ++r) {
    lo[r] = load8(C + r * ldc);
    hi[r] = load8(C + r * ldc + 8);
  }
  for (int64_t k = 0; k < K; ++k) {
    const v8 b0 = load8(B + k * ldb);
    const v8 b1 = load8(B + k * ldb + 8);
    for (int64_t r = 0; r < MR; ++r) {
      const float a = A[r * rs + k * ks];
      lo[r] += a * b0;
      hi[r] += a * b1;
    }
  }
  for (int64_t r = 0; r < MR; ++r) {
    store8(C + r * ldc, lo[r]);
    store8(C + r * ldc + 8, hi[r]);
  }
}

using v4 = float __attribute__((vector_size(16)));

template <int64_t MR, typename vec>
inline void block_narrow(int64_t K, const float* A, int64_t rs, int64_t ks, const float* B, int64_t ldb, float* C,
                         int64_t ldc) {
  vec acc[MR];
  for (int64_t r = 0; r < MR; ++r) std::memcpy(&acc[r], C + r * ldc, sizeof(vec));
  for (int64_t k = 0; k < K; ++k) {
    vec b;
    std::memcpy(&b, B + k * ldb, sizeof b);
    for (int64_t r = 0; r < MR; ++r) acc[r] += A[r * rs + k * ks] * b;
  }
  for (int64_t r = 0; r < MR; ++r) std::memcpy(C + r * ldc, &acc[r], sizeof(vec));
}

template <int64_t MR>
inline void block_scalar(int64_t n, int64_t K, const float* A, int64_t rs, int64_t ks, const float* B, int64_t ldb,
                         float* C, int64_t ldc) {
  for (int64_t r = 0; r < MR; ++r)
    for (int64_t j = 0; j < n; ++j) {
      float acc = C[r * ldc + j];
      for (int64_t k = 0; k < K; ++k) acc += A[r * rs + k * ks] * B[k * ldb + j];
      C[r * ldc + j] = acc;
    }
}

// c[0:n] += a * b[0:n]
inline void axpy(int64_t n, float a, const float* b, float* c) {
  int64_t j = 0;
  for (; j + 8 <= n; j += 8) store8(c + j, load8(c + j) + a * load8(b + j));
  if (j + 4 <= n) {
    v4 x, y;
    std::memcpy(&x, c + j, sizeof x);
    std::memcpy(&y, b + j, sizeof y);
    x += a * y;
    std::memcpy(c + j, &x, sizeof x);
    j += 4;
  }
  for (; j < n; ++j) c[j] += a * b[j];
}

template <int64_t MR>
inline void row_block(int64_t N, int64_t K, const float* A, int64_t rs, int64_t ks, const float* B, int64_t ldb,
                      float* C, int64_t ldc) {
  int64_t j = 0;
  for (; j + kCols <= N; j += kCols) block_fixed<MR>(K, A, rs, ks, B + j, ldb, C + j, ldc);
  if (j + 8 <= N) {
    block_narrow<MR, v8>(K, A, rs, ks, B + j, ldb, C + j, ldc);
    j += 8;
  }
  if (j + 4 <= N) {
    block_narrow<MR, v4>(K, A, rs, ks, B + j, ldb, C + j, ldc);
    j += 4;
  }
  if (j < N) block_scalar<MR>(N - j, K, A, rs, ks, B + j, ldb, C + j, ldc);
}

void gemm_strided(int64_t M, int64_t N, int64_t K, const float* A, int64_t rs, int64_t ks, const float* B,
                  int64_t ldb, float* C, int64_t ldc) {
  int64_t i = 0;
  for (; i + kRows <= M; i += kRows) row_block<kRows>(N, K, A + i * rs, rs, ks, B, ldb, C + i * ldc, ldc);
  for (; i < M; ++i) row_block<1>(N, K, A + i * rs, rs, ks, B, ldb, C + i * ldc, ldc);
}

}  // namespace

void gemm_nn(int64_t M, int64_t N, int64_t K, const float* A, int64_t lda, const float* B, int64_t ldb, float* C,
             int64_t ldc) {
  gemm_strided(M, N, K, A, lda, 1, B, ldb, C, ldc);
}

namespace {

void rank_one_updates(int64_t M, int64_t N, int64_t K, const float* A, int64_t lda, const float* B, int64_t ldb,
                      float* C, int64_t ldc) {
  // Row chunks sized so the C block stays in L1; k runs in order for each chunk.
  const int64_t chunk = N >= 2048 ? 1 : 2048 / N;
  for (int64_t i0 = 0; i0 < M; i0 += chunk) {
    const int64_t i1 = i0 + chunk < M ? i0 + chunk : M;
    for (int64_t k = 0; k < K; ++k) {
      const float* a = A + k * lda;
      const float* b = B + k * ldb;
      for (int64_t i = i0; i < i1; ++i) axpy(N, a[i], b, C + i * ldc);
    }
  }
}

}  // namespace

void gemm_tn(int64_t M, int64_t N, int64_t K, const float* A, int64_t lda, const float* B, int64_t ldb, float* C,
             int64_t ldc) {
  if (N >= 16 || M <= N) {
    rank_one_updates(M, N, K, A, lda, B, ldb, C, ldc);
    return;
  }
  // Narrow C: update C^T = B^T A instead, which has long rows.
  thread_local std::vector<float> ct;
  ct.resize(static_cast<size_t>(N * M));
  transpose(M, N, C, ldc, ct.data(), M);
  rank_one_updates(N, M, K, B, ldb, A, lda, ct.data(), M);
  transpose(N, M, ct.data(), M, C, ldc);
}

void gemm_nt(int64_t M, int64_t N, int64_t K, const float* A, int64_t lda, const float* B, int64_t ldb, float* C,
             int64_t ldc) {
  thread_local std::vector<float> bt;
  bt.resize(static_cast<size_t>(K * N));
  transpose(N, K, B, ldb, bt.data(), N);
  gemm_nn(M, N, K, A, lda, bt.data(), N, C, ldc);
}

void transpose(int64_t rows, int64_t cols, const float* src, int64_t lds, float* dst, int64_t ldd) {
  constexpr int64_t kBlock = 32;
  for (int64_t r0 = 0; r0 < rows; r0 += kBlock) {
    for (int64_t c0 = 0; c0 < cols; c0 += kBlock) {
      const int64_t r1 = r0 + kBlock < rows ? r0 + kBlock : rows;
      const int64_t c1 = c0 + kBlock < cols ? c0 + kBlock : cols;
      for (int64_t r = r0; r < r1; ++r)
        for (int64_t c = c0; c < c1; ++c) dst[c * ldd + r] = src[r * lds + c];
    }
  }
}

}  // namespace univid::kernels
