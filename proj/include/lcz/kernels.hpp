#pragma once

#include <cstddef>

// Inner loops shared by matmul and conv2d. Row-major throughout. Loops are
// written in accumulate-into-row form with a fixed 4-way unroll over the
// contraction index, which keeps every output element's reduction order a
// function of the contraction length alone, so results do not depend on how
// many rows are processed per call (batched and single-sample evaluation
// agree bitwise).

namespace lcz::kern {

// y += a * x
template <typename T>
inline void axpy(std::size_t n, T a, const T* x, T* y) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot(std::size_t n, const T* a, const T* b) {
  T acc = 0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
inline T sum(std::size_t n, const T* a) {
  T acc = 0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
inline void gemm_acc(std::size_t M, std::size_t K, std::size_t N,
                     const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    std::size_t k = 0;
    for (; k + 4 <= K; k += 4) {
      const T a0 = a[k], a1 = a[k + 1], a2 = a[k + 2], a3 = a[k + 3];
      const T* b0 = B + k * N;
      const T* b1 = b0 + N;
      const T* b2 = b1 + N;
      const T* b3 = b2 + N;
#pragma omp simd
      for (std::size_t j = 0; j < N; ++j) {
        c[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
      }
    }
    for (; k < K; ++k) axpy(N, a[k], B + k * N, c);
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
inline void gemm_abt_acc(std::size_t M, std::size_t K, std::size_t N,
                         const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    std::size_t j = 0;
    for (; j + 4 <= N; j += 4) {
      const T* b0 = B + j * K;
      const T* b1 = b0 + K;
      const T* b2 = b1 + K;
      const T* b3 = b2 + K;
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
      for (std::size_t k = 0; k < K; ++k) {
        s0 += a[k] * b0[k];
        s1 += a[k] * b1[k];
        s2 += a[k] * b2[k];
        s3 += a[k] * b3[k];
      }
      c[j] += s0;
      c[j + 1] += s1;
      c[j + 2] += s2;
      c[j + 3] += s3;
    }
    for (; j < N; ++j) c[j] += dot(K, a, B + j * K);
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
inline void gemm_atb_acc(std::size_t M, std::size_t K, std::size_t N,
                         const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    std::size_t k = 0;
    for (; k + 4 <= K; k += 4) {
      const T a0 = A[k * M + i], a1 = A[(k + 1) * M + i], a2 = A[(k + 2) * M + i],
              a3 = A[(k + 3) * M + i];
      const T* b0 = B + k * N;
      const T* b1 = b0 + N;
      const T* b2 = b1 + N;
      const T* b3 = b2 + N;
#pragma omp simd
      for (std::size_t j = 0; j < N; ++j) {
        c[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
      }
    }
    for (; k < K; ++k) axpy(N, A[k * M + i], B + k * N, c);
  }
}

}  // namespace lcz::kern
