#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace wtp::diff {

// C[M,N] += A[M,K] * B[K,N], all row-major. Register-blocked so the
// compiler vectorizes the NR-wide accumulators; the K loop streams B rows.
template <class T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
    constexpr int MR = 4, NR = 32;
    int m = 0;
    for (; m + MR <= M; m += MR) {
        int n = 0;
        for (; n + NR <= N; n += NR) {
            T acc[MR][NR] = {};
            for (int k = 0; k < K; ++k) {
                const T* bp = B + static_cast<size_t>(k) * N + n;
                for (int i = 0; i < MR; ++i) {
                    const T a = A[static_cast<size_t>(m + i) * K + k];
                    for (int j = 0; j < NR; ++j) acc[i][j] += a * bp[j];
                }
            }
            for (int i = 0; i < MR; ++i) {
                T* cp = C + static_cast<size_t>(m + i) * N + n;
                for (int j = 0; j < NR; ++j) cp[j] += acc[i][j];
            }
        }
        if (n < N) {
            const int rem = N - n;
            T acc[MR][NR] = {};
            for (int k = 0; k < K; ++k) {
                const T* bp = B + static_cast<size_t>(k) * N + n;
                for (int i = 0; i < MR; ++i) {
                    const T a = A[static_cast<size_t>(m + i) * K + k];
                    for (int j = 0; j < rem; ++j) acc[i][j] += a * bp[j];
                }
            }
            for (int i = 0; i < MR; ++i) {
                T* cp = C + static_cast<size_t>(m + i) * N + n;
                for (int j = 0; j < rem; ++j) cp[j] += acc[i][j];
            }
        }
    }
    for (; m < M; ++m) {
        for (int k = 0; k < K; ++k) {
            const T a = A[static_cast<size_t>(m) * K + k];
            const T* bp = B + static_cast<size_t>(k) * N;
            T* cp = C + static_cast<size_t>(m) * N;
            for (int n = 0; n < N; ++n) cp[n] += a * bp[n];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T.
template <class T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
    // Transpose B into row-major [K,N] scratch, then reuse the nn kernel.
    std::vector<T> bt(static_cast<size_t>(K) * N);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) bt[static_cast<size_t>(k) * N + n] = B[static_cast<size_t>(n) * K + k];
    gemm_nn(M, N, K, A, bt.data(), C);
}

// C[M,N] += A[K,M]^T * B[K,N].
template <class T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
    std::vector<T> at(static_cast<size_t>(M) * K);
    for (int k = 0; k < K; ++k)
        for (int m = 0; m < M; ++m) at[static_cast<size_t>(m) * K + k] = A[static_cast<size_t>(k) * M + m];
    gemm_nn(M, N, K, at.data(), B, C);
}

}  // namespace wtp::diff
