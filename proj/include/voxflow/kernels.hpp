#pragma once

#include <cstdint>
#include <vector>

namespace voxflow {

// Dense kernels used by the tape. Every output row is produced by the same
// code path over the same k-order regardless of its row index, so a row's
// bits depend only on its contents and the right-hand matrix. The bitwise
// permutation properties of the set-attention ops rest on this.

// C[M,N] = A[M,K] * B[K,N]
inline void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* cr = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) cr[j] = 0.0;
        const double* ar = a + static_cast<std::int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = ar[p];
            const double* br = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

inline void transpose_into(const double* a, double* at, int m, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) at[static_cast<std::int64_t>(j) * m + i] =
            a[static_cast<std::int64_t>(i) * n + j];
}

// C[M,N] = A[M,K] * B[N,K]^T
inline void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    std::vector<double> bt(static_cast<std::size_t>(k) * n);
    transpose_into(b, bt.data(), n, k);
    mm_nn(a, bt.data(), c, m, k, n);
}

// C[M,N] = A[K,M]^T * B[K,N]
inline void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    std::vector<double> at(static_cast<std::size_t>(m) * k);
    transpose_into(a, at.data(), k, m);
    mm_nn(at.data(), b, c, m, k, n);
}

}  // namespace voxflow
