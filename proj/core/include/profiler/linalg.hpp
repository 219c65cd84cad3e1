#pragma once

#include <vector>

#include "profiler/tensor.hpp"

namespace profiler::linalg {

/// out (+)= op(A) * op(B). Inner sums run in ascending index order so results
/// are bit-reproducible. All tensors rank 2.
void gemm(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b,
          Tensor& out, bool accumulate);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Thin Q of a Householder QR of a (m x n, m >= n). Columns are orthonormal
/// even when a is rank deficient.
Tensor qr_thin_q(const Tensor& a);

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Eigenvalues sorted
/// descending, eigenvectors are the matching columns of `vectors`.
struct SymEig {
    std::vector<double> values;
    Tensor vectors;  // (n, n), column j pairs with values[j]
};
SymEig jacobi_eigh(const Tensor& sym);

}  // namespace profiler::linalg
