#pragma once

// Dense SVD oracle for the test suite: one-sided (Hestenes) Jacobi rotations
// on the columns of A until all pairs are orthogonal. Completely independent
// of the randomized subspace iteration in profiler::features — no shared code
// beyond the Tensor container.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "profiler/tensor.hpp"

namespace testsupport {

struct OracleSvd {
    std::vector<double> singular_values;  // descending
    profiler::Tensor u;                   // (m, r) left vectors as columns
    profiler::Tensor v;                   // (n, r) right vectors as columns
};

/// Full SVD of a (m x n). Keeps min(m, n) triples sorted by singular value.
inline OracleSvd oracle_svd(const profiler::Tensor& a_in) {
    using profiler::Tensor;
    const bool flipped = a_in.dim(0) < a_in.dim(1);
    // Work on a tall matrix; swap U and V at the end if we transposed.
    Tensor a = [&] {
        if (!flipped) return a_in;
        Tensor t({a_in.dim(1), a_in.dim(0)});
        for (std::size_t i = 0; i < a_in.dim(0); ++i)
            for (std::size_t j = 0; j < a_in.dim(1); ++j) t.at(j, i) = a_in.at(i, j);
        return t;
    }();
    const std::size_t m = a.dim(0), n = a.dim(1);

    Tensor v({n, n});
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    auto col_dot = [&](const Tensor& t, std::size_t p, std::size_t q) {
        double s = 0.0;
        for (std::size_t i = 0; i < t.dim(0); ++i) s += t.at(i, p) * t.at(i, q);
        return s;
    };

    const double eps = 1e-15;
    for (int sweep = 0; sweep < 100; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double app = col_dot(a, p, p);
                const double aqq = col_dot(a, q, q);
                const double apq = col_dot(a, p, q);
                if (std::fabs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double ap = a.at(i, p), aq = a.at(i, q);
                    a.at(i, p) = c * ap - s * aq;
                    a.at(i, q) = s * ap + c * aq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v.at(i, p), vq = v.at(i, q);
                    v.at(i, p) = c * vp - s * vq;
                    v.at(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    // Column norms are the singular values; normalized columns are U.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> norms(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(col_dot(a, j, j));
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    const std::size_t r = std::min(m, n);
    OracleSvd out;
    out.singular_values.resize(r);
    out.u = Tensor({m, r});
    out.v = Tensor({n, r});
    for (std::size_t jj = 0; jj < r; ++jj) {
        const std::size_t j = order[jj];
        out.singular_values[jj] = norms[j];
        if (norms[j] > 0.0)
            for (std::size_t i = 0; i < m; ++i) out.u.at(i, jj) = a.at(i, j) / norms[j];
        for (std::size_t i = 0; i < n; ++i) out.v.at(i, jj) = v.at(i, j);
    }
    if (flipped) std::swap(out.u, out.v);
    return out;
}

}  // namespace testsupport
