#include "profiler/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace profiler::linalg {

void gemm(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b,
          Tensor& out, bool accumulate) {
    if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("gemm: rank-2 inputs required");
    const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
    const std::size_t k = transpose_a ? a.dim(0) : a.dim(1);
    const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
    const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
    if (k != kb) throw std::invalid_argument("gemm: inner dimensions do not match");
    if (!out.defined() || out.rank() != 2 || out.dim(0) != m || out.dim(1) != n) {
        out = Tensor({m, n});
    } else if (!accumulate) {
        out.fill(0.0);
    }

    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::size_t a_cols = a.dim(1);
    const std::size_t b_cols = b.dim(1);

    // i-k-j loop: the k-sum for each (i, j) accumulates in ascending k.
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = po + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = transpose_a ? pa[kk * a_cols + i] : pa[i * a_cols + kk];
            if (av == 0.0) continue;
            if (transpose_b) {
                for (std::size_t j = 0; j < n; ++j) orow[j] += av * pb[j * b_cols + kk];
            } else {
                const double* brow = pb + kk * b_cols;
                for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor out;
    gemm(a, false, b, false, out, false);
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 input required");
    Tensor out({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor qr_thin_q(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("qr_thin_q: rank-2 input required");
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (m < n) throw std::invalid_argument("qr_thin_q: need rows >= cols");

    // Householder QR. Reflector j is (v0[j], r(j+1..m-1, j)) with scale beta[j].
    Tensor r = a;
    std::vector<double> beta(n, 0.0), head(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double norm = 0.0;
        for (std::size_t i = j; i < m; ++i) norm += r.at(i, j) * r.at(i, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;  // zero column, reflector skipped
        const double alpha = r.at(j, j) >= 0.0 ? -norm : norm;
        const double v0 = r.at(j, j) - alpha;
        r.at(j, j) = alpha;
        double vnorm2 = v0 * v0;
        for (std::size_t i = j + 1; i < m; ++i) vnorm2 += r.at(i, j) * r.at(i, j);
        if (vnorm2 == 0.0) continue;
        beta[j] = 2.0 / vnorm2;
        head[j] = v0;
        for (std::size_t c = j + 1; c < n; ++c) {
            double dot = v0 * r.at(j, c);
            for (std::size_t i = j + 1; i < m; ++i) dot += r.at(i, j) * r.at(i, c);
            const double s = beta[j] * dot;
            r.at(j, c) -= s * v0;
            for (std::size_t i = j + 1; i < m; ++i) r.at(i, c) -= s * r.at(i, j);
        }
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of the identity.
    Tensor q({m, n});
    for (std::size_t j = 0; j < n; ++j) q.at(j, j) = 1.0;
    for (std::size_t jj = n; jj-- > 0;) {
        if (beta[jj] == 0.0) continue;
        const double v0 = head[jj];
        for (std::size_t c = 0; c < n; ++c) {
            double dot = v0 * q.at(jj, c);
            for (std::size_t i = jj + 1; i < m; ++i) dot += r.at(i, jj) * q.at(i, c);
            const double s = beta[jj] * dot;
            q.at(jj, c) -= s * v0;
            for (std::size_t i = jj + 1; i < m; ++i) q.at(i, c) -= s * r.at(i, jj);
        }
    }
    return q;
}

SymEig jacobi_eigh(const Tensor& sym) {
    if (sym.rank() != 2 || sym.dim(0) != sym.dim(1))
        throw std::invalid_argument("jacobi_eigh: square matrix required");
    const std::size_t n = sym.dim(0);
    Tensor a = sym;
    Tensor v({n, n});
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a.at(i, j) * a.at(i, j);
        return std::sqrt(2.0 * s);
    };

    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(a.at(i, i)));
    scale = std::max(scale, off_norm());
    const double tol = (scale == 0.0 ? 1.0 : scale) * 1e-15;

    for (int sweep = 0; sweep < 64 && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::fabs(apq) <= tol * 1e-2) continue;
                const double app = a.at(p, p), aqq = a.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v.at(i, p), viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return a.at(x, x) > a.at(y, y);
    });

    SymEig out;
    out.values.resize(n);
    out.vectors = Tensor({n, n});
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a.at(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors.at(i, j) = v.at(i, order[j]);
    }
    return out;
}

}  // namespace profiler::linalg
