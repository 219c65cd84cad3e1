#pragma once

// Central finite-difference gradient oracle. Independent of the tape: it only
// needs a scalar-valued function of a flat parameter view.

#include <cmath>
#include <functional>
#include <vector>

#include "profiler/tensor.hpp"

namespace testsupport {

inline constexpr double kFdStep = 1e-5;

/// d/dx_i f(x) via (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
inline std::vector<double> central_differences(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = kFdStep) {
    std::vector<double> grad(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// max_i |analytic_i - numeric_i| / max(1, |analytic_i|)
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max(1.0, std::fabs(analytic[i]));
        worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

inline std::vector<double> to_vec(const profiler::Tensor& t) {
    return std::vector<double>(t.data(), t.data() + t.numel());
}

}  // namespace testsupport
