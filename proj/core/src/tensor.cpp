#include "profiler/tensor.hpp"

#include <cmath>

namespace profiler {

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void Tensor::add_scaled(const Tensor& other, double scale) {
    assert(same_shape(other));
    const double* src = other.data();
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * src[i];
}

double Tensor::l2_norm() const {
    double s = 0.0;
    for (double x : data_) s += x * x;
    return std::sqrt(s);
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double x : data_) {
        const double a = std::fabs(x);
        if (a > m) m = a;
    }
    return m;
}

}  // namespace profiler
