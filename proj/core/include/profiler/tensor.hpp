#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace profiler {

/// Dense n-dimensional array of doubles, row-major. The unit of all numeric
/// computation; rank 0 with one element acts as a scalar.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(numel_of(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        assert(data_.size() == numel_of(shape_));
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor row_vector(std::vector<double> values) {
        std::vector<std::size_t> shape{values.size()};
        return Tensor(std::move(shape), std::move(values));
    }

    bool defined() const { return !shape_.empty() || !data_.empty(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { assert(i < shape_.size()); return shape_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { assert(i < data_.size()); return data_[i]; }
    double operator[](std::size_t i) const { assert(i < data_.size()); return data_[i]; }

    double& at(std::size_t i, std::size_t j) {
        assert(rank() == 2 && i < shape_[0] && j < shape_[1]);
        return data_[i * shape_[1] + j];
    }
    double at(std::size_t i, std::size_t j) const {
        assert(rank() == 2 && i < shape_[0] && j < shape_[1]);
        return data_[i * shape_[1] + j];
    }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        assert(rank() == 3);
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        assert(rank() == 3);
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const;

    void fill(double v) {
        for (double& x : data_) x = v;
    }

    /// this += scale * other, shapes must match.
    void add_scaled(const Tensor& other, double scale);

    double l2_norm() const;

    /// Largest |x| over all entries; 0 for empty tensors.
    double max_abs() const;

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace profiler
