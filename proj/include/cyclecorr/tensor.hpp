#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyclecorr {

/// Dense multi-dimensional array of doubles, row-major flat storage.
/// A Tensor may act as a trainable parameter: set `requires_grad` and the
/// autodiff graph will accumulate into `grad` (same length as `values`,
/// lazily allocated by `ensure_grad`).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), values_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        if (values_.size() != count(shape_))
            throw std::invalid_argument("Tensor: values length does not match shape");
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.values_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.values_[i * n + i] = 1.0;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }

    std::size_t rows() const { return dim(0); }
    std::size_t cols() const { return dim(ndim() - 1); }
    std::size_t dim(std::size_t i) const {
        if (i >= shape_.size()) throw std::out_of_range("Tensor::dim");
        return shape_[i];
    }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double& operator()(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return values_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return values_[(i * shape_[1] + j) * shape_[2] + k];
    }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    /// True when the tensor holds a single element.
    bool is_scalar() const { return values_.size() == 1; }
    double item() const {
        if (!is_scalar()) throw std::logic_error("Tensor::item on non-scalar");
        return values_[0];
    }

    bool all_finite() const;
    std::string shape_str() const;

    // ---- parameter side ----
    bool requires_grad = false;

    std::vector<double>& ensure_grad() {
        if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
        return grad_;
    }
    void zero_grad() { grad_.assign(values_.size(), 0.0); }
    bool has_grad() const { return grad_.size() == values_.size(); }
    std::vector<double>& grad() { return grad_; }
    const std::vector<double>& grad() const { return grad_; }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
    std::vector<double> grad_;  // empty unless used as a tracked parameter
};

}  // namespace cyclecorr
