#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scoreag/rng.hpp"

namespace scoreag {

/// Dense row-major f64 array. Rank 0 is a scalar. Tensors are treated as
/// immutable once handed to another component; construction through the
/// checked factories rejects NaN/Inf values.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::optional<std::vector<double>> grad;

    Tensor() : data(1, 0.0) {} // rank-0 scalar zero

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double v);
    static Tensor scalar(double v);
    /// Checked: validates product(shape) == data.size() and all-finite.
    static Tensor from(std::vector<int64_t> shape, std::vector<double> data);
    static Tensor randn(std::vector<int64_t> shape, Rng& rng);

    int64_t numel() const;
    size_t rank() const { return shape.size(); }
    int64_t dim(size_t i) const { return shape[i]; }

    double operator[](size_t i) const { return data[i]; }
    double& operator[](size_t i) { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;

    /// Same data, new shape (element count must match).
    Tensor reshaped(std::vector<int64_t> new_shape) const;
    Tensor flattened() const; // rank-1 view copy

    double linf_norm() const;
    double l2_norm() const;
    bool all_finite() const;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

// Elementwise helpers; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
void axpy_inplace(Tensor& y, double alpha, const Tensor& x); // y += alpha*x
Tensor clamp01(const Tensor& a);

double l2_distance(const Tensor& a, const Tensor& b);
double linf_distance(const Tensor& a, const Tensor& b);

} // namespace scoreag
