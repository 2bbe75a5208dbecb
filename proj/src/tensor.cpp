#include "scoreag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scoreag/errors.hpp"
#include "scoreag/kernels.hpp"

namespace scoreag {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    Tensor t;
    t.data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
    t.shape = std::move(shape);
    return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    if (!std::isfinite(v)) throw ValueError("Tensor::full: non-finite fill value");
    Tensor t;
    t.data.assign(static_cast<size_t>(shape_numel(shape)), v);
    t.shape = std::move(shape);
    return t;
}

Tensor Tensor::scalar(double v) {
    if (!std::isfinite(v)) throw ValueError("Tensor::scalar: non-finite value");
    Tensor t;
    t.data[0] = v;
    return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> data) {
    int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(data.size())) {
        std::ostringstream os;
        os << "Tensor::from: shape holds " << n << " elements but data has " << data.size();
        throw ShapeError(os.str());
    }
    for (double v : data) {
        if (!std::isfinite(v)) throw ValueError("Tensor::from: non-finite value rejected");
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(data);
    return t;
}

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng) {
    Tensor t = zeros(std::move(shape));
    rng.fill_normal(t.data.data(), t.data.size());
    return t;
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw ShapeError("reshape: element count mismatch " + shape_str());
    }
    Tensor t;
    t.shape = std::move(new_shape);
    t.data = data;
    return t;
}

Tensor Tensor::flattened() const { return reshaped({numel()}); }

double Tensor::linf_norm() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
}

double Tensor::l2_norm() const { return std::sqrt(kernels::dot(data.data(), data.data(), data.size())); }

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}
} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape);
    kernels::add(a.data.data(), b.data.data(), out.data.data(), a.data.size());
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape);
    kernels::sub(a.data.data(), b.data.data(), out.data.data(), a.data.size());
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape);
    kernels::mul(a.data.data(), b.data.data(), out.data.data(), a.data.size());
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape);
    kernels::scale(a.data.data(), c, out.data.data(), a.data.size());
    return out;
}

void axpy_inplace(Tensor& y, double alpha, const Tensor& x) {
    check_same_shape(y, x, "axpy");
    kernels::axpy(alpha, x.data.data(), y.data.data(), y.data.size());
}

Tensor clamp01(const Tensor& a) {
    Tensor out = a;
    for (double& v : out.data) v = std::min(1.0, std::max(0.0, v));
    return out;
}

double l2_distance(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "l2_distance");
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double linf_distance(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "linf_distance");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

} // namespace scoreag
