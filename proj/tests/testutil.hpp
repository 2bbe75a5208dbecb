#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "scoreag/dataio.hpp"
#include "scoreag/models.hpp"
#include "scoreag/tensor.hpp"

namespace scoreag::testutil {

inline bool bits_equal(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

inline bool bits_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (!bits_equal(a[i], b[i])) return false;
    }
    return true;
}

/// Central finite differences of a scalar function of one tensor argument.
inline Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x,
                          double h = 1e-5) {
    Tensor g = Tensor::zeros(x.shape);
    Tensor probe = x;
    for (size_t i = 0; i < x.data.size(); ++i) {
        probe.data[i] = x.data[i] + h;
        double fp = f(probe);
        probe.data[i] = x.data[i] - h;
        double fm = f(probe);
        probe.data[i] = x.data[i];
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double max_rel_err(const Tensor& got, const Tensor& want) {
    double m = 0.0;
    for (size_t i = 0; i < got.data.size(); ++i) {
        double denom = std::max({1.0, std::abs(got.data[i]), std::abs(want.data[i])});
        m = std::max(m, std::abs(got.data[i] - want.data[i]) / denom);
    }
    return m;
}

/// Unit-Gaussian training set (values deliberately not clipped to [0,1]).
inline TrainData gaussian_train_data(int64_t n, int64_t d, uint64_t seed) {
    Rng rng(seed);
    TrainData td;
    td.images = Tensor::randn({n, d}, rng);
    td.labels.assign(static_cast<size_t>(n), 1);
    td.n_classes = 1;
    td.sample_shape = {d};
    return td;
}

inline TrainData point_mass_train_data(const Tensor& c, int64_t n) {
    TrainData td;
    td.images = Tensor::zeros({n, c.numel()});
    for (int64_t i = 0; i < n; ++i) {
        std::copy(c.data.begin(), c.data.end(), td.images.data.begin() + i * c.numel());
    }
    td.labels.assign(static_cast<size_t>(n), 1);
    td.n_classes = 1;
    td.sample_shape = {c.numel()};
    return td;
}

} // namespace scoreag::testutil
