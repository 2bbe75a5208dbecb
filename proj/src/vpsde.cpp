#include "scoreag/vpsde.hpp"

#include <cmath>

#include "scoreag/errors.hpp"

namespace scoreag {

void NoiseSchedule::validate() const {
    if (!(beta_min > 0.0) || !(beta_min <= beta_max)) {
        throw ValueError("NoiseSchedule: need 0 < beta_min <= beta_max");
    }
    if (!(t_eps > 0.0) || !(t_eps < 1.0)) {
        throw ValueError("NoiseSchedule: t_eps must lie in (0, 1)");
    }
}

double KernelCoeffs::sigma() const { return std::sqrt(sigma2); }

KernelCoeffs coeffs(const NoiseSchedule& s, double t) {
    if (t < 0.0 || t > 1.0) {
        throw ContractError("coeffs: t = " + std::to_string(t) + " outside [0,1]");
    }
    KernelCoeffs k;
    k.alpha = std::exp(-0.5 * s.beta_integral(t));
    k.sigma2 = 1.0 - k.alpha * k.alpha;
    return k;
}

Tensor perturb(const Tensor& x0, double t, const Tensor& noise, const NoiseSchedule& s) {
    if (!x0.same_shape(noise)) {
        throw ShapeError("perturb: shape mismatch " + x0.shape_str() + " vs " + noise.shape_str());
    }
    KernelCoeffs k = coeffs(s, t);
    Tensor out = scale(x0, k.alpha);
    axpy_inplace(out, k.sigma(), noise);
    return out;
}

Tensor kernel_score(const Tensor& xt, const Tensor& x0, double t, const NoiseSchedule& s) {
    if (!xt.same_shape(x0)) {
        throw ShapeError("kernel_score: shape mismatch " + xt.shape_str() + " vs " + x0.shape_str());
    }
    KernelCoeffs k = coeffs(s, t);
    if (k.sigma2 <= 0.0) {
        throw ContractError("kernel_score: degenerate kernel at t = " + std::to_string(t));
    }
    Tensor out = Tensor::zeros(xt.shape);
    double inv = 1.0 / k.sigma2;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = -(xt.data[i] - k.alpha * x0.data[i]) * inv;
    }
    return out;
}

} // namespace scoreag
