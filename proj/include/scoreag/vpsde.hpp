#pragma once

#include "scoreag/tensor.hpp"

namespace scoreag {

/// Variance-preserving forward SDE dx = -0.5*beta(t)*x dt + sqrt(beta(t)) dw
/// with linear beta(t) = beta_min + t*(beta_max - beta_min), t in [0, 1].
struct NoiseSchedule {
    double beta_min = 0.1;
    double beta_max = 20.0;
    double t_eps = 1e-3; // lower clamp for training/sampling times

    double beta(double t) const { return beta_min + t * (beta_max - beta_min); }
    /// int_0^t beta(s) ds, closed form.
    double beta_integral(double t) const {
        return beta_min * t + 0.5 * (beta_max - beta_min) * t * t;
    }
    void validate() const;
};

/// Transition kernel p_0t(x_t | x_0) = N(alpha(t)*x_0, sigma2(t)*I).
struct KernelCoeffs {
    double alpha = 1.0;  // exp(-0.5 * int beta)
    double sigma2 = 0.0; // 1 - alpha^2
    double sigma() const;
};

/// Throws ContractError when t is outside [0, 1].
KernelCoeffs coeffs(const NoiseSchedule& s, double t);

/// alpha(t)*x0 + sigma(t)*noise
Tensor perturb(const Tensor& x0, double t, const Tensor& noise, const NoiseSchedule& s);

/// Gradient of log p_0t(x_t|x_0): -(x_t - alpha*x0) / sigma2. Requires t > 0.
Tensor kernel_score(const Tensor& xt, const Tensor& x0, double t, const NoiseSchedule& s);

} // namespace scoreag
