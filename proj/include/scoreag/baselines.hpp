#pragma once

#include <functional>
#include <string>

#include "scoreag/models.hpp"
#include "scoreag/rng.hpp"
#include "scoreag/tensor.hpp"

namespace scoreag {

enum class NormKind { L2, Linf };
NormKind norm_from_string(const std::string& s);

struct NormBudget {
    NormKind norm = NormKind::Linf;
    double epsilon = 8.0 / 255.0;
    double step_size = 2.0 / 255.0;
    int n_iter = 40;

    void validate() const;
};

/// Cross-entropy gradient w.r.t. the input image (shared by fgsm/pgd).
Tensor input_ce_grad(const Classifier& f, const Tensor& x, int y_true, WeightSet ws);

/// x' = clamp(x + eps * sign(grad CE), 0, 1); sign(0) = 0.
Tensor fgsm(const Classifier& f, const Tensor& x, int y_true, double epsilon,
            WeightSet ws = WeightSet::Ema);

/// Projected gradient ascent on CE inside the epsilon ball; l-inf uses sign
/// steps, l2 uses unit-l2-normalized steps with radial projection. The
/// iterate stays feasible (budget and [0,1] box) after every iteration.
/// `observer`, when set, sees the iterate after each projection (tests).
Tensor pgd(const Classifier& f, const Tensor& x, int y_true, const NormBudget& budget, Rng& rng,
           bool random_start = true, WeightSet ws = WeightSet::Ema,
           const std::function<void(const Tensor&, int)>& observer = nullptr);

/// Best-of-n restarts by final CE loss (falls back to one run when n <= 1).
Tensor pgd_restarts(const Classifier& f, const Tensor& x, int y_true, const NormBudget& budget,
                    int n_restarts, Rng& rng, WeightSet ws = WeightSet::Ema);

} // namespace scoreag
