#pragma once

#include <vector>

#include "scoreag/tensor.hpp"

namespace scoreag {

/// One SGD step with Nesterov momentum and decoupled-from-loss weight decay:
///   g <- grad + wd * p;  v <- mu * v + g;  p <- p - lr * (g + mu * v)
/// Zero grad, zero wd and zero velocity leave params unchanged.
void sgd_nesterov_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                       std::vector<Tensor>& velocity, double lr, double momentum,
                       double weight_decay);

/// shadow <- decay * shadow + (1 - decay) * params, elementwise.
void ema_update(std::vector<Tensor>& shadow, const std::vector<Tensor>& params, double decay);
void ema_update(Tensor& shadow, const Tensor& params, double decay);

/// Cyclic cosine annealing: lr0 * 0.5 * (1 + cos(pi * phase)) where phase is
/// the position inside the current cycle. cycles >= 1.
double cosine_lr(double lr0, long step, long total_steps, int cycles);

} // namespace scoreag
