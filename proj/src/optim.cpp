#include "scoreag/optim.hpp"

#include <cmath>

#include "scoreag/errors.hpp"

namespace scoreag {

void sgd_nesterov_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                       std::vector<Tensor>& velocity, double lr, double momentum,
                       double weight_decay) {
    if (lr <= 0.0) throw ContractError("sgd_nesterov_step: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ContractError("sgd_nesterov_step: momentum in [0,1)");
    if (weight_decay < 0.0) throw ContractError("sgd_nesterov_step: weight_decay >= 0");
    if (params.size() != grads.size() || params.size() != velocity.size()) {
        throw ShapeError("sgd_nesterov_step: params/grads/velocity count mismatch");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        const Tensor& g = grads[i];
        Tensor& v = velocity[i];
        if (!p.same_shape(g) || !p.same_shape(v)) {
            throw ShapeError("sgd_nesterov_step: shape mismatch at param " + std::to_string(i) +
                             " " + p.shape_str() + " vs " + g.shape_str());
        }
        for (size_t j = 0; j < p.data.size(); ++j) {
            double gj = g.data[j] + weight_decay * p.data[j];
            v.data[j] = momentum * v.data[j] + gj;
            p.data[j] -= lr * (gj + momentum * v.data[j]);
        }
    }
}

void ema_update(Tensor& shadow, const Tensor& params, double decay) {
    if (decay < 0.0 || decay >= 1.0) throw ContractError("ema_update: decay in [0,1)");
    if (!shadow.same_shape(params)) {
        throw ShapeError("ema_update: shape mismatch " + shadow.shape_str() + " vs " + params.shape_str());
    }
    for (size_t j = 0; j < shadow.data.size(); ++j) {
        shadow.data[j] = decay * shadow.data[j] + (1.0 - decay) * params.data[j];
    }
}

void ema_update(std::vector<Tensor>& shadow, const std::vector<Tensor>& params, double decay) {
    if (shadow.size() != params.size()) throw ShapeError("ema_update: tensor count mismatch");
    for (size_t i = 0; i < shadow.size(); ++i) ema_update(shadow[i], params[i], decay);
}

double cosine_lr(double lr0, long step, long total_steps, int cycles) {
    if (total_steps <= 0 || cycles < 1) throw ContractError("cosine_lr: bad schedule");
    long cycle_len = total_steps / cycles;
    if (cycle_len < 1) cycle_len = 1;
    long pos = step % cycle_len;
    double phase = static_cast<double>(pos) / static_cast<double>(cycle_len);
    return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase));
}

} // namespace scoreag
