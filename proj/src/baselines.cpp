#include "scoreag/baselines.hpp"

#include <cmath>

#include "scoreag/errors.hpp"
#include "scoreag/graph.hpp"

namespace scoreag {

NormKind norm_from_string(const std::string& s) {
    if (s == "l2") return NormKind::L2;
    if (s == "linf") return NormKind::Linf;
    throw ConfigError("norm must be l2 or linf, got '" + s + "'");
}

void NormBudget::validate() const {
    if (!(epsilon > 0.0)) throw ContractError("NormBudget: epsilon > 0");
    if (!(step_size > 0.0)) throw ContractError("NormBudget: step_size > 0");
    if (n_iter < 1) throw ContractError("NormBudget: n_iter >= 1");
}

Tensor input_ce_grad(const Classifier& f, const Tensor& x, int y_true, WeightSet ws) {
    if (x.numel() != f.cfg.input_dim()) {
        throw ShapeError("input_ce_grad: input " + x.shape_str() + " does not match classifier dim " +
                         std::to_string(f.cfg.input_dim()));
    }
    Graph g;
    NodeRef xin = g.input("x", x.reshaped({1, x.numel()}), true);
    ClassifierOutputs out = f.build(g, xin, ws);
    NodeRef ce = g.softmax_xent(out.logits, {y_true - 1});
    g.backward(ce);
    return g.grad_of(xin).reshaped(x.shape);
}

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// delta <- projection of delta onto the budget ball
void project(Tensor& delta, const NormBudget& b) {
    if (b.norm == NormKind::Linf) {
        for (double& v : delta.data) v = std::min(b.epsilon, std::max(-b.epsilon, v));
    } else {
        double n = delta.l2_norm();
        if (n > b.epsilon) {
            double s = b.epsilon / n;
            for (double& v : delta.data) v *= s;
        }
    }
}

double ce_loss(const Classifier& f, const Tensor& x, int y_true, WeightSet ws) {
    Graph g;
    NodeRef xin = g.constant(x.reshaped({1, x.numel()}), "x");
    ClassifierOutputs out = f.build(g, xin, ws);
    NodeRef ce = g.softmax_xent(out.logits, {y_true - 1});
    return g.value(ce).data[0];
}

} // namespace

Tensor fgsm(const Classifier& f, const Tensor& x, int y_true, double epsilon, WeightSet ws) {
    if (!(epsilon > 0.0)) throw ContractError("fgsm: epsilon > 0");
    Tensor grad = input_ce_grad(f, x, y_true, ws);
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = std::min(1.0, std::max(0.0, out.data[i] + epsilon * sign0(grad.data[i])));
    }
    return out;
}

Tensor pgd(const Classifier& f, const Tensor& x, int y_true, const NormBudget& budget, Rng& rng,
           bool random_start, WeightSet ws, const std::function<void(const Tensor&, int)>& observer) {
    budget.validate();
    int64_t d = x.numel();
    Tensor delta = Tensor::zeros(x.shape);
    if (random_start) {
        if (budget.norm == NormKind::Linf) {
            for (double& v : delta.data) v = rng.uniform(-budget.epsilon, budget.epsilon);
        } else {
            // uniform in the l2 ball: direction times radius U^(1/d)
            Tensor z = Tensor::randn(x.shape, rng);
            double n = z.l2_norm();
            double r = budget.epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
            if (n > 0.0) {
                for (size_t i = 0; i < delta.data.size(); ++i) delta.data[i] = z.data[i] * (r / n);
            }
        }
    }

    Tensor cur = x;
    auto apply_delta = [&]() {
        // keep the iterate inside both the ball and the [0,1] box; the box
        // clamp can only shrink per-coordinate deviation, so feasibility of
        // delta is preserved when it is recomputed from the clamped point
        for (int64_t i = 0; i < d; ++i) {
            double v = x.data[static_cast<size_t>(i)] + delta.data[static_cast<size_t>(i)];
            v = std::min(1.0, std::max(0.0, v));
            cur.data[static_cast<size_t>(i)] = v;
            delta.data[static_cast<size_t>(i)] = v - x.data[static_cast<size_t>(i)];
        }
    };
    project(delta, budget);
    apply_delta();

    for (int it = 0; it < budget.n_iter; ++it) {
        Tensor grad = input_ce_grad(f, cur, y_true, ws);
        if (budget.norm == NormKind::Linf) {
            for (int64_t i = 0; i < d; ++i) {
                delta.data[static_cast<size_t>(i)] += budget.step_size * sign0(grad.data[static_cast<size_t>(i)]);
            }
        } else {
            double n = grad.l2_norm();
            if (n > 0.0) axpy_inplace(delta, budget.step_size / n, grad);
        }
        project(delta, budget);
        apply_delta();
        if (observer) observer(cur, it);
    }
    return cur;
}

Tensor pgd_restarts(const Classifier& f, const Tensor& x, int y_true, const NormBudget& budget,
                    int n_restarts, Rng& rng, WeightSet ws) {
    if (n_restarts <= 1) return pgd(f, x, y_true, budget, rng, true, ws);
    Tensor best;
    double best_loss = -1.0;
    for (int r = 0; r < n_restarts; ++r) {
        Tensor cand = pgd(f, x, y_true, budget, rng, true, ws);
        double loss = ce_loss(f, cand, y_true, ws);
        if (loss > best_loss) {
            best_loss = loss;
            best = std::move(cand);
        }
    }
    return best;
}

} // namespace scoreag
