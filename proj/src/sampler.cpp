#include "scoreag/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>

#include "scoreag/errors.hpp"

namespace scoreag {

// --------------------------------------------------------------------------
// score functions

Tensor ScoreFunction::score(const Tensor& x, double t, int y) const {
    Graph g;
    bool vec = x.rank() == 1;
    NodeRef xin = g.constant(vec ? x.reshaped({1, x.numel()}) : x, "x");
    NodeRef out = build(g, xin, t, y);
    const Tensor& v = g.value(out);
    return vec ? v.reshaped(x.shape) : v;
}

NodeRef GaussianScore::build(Graph& g, NodeRef x, double, int) const { return g.scale(x, -1.0); }

Tensor GaussianScore::score(const Tensor& x, double, int) const { return scale(x, -1.0); }

NodeRef PointMassScore::build(Graph& g, NodeRef x, double t, int) const {
    KernelCoeffs k = coeffs(sched_, t);
    if (k.sigma2 <= 0.0) throw ContractError("PointMassScore: degenerate at t=0");
    int64_t rows = g.value(x).shape[0];
    Tensor m = Tensor::zeros({rows, c_.numel()});
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t j = 0; j < c_.numel(); ++j) {
            m.data[static_cast<size_t>(r * c_.numel() + j)] =
                k.alpha * c_.data[static_cast<size_t>(j)] / k.sigma2;
        }
    }
    return g.add(g.scale(x, -1.0 / k.sigma2), g.constant(std::move(m), "pm_mean"));
}

Tensor PointMassScore::score(const Tensor& x, double t, int) const {
    KernelCoeffs k = coeffs(sched_, t);
    if (k.sigma2 <= 0.0) throw ContractError("PointMassScore: degenerate at t=0");
    Tensor out = Tensor::zeros(x.shape);
    int64_t d = c_.numel();
    for (int64_t i = 0; i < x.numel(); ++i) {
        out.data[static_cast<size_t>(i)] =
            -(x.data[static_cast<size_t>(i)] - k.alpha * c_.data[static_cast<size_t>(i % d)]) / k.sigma2;
    }
    return out;
}

NodeRef ZeroScore::build(Graph& g, NodeRef x, double, int) const { return g.scale(x, 0.0); }

Tensor ZeroScore::score(const Tensor& x, double, int) const { return Tensor::zeros(x.shape); }

NodeRef NetScore::build(Graph& g, NodeRef x, double t, int y) const {
    return model_->build(g, x, t, y, ws_);
}

// --------------------------------------------------------------------------
// sampler

SamplerKind sampler_kind_from_string(const std::string& s) {
    if (s == "reverse-sde") return SamplerKind::ReverseSde;
    if (s == "prob-flow-ode") return SamplerKind::ProbFlowOde;
    throw ConfigError("sampler kind must be reverse-sde or prob-flow-ode, got '" + s + "'");
}

std::string sampler_kind_to_string(SamplerKind k) {
    return k == SamplerKind::ReverseSde ? "reverse-sde" : "prob-flow-ode";
}

void SamplerConfig::validate(const NoiseSchedule& s) const {
    if (n_steps < 1) throw ContractError("SamplerConfig: n_steps >= 1");
    if (!(t_start > t_end)) throw ContractError("SamplerConfig: t_start > t_end");
    if (t_end < s.t_eps - 1e-12) {
        throw ContractError("SamplerConfig: t_end below schedule t_eps");
    }
    if (t_start > 1.0 + 1e-12) throw ContractError("SamplerConfig: t_start <= 1");
}

void GuidanceSpec::validate(int64_t dim) const {
    if (class_condition < 0) throw ContractError("GuidanceSpec: class_condition >= 0");
    if (classifier_term) {
        if (classifier_term->scale < 0.0) throw ContractError("GuidanceSpec: s_y >= 0");
        if (!classifier_term->classifier) {
            throw ContractError("GuidanceSpec: classifier term without a classifier");
        }
        if (classifier_term->target_class == 0 && classifier_term->avoid_class == 0) {
            throw ContractError("GuidanceSpec: untargeted guidance needs an avoid class");
        }
    }
    if (reconstruction_term) {
        if (reconstruction_term->scale < 0.0) throw ContractError("GuidanceSpec: s_x >= 0");
        if (reconstruction_term->reference.numel() != dim) {
            throw ShapeError("GuidanceSpec: reference dim " +
                             std::to_string(reconstruction_term->reference.numel()) +
                             " != state dim " + std::to_string(dim));
        }
    }
}

bool GuidanceSpec::active() const {
    return (classifier_term && classifier_term->scale > 0.0) ||
           (reconstruction_term && reconstruction_term->scale > 0.0);
}

namespace {

void check_time(const ScoreFunction& s, double t, const char* op) {
    if (t < s.schedule().t_eps - 1e-12 || t > 1.0 + 1e-12) {
        throw ContractError(std::string(op) + ": t = " + std::to_string(t) +
                            " outside [t_eps, 1]");
    }
}

} // namespace

Tensor pf_drift(const ScoreFunction& s, const Tensor& x, double t, int y) {
    check_time(s, t, "pf_drift");
    Tensor u = add(x, s.score(x, t, y));
    return scale(u, -0.5 * s.schedule().beta(t));
}

EulerPrediction euler_x0(const ScoreFunction& s, const Tensor& x, double t, int y) {
    check_time(s, t, "euler_x0");
    // x - t * pf_drift == x + (t*beta/2) * (x + s); the right-hand form keeps
    // the analytic-score fixed point exact (u == 0 bitwise when s == -x).
    Tensor u = add(x, s.score(x, t, y));
    Tensor xh = x;
    axpy_inplace(xh, 0.5 * t * s.schedule().beta(t), u);
    return {std::move(xh), t};
}

GuidedScoreResult guided_score(const ScoreFunction& s, const GuidanceSpec& spec, const Tensor& x,
                               double t, bool stop_gradient_through_score) {
    check_time(s, t, "guided_score");
    spec.validate(x.numel());

    GuidedScoreResult res;
    bool want_y = spec.classifier_term && spec.classifier_term->scale > 0.0;
    bool want_x = spec.reconstruction_term && spec.reconstruction_term->scale > 0.0;
    if (!want_y && !want_x) {
        res.total = s.score(x, t, spec.class_condition);
        res.score_norm = res.total.l2_norm();
        return res;
    }

    Graph g;
    NodeRef xin = g.input("x", x.reshaped({1, x.numel()}), true);
    NodeRef sc = s.build(g, xin, t, spec.class_condition);
    res.total = g.value(sc).reshaped(x.shape);
    res.score_norm = res.total.l2_norm();

    NodeRef sc_used = stop_gradient_through_score ? g.stop_grad(sc) : sc;
    double half_tb = 0.5 * t * s.schedule().beta(t);
    NodeRef u = g.add(xin, sc_used);
    NodeRef xhat = g.add(xin, g.scale(u, half_tb));
    res.xhat_l2 = g.value(xhat).l2_norm();

    if (want_y) {
        const ClassifierGuidance& cg = *spec.classifier_term;
        ClassifierOutputs out = cg.classifier->build(g, xhat, cg.weights);
        int target = cg.target_class;
        if (target == 0) {
            const Tensor& lg = g.value(out.logits);
            int64_t k = lg.shape[1];
            int best = -1;
            for (int64_t j = 0; j < k; ++j) {
                if (static_cast<int>(j) + 1 == cg.avoid_class) continue;
                if (best < 0 || lg.data[static_cast<size_t>(j)] > lg.data[static_cast<size_t>(best)]) {
                    best = static_cast<int>(j);
                }
            }
            target = best + 1;
        }
        res.chosen_target = target;
        NodeRef ce = g.softmax_xent(out.logits, {target - 1});
        g.backward(ce);
        Tensor term = scale(g.grad_of(xin).reshaped(x.shape), -cg.scale); // -dCE = dlog softmax
        if (!term.all_finite()) throw ValueError("guided_score: non-finite classifier gradient");
        res.guidance_norm_y = term.l2_norm();
        axpy_inplace(res.total, 1.0, term);
    }
    if (want_x) {
        const ReconstructionGuidance& rg = *spec.reconstruction_term;
        NodeRef ref = g.constant(rg.reference.reshaped({1, x.numel()}), "x_ref");
        NodeRef err = g.sq_error(xhat, ref);
        g.backward(err);
        Tensor term = scale(g.grad_of(xin).reshaped(x.shape), -0.5 * rg.scale);
        if (!term.all_finite()) throw ValueError("guided_score: non-finite reconstruction gradient");
        res.guidance_norm_x = term.l2_norm();
        axpy_inplace(res.total, 1.0, term);
    }
    return res;
}

SolveResult solve(const ScoreFunction& s, const GuidanceSpec& spec, const SamplerConfig& cfg,
                  Rng& rng) {
    cfg.validate(s.schedule());
    spec.validate(s.dim());
    int64_t d = s.dim();
    Tensor x = Tensor::randn({d}, rng);
    double dt = (cfg.t_start - cfg.t_end) / cfg.n_steps;

    SolveResult res;
    res.trajectory.reserve(static_cast<size_t>(cfg.n_steps));
    for (int k = 0; k < cfg.n_steps; ++k) {
        double t = cfg.t_start - k * dt;
        GuidedScoreResult gs;
        try {
            gs = guided_score(s, spec, x, t, cfg.stop_gradient_through_score);
        } catch (const ValueError& e) {
            throw DivergedError("solve: step " + std::to_string(k) + ": " + e.what(), k);
        } catch (const OverflowError& e) {
            throw DivergedError("solve: step " + std::to_string(k) + ": " + e.what(), k);
        }
        double beta = s.schedule().beta(t);
        Tensor drift = scale(x, -0.5 * beta);
        if (cfg.kind == SamplerKind::ReverseSde) {
            axpy_inplace(drift, -beta, gs.total);
            axpy_inplace(x, -dt, drift);
            Tensor z = Tensor::randn({d}, rng);
            axpy_inplace(x, std::sqrt(beta * dt), z);
        } else {
            axpy_inplace(drift, -0.5 * beta, gs.total);
            axpy_inplace(x, -dt, drift);
        }
        if (x.linf_norm() > 100.0) {
            throw DivergedError("solve: diverged, |x|_inf > 100 at step " + std::to_string(k), k);
        }
        res.trajectory.push_back({k, t, gs.score_norm, gs.guidance_norm_y, gs.guidance_norm_x,
                                  gs.chosen_target});
    }
    res.x0 = cfg.clamp_final ? clamp01(x) : std::move(x);
    return res;
}

std::vector<SolveResult> solve_batch(const ScoreFunction& s, const GuidanceSpec& spec,
                                     const SamplerConfig& cfg, int n_chains, uint64_t seed) {
    std::vector<SolveResult> results(static_cast<size_t>(n_chains));
    std::exception_ptr first_error = nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < n_chains; ++i) {
        try {
            Rng chain_rng(Rng::derive(seed, static_cast<uint64_t>(i)));
            results[static_cast<size_t>(i)] = solve(s, spec, cfg, chain_rng);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            {
                if (!first_error) first_error = std::current_exception();
            }
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

void write_trajectory_csv(const std::string& path, const std::vector<StepStats>& trajectory) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open trajectory file: " + path);
    os << "step,t,score_norm,guidance_norm_y,guidance_norm_x\n";
    char buf[160];
    for (const StepStats& st : trajectory) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g\n", st.step, st.t, st.score_norm,
                      st.guidance_norm_y, st.guidance_norm_x);
        os << buf;
    }
}

} // namespace scoreag
