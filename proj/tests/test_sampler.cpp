#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scoreag/errors.hpp"
#include "scoreag/models.hpp"
#include "scoreag/sampler.hpp"
#include "scoreag/score_fn.hpp"
#include "testutil.hpp"

using namespace scoreag;
using namespace scoreag::testutil;

namespace {

Classifier smooth_classifier(int64_t d, int k, uint64_t seed) {
    // tanh classifier keeps the guidance graph kink-free so finite
    // differences are clean
    ClassifierConfig cc;
    cc.input_shape = {d};
    cc.n_classes = k;
    cc.kind = "mlp";
    cc.mlp_hidden = {16};
    cc.feature_dim = 8;
    cc.nonlin = Nonlin::Tanh;
    Classifier f = Classifier::init(cc, seed);
    // randomize the zero biases a little for asymmetry
    Rng rng(seed + 1);
    for (Tensor& p : f.params) {
        for (double& v : p.data) v += 0.05 * rng.normal();
    }
    f.ema = f.params;
    return f;
}

SamplerConfig ode_config(int n_steps, bool clamp = false) {
    SamplerConfig c;
    c.n_steps = n_steps;
    c.kind = SamplerKind::ProbFlowOde;
    c.clamp_final = clamp;
    return c;
}

} // namespace

TEST_CASE("pf_drift: the unit Gaussian is an exact fixed point") {
    NoiseSchedule sched;
    GaussianScore s(3, sched);
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        Tensor x = Tensor::randn({3}, rng);
        double t = rng.uniform(sched.t_eps, 1.0);
        Tensor d = pf_drift(s, x, t, 0);
        for (double v : d.data) CHECK(v == 0.0);
    }
}

TEST_CASE("pf_drift: zero score gives -beta/2 x") {
    NoiseSchedule sched;
    ZeroScore s(2, sched);
    Tensor x = Tensor::from({2}, {1.0, -2.0});
    double t = 0.65;
    Tensor d = pf_drift(s, x, t, 0);
    double b = sched.beta(t);
    CHECK(d.data[0] == doctest::Approx(-0.5 * b * 1.0).epsilon(1e-15));
    CHECK(d.data[1] == doctest::Approx(-0.5 * b * -2.0).epsilon(1e-15));
}

TEST_CASE("pf_drift matches numeric differentiation of the analytic flow") {
    // for a point mass the probability-flow trajectory through (x, t) is
    // x(u) = alpha(u) c + (x - alpha(t) c) * sigma(u) / sigma(t)
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.4, -0.1});
    PointMassScore s(c, sched);
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        double t = rng.uniform(0.05, 0.95);
        Tensor x = Tensor::randn({2}, rng);
        KernelCoeffs kt = coeffs(sched, t);
        auto flow = [&](double u) {
            KernelCoeffs ku = coeffs(sched, u);
            Tensor out = Tensor::zeros({2});
            for (int j = 0; j < 2; ++j) {
                out.data[j] = ku.alpha * c.data[j] +
                              (x.data[j] - kt.alpha * c.data[j]) * ku.sigma() / kt.sigma();
            }
            return out;
        };
        double h = 1e-6;
        Tensor fp = flow(t + h), fm = flow(t - h);
        Tensor want = Tensor::zeros({2});
        for (int j = 0; j < 2; ++j) want.data[j] = (fp.data[j] - fm.data[j]) / (2.0 * h);
        Tensor got = pf_drift(s, x, t, 0);
        CHECK(max_rel_err(got, want) < 1e-5);
    }
}

TEST_CASE("euler_x0: exact identity at the Gaussian fixed point") {
    NoiseSchedule sched;
    GaussianScore s(4, sched);
    Rng rng(3);
    Tensor x = Tensor::randn({4}, rng);
    EulerPrediction p = euler_x0(s, x, 0.7, 0);
    for (size_t i = 0; i < 4; ++i) CHECK(p.x_hat0.data[i] == x.data[i]);
    CHECK(p.t_source == 0.7);
}

TEST_CASE("euler_x0: vanishing step as t approaches t_eps") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.5, 0.5});
    PointMassScore s(c, sched);
    Tensor x = Tensor::from({2}, {0.52, 0.48});
    double t = sched.t_eps;
    Tensor drift = pf_drift(s, x, t, 0);
    EulerPrediction p = euler_x0(s, x, t, 0);
    CHECK(l2_distance(p.x_hat0, x) <= t * drift.l2_norm() + 1e-12);
}

TEST_CASE("euler_x0: hand-computed point-mass case at the kernel mean") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.4, -0.1});
    PointMassScore s(c, sched);
    double t = 0.33;
    KernelCoeffs k = coeffs(sched, t);
    Tensor x = scale(c, k.alpha); // score vanishes here
    Tensor drift = pf_drift(s, x, t, 0);
    double b = sched.beta(t);
    for (int j = 0; j < 2; ++j) {
        CHECK(drift.data[j] == doctest::Approx(-0.5 * b * k.alpha * c.data[j]).epsilon(1e-12));
    }
    EulerPrediction p = euler_x0(s, x, t, 0);
    for (int j = 0; j < 2; ++j) {
        double want = k.alpha * c.data[j] * (1.0 + 0.5 * t * b);
        CHECK(p.x_hat0.data[j] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("guided_score: empty guidance reduces to the base score") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.3, 0.3});
    PointMassScore s(c, sched);
    Tensor x = Tensor::from({2}, {0.1, 0.9});
    GuidanceSpec spec;
    spec.class_condition = 0;
    GuidedScoreResult r = guided_score(s, spec, x, 0.5);
    CHECK(bits_equal(r.total, s.score(x, 0.5, 0)));
    CHECK(r.guidance_norm_y == 0.0);
    CHECK(r.guidance_norm_x == 0.0);
}

TEST_CASE("guided_score: reconstruction gradient vanishes at the Euler prediction") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.3, 0.3});
    PointMassScore s(c, sched);
    Tensor x = Tensor::from({2}, {0.2, 0.6});
    double t = 0.4;
    EulerPrediction p = euler_x0(s, x, t, 0);

    GuidanceSpec spec;
    ReconstructionGuidance rg;
    rg.reference = p.x_hat0;
    rg.scale = 7.0;
    spec.reconstruction_term = rg;
    GuidedScoreResult r = guided_score(s, spec, x, t);
    Tensor base = s.score(x, t, 0);
    CHECK(r.guidance_norm_x == 0.0);
    for (size_t i = 0; i < 2; ++i) CHECK(r.total.data[i] == base.data[i]);
}

TEST_CASE("guided_score: classifier-target gradient matches finite differences") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({4}, {0.5, 0.5, 0.5, 0.5});
    PointMassScore s(c, sched);
    Classifier f = smooth_classifier(4, 3, 40);
    double t = 0.6, sy = 2.5;
    int target = 2;

    GuidanceSpec spec;
    ClassifierGuidance cg;
    cg.classifier = &f;
    cg.weights = WeightSet::Live;
    cg.target_class = target;
    cg.scale = sy;
    spec.classifier_term = cg;

    Rng rng(41);
    Tensor x = Tensor::randn({4}, rng);
    GuidedScoreResult r = guided_score(s, spec, x, t);
    Tensor term = sub(r.total, s.score(x, t, 0));

    auto objective = [&](const Tensor& xx) {
        // s_y * log softmax_target(f(x_hat0(xx))), recomputed independently
        EulerPrediction p = euler_x0(s, xx, t, 0);
        Graph g;
        NodeRef xin = g.constant(p.x_hat0.reshaped({1, 4}), "xh");
        ClassifierOutputs out = f.build(g, xin, WeightSet::Live);
        const Tensor& logits = g.value(out.logits);
        std::vector<double> probs(logits.data.size());
        softmax_rows(logits.data.data(), probs.data(), 1, logits.shape[1]);
        return sy * std::log(probs[static_cast<size_t>(target - 1)]);
    };
    Tensor fd = finite_diff(objective, x, 1e-5);
    CHECK(max_rel_err(term, fd) < 1e-3);
}

TEST_CASE("guided_score: reconstruction gradient matches finite differences") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({3}, {0.2, 0.5, 0.8});
    PointMassScore s(c, sched);
    double t = 0.35, sx = 4.0;
    Rng rng(42);
    Tensor ref = clamp01(Tensor::randn({3}, rng));
    Tensor x = Tensor::randn({3}, rng);

    GuidanceSpec spec;
    ReconstructionGuidance rg;
    rg.reference = ref;
    rg.scale = sx;
    spec.reconstruction_term = rg;
    GuidedScoreResult r = guided_score(s, spec, x, t);
    Tensor term = sub(r.total, s.score(x, t, 0));

    auto objective = [&](const Tensor& xx) {
        EulerPrediction p = euler_x0(s, xx, t, 0);
        return -0.5 * sx * l2_distance(p.x_hat0, ref) * l2_distance(p.x_hat0, ref);
    };
    Tensor fd = finite_diff(objective, x, 1e-5);
    CHECK(max_rel_err(term, fd) < 1e-3);
}

TEST_CASE("guided_score: additivity of guidance terms") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({4}, {0.5, 0.4, 0.6, 0.5});
    PointMassScore s(c, sched);
    Classifier f = smooth_classifier(4, 3, 43);
    Rng rng(44);
    Tensor x = Tensor::randn({4}, rng);
    Tensor ref = clamp01(Tensor::randn({4}, rng));
    double t = 0.5;

    ClassifierGuidance cg;
    cg.classifier = &f;
    cg.weights = WeightSet::Live;
    cg.target_class = 3;
    cg.scale = 1.5;
    ReconstructionGuidance rg;
    rg.reference = ref;
    rg.scale = 2.5;

    GuidanceSpec both;
    both.classifier_term = cg;
    both.reconstruction_term = rg;
    GuidanceSpec only_y;
    only_y.classifier_term = cg;
    GuidanceSpec only_x;
    only_x.reconstruction_term = rg;

    Tensor base = s.score(x, t, 0);
    Tensor tb = guided_score(s, both, x, t).total;
    Tensor ty = guided_score(s, only_y, x, t).total;
    Tensor tx = guided_score(s, only_x, x, t).total;
    for (size_t i = 0; i < 4; ++i) {
        double want = ty.data[i] + tx.data[i] - base.data[i];
        CHECK(std::abs(tb.data[i] - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("guided_score: stop-gradient changes gradients but not the Euler prediction") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({3}, {0.3, 0.6, 0.2});
    PointMassScore s(c, sched);
    Rng rng(45);
    Tensor x = Tensor::randn({3}, rng);
    Tensor ref = clamp01(Tensor::randn({3}, rng));
    GuidanceSpec spec;
    ReconstructionGuidance rg;
    rg.reference = ref;
    rg.scale = 3.0;
    spec.reconstruction_term = rg;

    GuidedScoreResult with = guided_score(s, spec, x, 0.45, false);
    GuidedScoreResult without = guided_score(s, spec, x, 0.45, true);
    CHECK(with.xhat_l2 == without.xhat_l2);
    CHECK_FALSE(bits_equal(with.total, without.total));
}

TEST_CASE("solve: bit-identical under identical seeds") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.5, 0.5});
    PointMassScore s(c, sched);
    GuidanceSpec spec;
    SamplerConfig cfg;
    cfg.n_steps = 50;
    Rng r1(46), r2(46);
    SolveResult a = solve(s, spec, cfg, r1);
    SolveResult b = solve(s, spec, cfg, r2);
    CHECK(bits_equal(a.x0, b.x0));
}

TEST_CASE("solve: zero-scale guidance is bit-identical to no guidance") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.5, 0.5});
    PointMassScore s(c, sched);
    Classifier f = smooth_classifier(2, 2, 47);

    GuidanceSpec plain;
    GuidanceSpec zeroed;
    ClassifierGuidance cg;
    cg.classifier = &f;
    cg.target_class = 2;
    cg.scale = 0.0;
    zeroed.classifier_term = cg;
    ReconstructionGuidance rg;
    rg.reference = Tensor::full({2}, 0.5);
    rg.scale = 0.0;
    zeroed.reconstruction_term = rg;

    SamplerConfig cfg;
    cfg.n_steps = 40;
    Rng r1(48), r2(48);
    SolveResult a = solve(s, plain, cfg, r1);
    SolveResult b = solve(s, zeroed, cfg, r2);
    CHECK(bits_equal(a.x0, b.x0));
}

TEST_CASE("solve: prob-flow halving the step halves the error (Euler order)") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.7, 0.2});
    PointMassScore s(c, sched);
    GuidanceSpec spec;
    uint64_t seed = 49;

    auto run = [&](int n) {
        SamplerConfig cfg = ode_config(n);
        Rng rng(seed);
        return solve(s, spec, cfg, rng).x0;
    };
    Tensor ref = run(3200);
    double e100 = l2_distance(run(100), ref);
    double e200 = l2_distance(run(200), ref);
    double ratio = e100 / e200;
    CAPTURE(e100);
    CAPTURE(e200);
    CHECK(ratio > 1.5);
    CHECK(ratio < 3.0);
}

TEST_CASE("solve: unguided prob-flow from the analytic Gaussian stays N(0,I)") {
    NoiseSchedule sched;
    GaussianScore s(2, sched);
    GuidanceSpec spec;
    SamplerConfig cfg = ode_config(100);
    const int n = 2000;
    std::vector<SolveResult> out = solve_batch(s, spec, cfg, n, 50);
    for (int j = 0; j < 2; ++j) {
        double mean = 0.0, m2 = 0.0;
        for (const SolveResult& r : out) {
            mean += r.x0.data[static_cast<size_t>(j)];
            m2 += r.x0.data[static_cast<size_t>(j)] * r.x0.data[static_cast<size_t>(j)];
        }
        mean /= n;
        double var = m2 / n - mean * mean;
        CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
        CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / (n - 1.0)));
    }
}

TEST_CASE("solve: divergence guard reports the failing step") {
    NoiseSchedule sched;
    struct ExplodingScore final : ScoreFunction {
        NoiseSchedule sched_;
        explicit ExplodingScore(NoiseSchedule s) : sched_(s) {}
        int64_t dim() const override { return 2; }
        const NoiseSchedule& schedule() const override { return sched_; }
        NodeRef build(Graph& g, NodeRef x, double, int) const override {
            return g.scale(x, -4000.0);
        }
    } s(sched);
    GuidanceSpec spec;
    SamplerConfig cfg;
    cfg.n_steps = 30;
    Rng rng(51);
    CHECK_THROWS_AS(solve(s, spec, cfg, rng), DivergedError);
}

TEST_CASE("solve: final clamp keeps images in [0,1]") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.5, 0.5});
    PointMassScore s(c, sched);
    GuidanceSpec spec;
    SamplerConfig cfg;
    cfg.n_steps = 30;
    Rng rng(52);
    SolveResult r = solve(s, spec, cfg, rng);
    for (double v : r.x0.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(r.trajectory.size() == 30);
}

TEST_CASE("solve_batch is deterministic and ordered by chain index") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.5, 0.5});
    PointMassScore s(c, sched);
    GuidanceSpec spec;
    SamplerConfig cfg;
    cfg.n_steps = 20;
    std::vector<SolveResult> a = solve_batch(s, spec, cfg, 8, 53);
    std::vector<SolveResult> b = solve_batch(s, spec, cfg, 8, 53);
    for (int i = 0; i < 8; ++i) CHECK(bits_equal(a[static_cast<size_t>(i)].x0, b[static_cast<size_t>(i)].x0));
    // chains are independent streams
    CHECK_FALSE(bits_equal(a[0].x0, a[1].x0));
}

TEST_CASE("sampler config validation") {
    NoiseSchedule sched;
    SamplerConfig cfg;
    cfg.n_steps = 0;
    CHECK_THROWS_AS(cfg.validate(sched), ContractError);
    cfg.n_steps = 10;
    cfg.t_end = 0.0; // below t_eps
    CHECK_THROWS_AS(cfg.validate(sched), ContractError);
    cfg.t_end = 2.0;
    CHECK_THROWS_AS(cfg.validate(sched), ContractError);
}

TEST_CASE("trajectory CSV uses the pinned schema") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.5, 0.5});
    PointMassScore s(c, sched);
    GuidanceSpec spec;
    SamplerConfig cfg;
    cfg.n_steps = 5;
    Rng rng(54);
    SolveResult r = solve(s, spec, cfg, rng);
    write_trajectory_csv("/tmp/scoreag_traj.csv", r.trajectory);
    std::ifstream is("/tmp/scoreag_traj.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header == "step,t,score_norm,guidance_norm_y,guidance_norm_x");
    int lines = 0;
    std::string line;
    while (std::getline(is, line)) ++lines;
    CHECK(lines == 5);
}
