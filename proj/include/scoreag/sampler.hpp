#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scoreag/models.hpp"
#include "scoreag/rng.hpp"
#include "scoreag/score_fn.hpp"
#include "scoreag/tensor.hpp"

namespace scoreag {

enum class SamplerKind { ReverseSde, ProbFlowOde };
SamplerKind sampler_kind_from_string(const std::string& s);
std::string sampler_kind_to_string(SamplerKind k);

struct SamplerConfig {
    int n_steps = 200;
    SamplerKind kind = SamplerKind::ReverseSde;
    double t_start = 1.0;
    double t_end = 1e-3;
    bool stop_gradient_through_score = false;
    // Images are clamped to [0,1] after the last step; tests on unbounded
    // state spaces (analytic-score fixed points) disable the clamp.
    bool clamp_final = true;

    void validate(const NoiseSchedule& s) const;
};

/// Classifier-target guidance: s_y * grad_x log softmax_target(f(x_hat0)).
/// target_class == 0 selects the strongest class other than avoid_class at
/// every step (untargeted attack surrogate).
struct ClassifierGuidance {
    const Classifier* classifier = nullptr;
    WeightSet weights = WeightSet::Ema;
    int target_class = 0;
    int avoid_class = 0;
    double scale = 0.0; // s_y
};

/// Reconstruction guidance: s_x * grad_x (-1/2 ||x_hat0 - reference||^2).
struct ReconstructionGuidance {
    Tensor reference;
    double scale = 0.0; // s_x
};

struct GuidanceSpec {
    int class_condition = 0; // y* for the base score; 0 = unconditional
    std::optional<ClassifierGuidance> classifier_term;
    std::optional<ReconstructionGuidance> reconstruction_term;

    void validate(int64_t dim) const;
    bool active() const;
};

struct EulerPrediction {
    Tensor x_hat0;
    double t_source = 0.0;
};

struct GuidedScoreResult {
    Tensor total;
    double score_norm = 0.0;
    double guidance_norm_y = 0.0;
    double guidance_norm_x = 0.0;
    double xhat_l2 = 0.0;  // norm of the Euler prediction used by the terms
    int chosen_target = 0; // resolved per-step target (0 when no classifier term)
};

/// Probability-flow drift -1/2 beta(t) (x + s(x,t,y)).
Tensor pf_drift(const ScoreFunction& s, const Tensor& x, double t, int y);

/// One-step Euler estimate of the clean sample: x - t * pf_drift(x, t).
EulerPrediction euler_x0(const ScoreFunction& s, const Tensor& x, double t, int y);

/// Conditional score of the guided reverse process: base score plus the
/// active guidance gradients, differentiated through the Euler prediction.
GuidedScoreResult guided_score(const ScoreFunction& s, const GuidanceSpec& spec, const Tensor& x,
                               double t, bool stop_gradient_through_score = false);

struct StepStats {
    int step = 0;
    double t = 0.0;
    double score_norm = 0.0;
    double guidance_norm_y = 0.0;
    double guidance_norm_x = 0.0;
    int target = 0; // per-step resolved guidance target (not part of the CSV schema)
};

struct SolveResult {
    Tensor x0;
    std::vector<StepStats> trajectory;
};

/// Euler-Maruyama over a uniform grid from t_start down to t_end:
///   x <- x - dt*[f(x,t) - g(t)^2 * guided_score] + g(t)*sqrt(dt)*z
/// The prob-flow kind drops the noise and uses the 1/2 g^2 factor. Aborts
/// with DivergedError when |x|_inf exceeds 100.
SolveResult solve(const ScoreFunction& s, const GuidanceSpec& spec, const SamplerConfig& cfg,
                  Rng& rng);

/// Independent chains with per-chain substreams derived from (seed, index);
/// chains run in parallel and results are returned in index order.
std::vector<SolveResult> solve_batch(const ScoreFunction& s, const GuidanceSpec& spec,
                                     const SamplerConfig& cfg, int n_chains, uint64_t seed);

void write_trajectory_csv(const std::string& path, const std::vector<StepStats>& trajectory);

} // namespace scoreag
