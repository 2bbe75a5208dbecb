#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scoreag/models.hpp"
#include "scoreag/sampler.hpp"
#include "scoreag/score_fn.hpp"
#include "scoreag/tensor.hpp"

namespace scoreag {

/// GAS/GAT attack description. target_class == 0 means untargeted: the
/// guidance aims at the strongest class other than true_class, re-chosen at
/// every step from f(x_hat0).
struct AttackSpec {
    std::string mode = "gas"; // gas | gat
    int true_class = 0;       // y*, 1..K
    int target_class = 0;     // 0 = untargeted
    double s_y = 0.0;
    double s_x = 0.0;                // gat only
    std::optional<Tensor> reference; // x*, gat only
    int max_restarts = 4;            // gas rejection sampling bound
    SamplerConfig sampler;
    WeightSet classifier_weights = WeightSet::Ema;

    void validate(int64_t dim, int n_classes) const;
};

struct PurifySpec {
    double s_x = 10.0;
    SamplerConfig sampler;

    void validate() const;
};

/// Per-sample attack/purification outcome. Fields that do not apply to a
/// mode hold 0 (y_target for untargeted runs, prediction fields for gap).
struct TaskResult {
    int index = 0;
    std::string mode;
    int y_true = 0;
    int y_target = 0;
    int y_pred_before = 0;
    int y_pred_after = 0;
    bool success = false;
    double l2 = 0.0;
    double linf = 0.0;
    int restarts = 0;
    uint64_t seed = 0;
    bool input_warning = false; // gat: reference was already misclassified
    Tensor output;
    std::vector<StepStats> trajectory;
};

/// Synthesize an adversarial sample of class y* misclassified by f. Retries
/// with fresh noise up to max_restarts times on failure.
TaskResult gas(const ScoreFunction& s, const Classifier& f, const AttackSpec& spec, uint64_t seed);

/// Transform the reference x* into an adversarial sample. No retries; a
/// reference that f already misclassifies yields a warning result.
TaskResult gat(const ScoreFunction& s, const Classifier& f, const AttackSpec& spec, uint64_t seed);

/// Purify x_adv with the unconditional score and reconstruction guidance.
TaskResult gap(const ScoreFunction& s, const PurifySpec& spec, const Tensor& x_adv, uint64_t seed);

// Dataset-level fan-out; one worker per sample, results in input order.
std::vector<TaskResult> run_gas_batch(const ScoreFunction& s, const Classifier& f,
                                      const AttackSpec& spec, const std::vector<int>& classes,
                                      uint64_t seed);
std::vector<TaskResult> run_gat_batch(const ScoreFunction& s, const Classifier& f,
                                      const AttackSpec& spec, const Tensor& images,
                                      const std::vector<int>& labels, uint64_t seed);
std::vector<TaskResult> run_gap_batch(const ScoreFunction& s, const PurifySpec& spec,
                                      const Tensor& images, uint64_t seed);

void write_results_csv(const std::string& path, const std::vector<TaskResult>& results);
std::string task_result_json(const TaskResult& r);

} // namespace scoreag
