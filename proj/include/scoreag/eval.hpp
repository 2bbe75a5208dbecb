#pragma once

#include <string>
#include <utility>
#include <vector>

#include "scoreag/baselines.hpp"
#include "scoreag/models.hpp"
#include "scoreag/score_fn.hpp"
#include "scoreag/tasks.hpp"
#include "scoreag/tensor.hpp"

namespace scoreag {

/// Fraction of samples classified correctly. Throws on empty input.
double accuracy(const Classifier& f, const Tensor& images, const std::vector<int>& labels,
                WeightSet ws = WeightSet::Ema);

/// Median of ||x' - x||_p over sample pairs; even counts average the two
/// central values.
double median_lp(const std::vector<std::pair<Tensor, Tensor>>& pairs, NormKind p);

/// 2-Wasserstein distance between Gaussians fitted to the two feature sets:
/// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)). Covariances use 1/(n-1)
/// normalization plus 1e-6*I; the matrix root comes from an eigendecomposition
/// of the symmetrized product. Requires >= feature_dim + 1 samples per set.
double frechet_feature_distance(const Tensor& features_a, const Tensor& features_b);

struct BenchmarkConfig {
    const Classifier* classifier = nullptr;
    const ScoreFunction* score = nullptr; // required for gas/gat/gap
    Tensor eval_images;                   // (n, d)
    std::vector<int> eval_labels;

    std::string attack = "none"; // none | fgsm | pgd-l2 | pgd-linf | gas | gat
    NormBudget budget;
    int pgd_n_restarts = 2;
    AttackSpec attack_spec; // gas/gat scales and sampler

    std::string defense = "none"; // none | gap
    PurifySpec purify;

    int n_eval = 0; // 0 = whole split
    uint64_t seed = 0;
    WeightSet weights = WeightSet::Ema;
};

/// Negative metric values mean "not applicable for this configuration".
struct MetricReport {
    std::string attack;
    std::string defense;
    double clean_acc = -1.0;
    double adv_acc = -1.0;
    double robust_acc = -1.0;
    double defended_clean_acc = -1.0;
    double median_l2 = -1.0;
    double median_linf = -1.0;
    double frechet = -1.0;
    int n_samples = 0;
    int n_attacked = 0; // denominator of adv/robust accuracy
    std::string config_echo; // JSON
};

/// Evaluates the configured attack (and optional GAP defense, in the
/// preprocessor-blackbox setting: attacks only ever see the raw classifier)
/// over the evaluation split. Samples the classifier misclassifies before the
/// attack are excluded from adversarial/robust accuracy.
MetricReport run_benchmark(const BenchmarkConfig& cfg);

std::string metric_report_json(const MetricReport& r);
void write_metric_report(const std::string& json_path, const MetricReport& r);
/// Appends one summary row per (attack, defense, scale) combination.
void append_metric_csv(const std::string& csv_path, const MetricReport& r, double s_y, double s_x);

} // namespace scoreag
