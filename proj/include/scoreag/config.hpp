#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace scoreag {

// JSON run configuration. Every field has a default; unknown keys anywhere in
// the document are rejected so typos cannot silently fall back to defaults.

struct TrainSection {
    int epochs = 50;
    int batch_size = 64;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double ema_decay = 0.995;
    int lr_cycles = 1;
    std::string lambda_weighting = "sigma2";
    double uncond_fraction = 0.1;
};

struct DataSection {
    std::string kind = "shapes"; // shapes | blobs2d | idx
    int k = 10;
    int n_per_class = 200;
    int eval_n_per_class = 40;
    int size = 16;
    double separation = 6.0;
    std::string images, labels, eval_images, eval_labels; // idx kind
};

struct ScheduleSection {
    double beta_min = 0.1;
    double beta_max = 20.0;
    double t_eps = 1e-3;
};

struct ScoreModelSection {
    std::vector<int> hidden = {256, 256, 256};
    int time_embed_dim = 32;
    int class_embed_dim = 16;
    std::string nonlin = "silu";
    TrainSection train;
};

struct ClassifierSection {
    std::string kind = "conv"; // conv | mlp
    int conv_channels1 = 8;
    int conv_channels2 = 16;
    std::vector<int> mlp_hidden = {64};
    int feature_dim = 64;
    std::string nonlin = "relu";
    TrainSection train;
};

struct SamplerSection {
    int n_steps = 200;
    std::string kind = "reverse-sde";
    double t_start = 1.0;
    double t_end = -1.0; // -1: use schedule t_eps
    bool stop_gradient_through_score = false;
};

struct TaskSection {
    std::string mode = "gas"; // gas | gat | gap
    double s_y = 4.0;
    double s_x = 10.0;
    int target_class = 0; // 0 = untargeted
    int max_restarts = 4;
    int n_samples = 100;
    std::string weights = "ema";
};

struct BaselineSection {
    std::string attack = "pgd-linf"; // fgsm | pgd-l2 | pgd-linf
    double epsilon = 8.0 / 255.0;
    double step_size = 2.0 / 255.0;
    int n_iter = 40;
    int n_restarts = 2;
};

struct EvalSection {
    std::vector<std::string> attacks = {"pgd-linf"};
    std::string defense = "none"; // none | gap
    double purify_s_x = 10.0;
    int n_eval = 200;
};

struct RunConfig {
    DataSection data;
    ScheduleSection schedule;
    ScoreModelSection score_model;
    ClassifierSection classifier;
    SamplerSection sampler;
    TaskSection task;
    BaselineSection baseline;
    EvalSection eval;
    uint64_t seed = 0;
    std::string out_dir = "out";

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
    /// Effective configuration with all defaults applied; canonical because
    /// nlohmann::json keeps object keys sorted.
    nlohmann::json to_json() const;
    /// FNV-1a 64 over the canonical dump; changes iff an effective setting
    /// changes.
    std::string hash() const;

    double sampler_t_end() const { return sampler.t_end > 0.0 ? sampler.t_end : schedule.t_eps; }
};

/// manifest.json for a run directory: code version, subcommand, config hash,
/// effective config, output file list. Deliberately no timestamps so repeated
/// runs are byte-identical.
void write_manifest(const std::string& out_dir, const std::string& subcommand, const RunConfig& cfg,
                    const std::vector<std::string>& outputs);

extern const char* kScoreagVersion;

} // namespace scoreag
