#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scoreag/graph.hpp"
#include "scoreag/rng.hpp"
#include "scoreag/tensor.hpp"
#include "scoreag/vpsde.hpp"

namespace scoreag {

class ScoreFunction;

/// Which parameter set a forward pass reads.
enum class WeightSet { Live, Ema };
WeightSet weightset_from_string(const std::string& s);

/// Flat training set. Unlike dataio::Dataset, image values are not required
/// to lie in [0,1] (tests train on unclipped synthetic data).
struct TrainData {
    Tensor images; // (n, d)
    std::vector<int> labels; // 1..K
    int n_classes = 0;
    std::vector<int64_t> sample_shape; // ({C,H,W}) or ({d})

    int64_t n() const { return images.shape.empty() ? 0 : images.shape[0]; }
    int64_t dim() const { return images.rank() == 2 ? images.shape[1] : 0; }
};

struct ScoreNetConfig {
    int64_t input_dim = 0;
    int n_classes = 0;
    int time_embed_dim = 32;  // sinusoidal features, must be even
    int class_embed_dim = 16; // learned rows, one extra reserved for "unconditional"
    std::vector<int> hidden = {256, 256, 256};
    Nonlin nonlin = Nonlin::Silu;
};

/// Class- and time-conditional score network s_theta(x, t, y): an MLP over
/// [x, time features, class embedding] whose raw output is divided by
/// sigma(t), the usual VP parameterization (the trunk predicts the noise
/// direction, which stays O(1) for all t). Class index 0 means unconditional
/// (reserved embedding row); user classes are 1..K.
struct ScoreModel {
    ScoreNetConfig cfg;
    NoiseSchedule schedule;
    std::vector<std::string> names;
    std::vector<Tensor> params;
    std::vector<Tensor> ema;

    static ScoreModel init(const ScoreNetConfig& cfg, const NoiseSchedule& schedule, uint64_t seed);

    const std::vector<Tensor>& weights(WeightSet ws) const {
        return ws == WeightSet::Ema ? ema : params;
    }
    int uncond_row() const { return cfg.n_classes; }

    Tensor time_features(const std::vector<double>& t) const; // (B, time_embed_dim)
    Tensor class_onehot(const std::vector<int>& y) const;     // (B, K+1), y in {0..K}

    /// Forward through pre-created weight nodes; the single code path shared
    /// by training (weights as inputs) and sampling/guidance (constants).
    /// t and y are per-row.
    NodeRef build_with_nodes(Graph& g, NodeRef x, const std::vector<double>& t,
                             const std::vector<int>& y,
                             const std::vector<NodeRef>& weight_nodes) const;
    /// Convenience: same t and class for every row, weights as constants.
    NodeRef build(Graph& g, NodeRef x, double t, int y, WeightSet ws) const;
};

struct ClassifierConfig {
    std::vector<int64_t> input_shape; // (C,H,W) or (d)
    int n_classes = 0;
    std::string kind = "conv"; // conv | mlp
    int conv_channels1 = 8;
    int conv_channels2 = 16;
    std::vector<int> mlp_hidden = {64}; // mlp kind only
    int feature_dim = 64;               // penultimate layer, exposed for metrics
    Nonlin nonlin = Nonlin::Relu;

    int64_t input_dim() const;
};

struct ClassifierOutputs {
    NodeRef logits;
    NodeRef features;
};

struct Classifier {
    ClassifierConfig cfg;
    std::vector<std::string> names;
    std::vector<Tensor> params;
    std::vector<Tensor> ema;

    static Classifier init(const ClassifierConfig& cfg, uint64_t seed);

    const std::vector<Tensor>& weights(WeightSet ws) const {
        return ws == WeightSet::Ema ? ema : params;
    }
    ClassifierOutputs build_with_nodes(Graph& g, NodeRef x,
                                       const std::vector<NodeRef>& weight_nodes) const;
    ClassifierOutputs build(Graph& g, NodeRef x, WeightSet ws) const;
};

struct Classification {
    int label = 0; // 1..K, ties broken toward the lowest index
    std::vector<double> logits;
    std::vector<double> features;
    bool clamped_input = false; // input had values outside [0,1]
};

/// x is one sample, any shape with matching element count. Values outside
/// [0,1] are clamped and flagged.
Classification classify(const Classifier& f, const Tensor& x, WeightSet ws = WeightSet::Ema);
std::vector<Classification> classify_batch(const Classifier& f, const Tensor& images,
                                           WeightSet ws = WeightSet::Ema);
/// Penultimate-layer features for a batch, (n, feature_dim).
Tensor classifier_features(const Classifier& f, const Tensor& images, WeightSet ws = WeightSet::Ema);

struct TrainConfig {
    int epochs = 50;
    int batch_size = 64;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double ema_decay = 0.995;
    int lr_cycles = 1; // cosine annealing cycles over the run
    uint64_t seed = 0;
    std::string lambda_weighting = "sigma2"; // sigma2 | one
    double uncond_fraction = 0.1;            // fraction of batches trained unconditionally

    void validate() const;
};

struct TrainTrace {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_acc; // classifier only
};

/// Denoising score matching loss of an arbitrary score function on one batch:
/// mean_i lambda(t_i) * ||s(x_t, t_i, y_i) - kernel_score(x_t, x0_i, t_i)||^2.
double dsm_loss(const ScoreFunction& s, const Tensor& x0_batch, const std::vector<int>& y_batch,
                const std::string& lambda_weighting, Rng& rng);

TrainTrace train_score(ScoreModel& model, const TrainData& data, const TrainConfig& cfg);
TrainTrace train_classifier(Classifier& f, const TrainData& data, const TrainConfig& cfg);

// Checkpoint container format shared by both model kinds: "SAGC", u32 version
// (little-endian), u64 header length, JSON header, raw f64 parameter buffers
// in header order, then the EMA buffers in the same order.
void save_score_checkpoint(const std::string& path, const ScoreModel& m);
void save_classifier_checkpoint(const std::string& path, const Classifier& f);
ScoreModel load_score_checkpoint(const std::string& path);
Classifier load_classifier_checkpoint(const std::string& path);
std::string checkpoint_kind(const std::string& path); // "score" | "classifier"

} // namespace scoreag
