#include "scoreag/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "scoreag/errors.hpp"
#include "scoreag/optim.hpp"
#include "scoreag/score_fn.hpp"

namespace scoreag {

using nlohmann::json;

WeightSet weightset_from_string(const std::string& s) {
    if (s == "live") return WeightSet::Live;
    if (s == "ema") return WeightSet::Ema;
    throw ConfigError("weights must be 'live' or 'ema', got '" + s + "'");
}

namespace {

Tensor he_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng, double gain = 1.0) {
    Tensor t = Tensor::randn(std::move(shape), rng);
    double s = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v *= s;
    return t;
}

void check_labels(const std::vector<int>& labels, int k, bool allow_uncond) {
    for (int y : labels) {
        int lo = allow_uncond ? 0 : 1;
        if (y < lo || y > k) {
            throw ContractError("label " + std::to_string(y) + " outside {" + std::to_string(lo) +
                                ".." + std::to_string(k) + "}");
        }
    }
}

} // namespace

ScoreModel ScoreModel::init(const ScoreNetConfig& cfg, const NoiseSchedule& schedule, uint64_t seed) {
    if (cfg.input_dim <= 0 || cfg.n_classes < 1) {
        throw ConfigError("ScoreModel: input_dim and n_classes must be positive");
    }
    if (cfg.time_embed_dim < 2 || cfg.time_embed_dim % 2 != 0) {
        throw ConfigError("ScoreModel: time_embed_dim must be even and >= 2");
    }
    if (cfg.hidden.empty()) throw ConfigError("ScoreModel: need at least one hidden layer");
    schedule.validate();

    ScoreModel m;
    m.cfg = cfg;
    m.schedule = schedule;
    Rng rng(Rng::derive(seed, 0xE5C0));

    Tensor embed = Tensor::randn({cfg.n_classes + 1, cfg.class_embed_dim}, rng);
    for (double& v : embed.data) v *= 0.5;
    m.names.push_back("class_embed");
    m.params.push_back(std::move(embed));

    int64_t in_dim = 2 * cfg.input_dim + cfg.time_embed_dim + cfg.class_embed_dim;
    for (size_t l = 0; l < cfg.hidden.size(); ++l) {
        int64_t out_dim = cfg.hidden[l];
        m.names.push_back("w" + std::to_string(l + 1));
        m.params.push_back(he_init({in_dim, out_dim}, in_dim, rng));
        m.names.push_back("b" + std::to_string(l + 1));
        m.params.push_back(Tensor::zeros({out_dim}));
        in_dim = out_dim;
    }
    // zero-init output layer: the net starts as the zero score
    m.names.push_back("w_out");
    m.params.push_back(Tensor::zeros({in_dim, cfg.input_dim}));
    m.names.push_back("b_out");
    m.params.push_back(Tensor::zeros({cfg.input_dim}));

    m.ema = m.params;
    return m;
}

Tensor ScoreModel::time_features(const std::vector<double>& t) const {
    // Noise-level conditioning: sigma and t enter directly, the rest is a
    // sinusoidal embedding of t. The direct sigma channel is what lets the
    // trunk produce the sigma(t)-proportional raw outputs cheaply.
    int64_t rows = static_cast<int64_t>(t.size());
    int half = (cfg.time_embed_dim - 2) / 2;
    Tensor f = Tensor::zeros({rows, cfg.time_embed_dim});
    for (int64_t r = 0; r < rows; ++r) {
        double tv = t[static_cast<size_t>(r)];
        double sg = coeffs(schedule, tv).sigma();
        double* row = f.data.data() + r * cfg.time_embed_dim;
        row[0] = sg;
        row[1] = tv;
        for (int i = 0; i < half; ++i) {
            double freq = half == 1 ? 1.0 : std::exp(std::log(1000.0) * i / (half - 1));
            double a = 6.283185307179586 * freq * tv;
            row[2 + 2 * i] = std::sin(a);
            row[2 + 2 * i + 1] = std::cos(a);
        }
    }
    return f;
}

Tensor ScoreModel::class_onehot(const std::vector<int>& y) const {
    check_labels(y, cfg.n_classes, true);
    int64_t rows = static_cast<int64_t>(y.size());
    int64_t cols = cfg.n_classes + 1;
    Tensor oh = Tensor::zeros({rows, cols});
    for (int64_t r = 0; r < rows; ++r) {
        int yi = y[static_cast<size_t>(r)];
        int64_t col = yi == 0 ? uncond_row() : yi - 1;
        oh.data[static_cast<size_t>(r * cols + col)] = 1.0;
    }
    return oh;
}

NodeRef ScoreModel::build_with_nodes(Graph& g, NodeRef x, const std::vector<double>& t,
                                     const std::vector<int>& y,
                                     const std::vector<NodeRef>& wn) const {
    if (wn.size() != params.size()) throw ContractError("ScoreModel: weight node count mismatch");
    int64_t rows = g.value(x).shape[0];
    if (static_cast<int64_t>(t.size()) != rows || static_cast<int64_t>(y.size()) != rows) {
        throw ContractError("ScoreModel: need one (t, y) per row");
    }
    NodeRef tf = g.constant(time_features(t), "time_feat");
    NodeRef oh = g.constant(class_onehot(y), "class_onehot");
    NodeRef yemb = g.matmul(oh, wn[0]);
    // sigma-scaled copy of the input: the epsilon-target of unit-variance
    // data is -sigma*x, so these channels make it a linear readout
    Tensor sig_col = Tensor::zeros({rows, 1});
    for (int64_t r = 0; r < rows; ++r) {
        sig_col.data[static_cast<size_t>(r)] = coeffs(schedule, t[static_cast<size_t>(r)]).sigma();
    }
    NodeRef xs = g.mul(x, g.broadcast(g.constant(std::move(sig_col), "sigma"), {rows, cfg.input_dim}));
    NodeRef h = g.concat({x, xs, tf, yemb}, 1);
    size_t wi = 1;
    for (size_t l = 0; l < cfg.hidden.size(); ++l) {
        h = g.nonlin(g.affine(h, wn[wi], wn[wi + 1]), cfg.nonlin);
        wi += 2;
    }
    NodeRef raw = g.affine(h, wn[wi], wn[wi + 1]);
    // score = raw / sigma(t), per row
    Tensor inv_sigma = Tensor::zeros({rows, 1});
    for (int64_t r = 0; r < rows; ++r) {
        inv_sigma.data[static_cast<size_t>(r)] = 1.0 / coeffs(schedule, t[static_cast<size_t>(r)]).sigma();
    }
    NodeRef sg = g.broadcast(g.constant(std::move(inv_sigma), "inv_sigma"), {rows, cfg.input_dim});
    return g.mul(raw, sg);
}

NodeRef ScoreModel::build(Graph& g, NodeRef x, double t, int y, WeightSet ws) const {
    int64_t rows = g.value(x).shape[0];
    std::vector<double> ts(static_cast<size_t>(rows), t);
    std::vector<int> ys(static_cast<size_t>(rows), y);
    const std::vector<Tensor>& w = weights(ws);
    std::vector<NodeRef> wn;
    wn.reserve(w.size());
    for (size_t i = 0; i < w.size(); ++i) wn.push_back(g.constant(w[i], names[i]));
    return build_with_nodes(g, x, ts, ys, wn);
}

int64_t ClassifierConfig::input_dim() const { return shape_numel(input_shape); }

Classifier Classifier::init(const ClassifierConfig& cfg, uint64_t seed) {
    if (cfg.n_classes < 2) throw ConfigError("Classifier: need n_classes >= 2");
    if (cfg.feature_dim < 1) throw ConfigError("Classifier: feature_dim >= 1");
    Classifier f;
    f.cfg = cfg;
    Rng rng(Rng::derive(seed, 0xC1A5));

    if (cfg.kind == "conv") {
        if (cfg.input_shape.size() != 3 || cfg.input_shape[0] != 1) {
            throw ConfigError("Classifier(conv): input_shape must be (1,H,W); use kind=mlp otherwise");
        }
        int64_t h = cfg.input_shape[1], w = cfg.input_shape[2];
        if (h < 4 || w < 4) throw ConfigError("Classifier(conv): image too small");
        int64_t oh = (h + 2 - 3) / 2 + 1, ow = (w + 2 - 3) / 2 + 1;
        f.names = {"conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b", "head_w", "head_b"};
        f.params.push_back(he_init({9, cfg.conv_channels1}, 9, rng));
        f.params.push_back(Tensor::zeros({cfg.conv_channels1}));
        f.params.push_back(he_init({9LL * cfg.conv_channels1, cfg.conv_channels2}, 9LL * cfg.conv_channels1, rng));
        f.params.push_back(Tensor::zeros({cfg.conv_channels2}));
        int64_t flat = oh * ow * cfg.conv_channels2;
        f.params.push_back(he_init({flat, cfg.feature_dim}, flat, rng));
        f.params.push_back(Tensor::zeros({cfg.feature_dim}));
        f.params.push_back(he_init({cfg.feature_dim, cfg.n_classes}, cfg.feature_dim, rng));
        f.params.push_back(Tensor::zeros({cfg.n_classes}));
    } else if (cfg.kind == "mlp") {
        int64_t in_dim = cfg.input_dim();
        int li = 0;
        for (int hdim : cfg.mlp_hidden) {
            f.names.push_back("w" + std::to_string(++li));
            f.params.push_back(he_init({in_dim, hdim}, in_dim, rng));
            f.names.push_back("b" + std::to_string(li));
            f.params.push_back(Tensor::zeros({hdim}));
            in_dim = hdim;
        }
        f.names.push_back("fc_w");
        f.params.push_back(he_init({in_dim, cfg.feature_dim}, in_dim, rng));
        f.names.push_back("fc_b");
        f.params.push_back(Tensor::zeros({cfg.feature_dim}));
        f.names.push_back("head_w");
        f.params.push_back(he_init({cfg.feature_dim, cfg.n_classes}, cfg.feature_dim, rng));
        f.names.push_back("head_b");
        f.params.push_back(Tensor::zeros({cfg.n_classes}));
    } else {
        throw ConfigError("Classifier: kind must be conv or mlp, got '" + cfg.kind + "'");
    }
    f.ema = f.params;
    return f;
}

ClassifierOutputs Classifier::build_with_nodes(Graph& g, NodeRef x,
                                               const std::vector<NodeRef>& wn) const {
    if (wn.size() != params.size()) throw ContractError("Classifier: weight node count mismatch");
    int64_t batch = g.value(x).shape[0];
    NodeRef h = x;
    size_t wi = 0;
    if (cfg.kind == "conv") {
        int64_t ih = cfg.input_shape[1], iw = cfg.input_shape[2];
        Im2colAttrs a1{static_cast<int>(ih), static_cast<int>(iw), 1, 3, 3, 1, 1};
        h = g.im2col(h, a1);
        h = g.nonlin(g.affine(h, wn[0], wn[1]), cfg.nonlin);
        h = g.reshape(h, {batch, ih * iw * cfg.conv_channels1});
        Im2colAttrs a2{static_cast<int>(ih), static_cast<int>(iw), cfg.conv_channels1, 3, 3, 2, 1};
        h = g.im2col(h, a2);
        h = g.nonlin(g.affine(h, wn[2], wn[3]), cfg.nonlin);
        int64_t oh = (ih + 2 - 3) / 2 + 1, ow = (iw + 2 - 3) / 2 + 1;
        h = g.reshape(h, {batch, oh * ow * cfg.conv_channels2});
        wi = 4;
    } else {
        for (size_t l = 0; l < cfg.mlp_hidden.size(); ++l) {
            h = g.nonlin(g.affine(h, wn[wi], wn[wi + 1]), cfg.nonlin);
            wi += 2;
        }
    }
    NodeRef features = g.nonlin(g.affine(h, wn[wi], wn[wi + 1]), cfg.nonlin);
    NodeRef logits = g.affine(features, wn[wi + 2], wn[wi + 3]);
    return {logits, features};
}

ClassifierOutputs Classifier::build(Graph& g, NodeRef x, WeightSet ws) const {
    const std::vector<Tensor>& w = weights(ws);
    std::vector<NodeRef> wn;
    wn.reserve(w.size());
    for (size_t i = 0; i < w.size(); ++i) wn.push_back(g.constant(w[i], names[i]));
    return build_with_nodes(g, x, wn);
}

namespace {

int argmax_row(const double* v, int64_t k) {
    int best = 0;
    for (int64_t j = 1; j < k; ++j) {
        if (v[j] > v[best]) best = static_cast<int>(j);
    }
    return best;
}

} // namespace

std::vector<Classification> classify_batch(const Classifier& f, const Tensor& images, WeightSet ws) {
    int64_t d = f.cfg.input_dim();
    if (images.numel() % d != 0) {
        throw ShapeError("classify: image batch " + images.shape_str() + " incompatible with input dim " +
                         std::to_string(d));
    }
    int64_t n = images.numel() / d;
    Tensor flat = images.reshaped({n, d});
    std::vector<bool> clamped(static_cast<size_t>(n), false);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            double& v = flat.data[static_cast<size_t>(i * d + j)];
            if (v < 0.0 || v > 1.0) {
                clamped[static_cast<size_t>(i)] = true;
                v = std::min(1.0, std::max(0.0, v));
            }
        }
    }
    Graph g;
    NodeRef x = g.constant(std::move(flat), "x");
    ClassifierOutputs out = f.build(g, x, ws);
    const Tensor& logits = g.value(out.logits);
    const Tensor& feats = g.value(out.features);
    int64_t k = logits.shape[1];
    int64_t fd = feats.shape[1];
    std::vector<Classification> res(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        Classification& c = res[static_cast<size_t>(i)];
        const double* row = logits.data.data() + i * k;
        c.label = argmax_row(row, k) + 1;
        c.logits.assign(row, row + k);
        const double* frow = feats.data.data() + i * fd;
        c.features.assign(frow, frow + fd);
        c.clamped_input = clamped[static_cast<size_t>(i)];
    }
    return res;
}

Classification classify(const Classifier& f, const Tensor& x, WeightSet ws) {
    return classify_batch(f, x, ws).at(0);
}

Tensor classifier_features(const Classifier& f, const Tensor& images, WeightSet ws) {
    int64_t d = f.cfg.input_dim();
    int64_t n = images.numel() / d;
    Graph g;
    NodeRef x = g.constant(images.reshaped({n, d}), "x");
    ClassifierOutputs out = f.build(g, x, ws);
    return g.value(out.features);
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1) throw ConfigError("TrainConfig: positive epochs/batch_size");
    if (!(lr > 0.0)) throw ConfigError("TrainConfig: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("TrainConfig: momentum in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay >= 0");
    if (ema_decay < 0.0 || ema_decay >= 1.0) throw ConfigError("TrainConfig: ema_decay in [0,1)");
    if (lambda_weighting != "sigma2" && lambda_weighting != "one") {
        throw ConfigError("TrainConfig: lambda_weighting must be sigma2 or one");
    }
    if (uncond_fraction < 0.0 || uncond_fraction > 1.0) {
        throw ConfigError("TrainConfig: uncond_fraction in [0,1]");
    }
}

double dsm_loss(const ScoreFunction& s, const Tensor& x0_batch, const std::vector<int>& y_batch,
                const std::string& lambda_weighting, Rng& rng) {
    if (x0_batch.rank() != 2 || x0_batch.shape[0] == 0) {
        throw ContractError("dsm_loss: empty or non-2D batch");
    }
    int64_t n = x0_batch.shape[0], d = x0_batch.shape[1];
    if (static_cast<int64_t>(y_batch.size()) != n) throw ContractError("dsm_loss: label count mismatch");
    const NoiseSchedule& sched = s.schedule();
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        Tensor x0 = Tensor::zeros({d});
        std::copy(x0_batch.data.begin() + i * d, x0_batch.data.begin() + (i + 1) * d, x0.data.begin());
        double t = rng.uniform(sched.t_eps, 1.0);
        Tensor z = Tensor::randn({d}, rng);
        Tensor xt = perturb(x0, t, z, sched);
        Tensor target = kernel_score(xt, x0, t, sched);
        Tensor sc = s.score(xt, t, y_batch[static_cast<size_t>(i)]);
        double lam = lambda_weighting == "one" ? 1.0 : coeffs(sched, t).sigma2;
        double e = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double diff = sc.data[static_cast<size_t>(j)] - target.data[static_cast<size_t>(j)];
            e += diff * diff;
        }
        total += lam * e;
    }
    return total / static_cast<double>(n);
}

namespace {

struct BatchPlan {
    std::vector<int> order;
    int64_t n_batches = 0;
};

BatchPlan plan_epoch(int64_t n, int batch_size, Rng& rng) {
    BatchPlan p;
    p.order.resize(static_cast<size_t>(n));
    std::iota(p.order.begin(), p.order.end(), 0);
    rng.shuffle(p.order);
    p.n_batches = (n + batch_size - 1) / batch_size;
    return p;
}

} // namespace

TrainTrace train_score(ScoreModel& model, const TrainData& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.n() == 0) throw ContractError("train_score: empty dataset");
    if (data.dim() != model.cfg.input_dim) {
        throw ShapeError("train_score: data dim " + std::to_string(data.dim()) +
                         " != model input dim " + std::to_string(model.cfg.input_dim));
    }
    check_labels(data.labels, model.cfg.n_classes, false);
    const NoiseSchedule& sched = model.schedule;
    int64_t n = data.n(), d = data.dim();

    std::vector<Tensor> velocity;
    for (const Tensor& p : model.params) velocity.push_back(Tensor::zeros(p.shape));

    Rng rng(Rng::derive(cfg.seed, 0x5C0E));
    long total_steps = static_cast<long>(cfg.epochs) * ((n + cfg.batch_size - 1) / cfg.batch_size);
    long step = 0;
    TrainTrace trace;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        BatchPlan plan = plan_epoch(n, cfg.batch_size, rng);
        double epoch_loss = 0.0;
        for (int64_t b = 0; b < plan.n_batches; ++b) {
            int64_t lo = b * cfg.batch_size;
            int64_t hi = std::min<int64_t>(lo + cfg.batch_size, n);
            int64_t bs = hi - lo;

            // draw order is pinned: uncond coin, then per-sample (t, noise)
            bool uncond = rng.uniform() < cfg.uncond_fraction;
            std::vector<double> ts(static_cast<size_t>(bs));
            Tensor xt = Tensor::zeros({bs, d});
            Tensor target = Tensor::zeros({bs, d});
            Tensor lam = Tensor::zeros({bs, 1});
            std::vector<int> ys(static_cast<size_t>(bs));
            for (int64_t i = 0; i < bs; ++i) {
                int src = plan.order[static_cast<size_t>(lo + i)];
                double t = rng.uniform(sched.t_eps, 1.0);
                ts[static_cast<size_t>(i)] = t;
                Tensor x0 = Tensor::zeros({d});
                std::copy(data.images.data.begin() + static_cast<int64_t>(src) * d,
                          data.images.data.begin() + static_cast<int64_t>(src) * d + d, x0.data.begin());
                Tensor z = Tensor::randn({d}, rng);
                Tensor xti = perturb(x0, t, z, sched);
                Tensor tgt = kernel_score(xti, x0, t, sched);
                std::copy(xti.data.begin(), xti.data.end(), xt.data.begin() + i * d);
                std::copy(tgt.data.begin(), tgt.data.end(), target.data.begin() + i * d);
                lam.data[static_cast<size_t>(i)] =
                    cfg.lambda_weighting == "one" ? 1.0 : coeffs(sched, t).sigma2;
                ys[static_cast<size_t>(i)] = uncond ? 0 : data.labels[static_cast<size_t>(src)];
            }

            double lr = cosine_lr(cfg.lr, step, total_steps, cfg.lr_cycles);
            double loss_value = 0.0;
            try {
                Graph g;
                std::vector<NodeRef> wn;
                for (size_t i = 0; i < model.params.size(); ++i) {
                    wn.push_back(g.input(model.names[i], model.params[i], true));
                }
                NodeRef x = g.constant(std::move(xt), "xt");
                NodeRef out = model.build_with_nodes(g, x, ts, ys, wn);
                NodeRef diff = g.sub(out, g.constant(std::move(target), "target"));
                NodeRef sq = g.mul(diff, diff);
                NodeRef w = g.broadcast(g.constant(std::move(lam), "lambda"), {bs, d});
                NodeRef loss = g.scale(g.sum(g.mul(sq, w)), 1.0 / static_cast<double>(bs));
                loss_value = g.value(loss).data[0];
                g.backward(loss);
                std::vector<Tensor> grads;
                grads.reserve(wn.size());
                for (NodeRef r : wn) grads.push_back(g.grad_of(r));
                sgd_nesterov_step(model.params, grads, velocity, lr, cfg.momentum, cfg.weight_decay);
            } catch (const OverflowError& e) {
                std::ostringstream os;
                os << "train_score: non-finite loss at step " << step << " (lr=" << lr
                   << ", last loss=" << loss_value << "): " << e.what();
                throw DivergedError(os.str(), static_cast<int>(step));
            }
            ema_update(model.ema, model.params, cfg.ema_decay);
            epoch_loss += loss_value;
            ++step;
        }
        trace.epoch_loss.push_back(epoch_loss / static_cast<double>(plan.n_batches));
    }
    return trace;
}

TrainTrace train_classifier(Classifier& f, const TrainData& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.n() == 0) throw ContractError("train_classifier: empty dataset");
    if (data.dim() != f.cfg.input_dim()) {
        throw ShapeError("train_classifier: data dim " + std::to_string(data.dim()) +
                         " != classifier input dim " + std::to_string(f.cfg.input_dim()));
    }
    check_labels(data.labels, f.cfg.n_classes, false);
    int64_t n = data.n(), d = data.dim();

    std::vector<Tensor> velocity;
    for (const Tensor& p : f.params) velocity.push_back(Tensor::zeros(p.shape));

    Rng rng(Rng::derive(cfg.seed, 0xC1F5));
    long total_steps = static_cast<long>(cfg.epochs) * ((n + cfg.batch_size - 1) / cfg.batch_size);
    long step = 0;
    TrainTrace trace;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        BatchPlan plan = plan_epoch(n, cfg.batch_size, rng);
        double epoch_loss = 0.0;
        for (int64_t b = 0; b < plan.n_batches; ++b) {
            int64_t lo = b * cfg.batch_size;
            int64_t hi = std::min<int64_t>(lo + cfg.batch_size, n);
            int64_t bs = hi - lo;
            Tensor x = Tensor::zeros({bs, d});
            std::vector<int> targets(static_cast<size_t>(bs));
            for (int64_t i = 0; i < bs; ++i) {
                int src = plan.order[static_cast<size_t>(lo + i)];
                std::copy(data.images.data.begin() + static_cast<int64_t>(src) * d,
                          data.images.data.begin() + static_cast<int64_t>(src) * d + d,
                          x.data.begin() + i * d);
                targets[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(src)] - 1;
            }
            double lr = cosine_lr(cfg.lr, step, total_steps, cfg.lr_cycles);
            double loss_value = 0.0;
            try {
                Graph g;
                std::vector<NodeRef> wn;
                for (size_t i = 0; i < f.params.size(); ++i) {
                    wn.push_back(g.input(f.names[i], f.params[i], true));
                }
                NodeRef xin = g.constant(std::move(x), "x");
                ClassifierOutputs out = f.build_with_nodes(g, xin, wn);
                NodeRef loss = g.softmax_xent(out.logits, targets);
                loss_value = g.value(loss).data[0];
                g.backward(loss);
                std::vector<Tensor> grads;
                grads.reserve(wn.size());
                for (NodeRef r : wn) grads.push_back(g.grad_of(r));
                sgd_nesterov_step(f.params, grads, velocity, lr, cfg.momentum, cfg.weight_decay);
            } catch (const OverflowError& e) {
                std::ostringstream os;
                os << "train_classifier: non-finite loss at step " << step << " (lr=" << lr
                   << ", last loss=" << loss_value << "): " << e.what();
                throw DivergedError(os.str(), static_cast<int>(step));
            }
            ema_update(f.ema, f.params, cfg.ema_decay);
            epoch_loss += loss_value;
            ++step;
        }
        trace.epoch_loss.push_back(epoch_loss / static_cast<double>(plan.n_batches));

        std::vector<Classification> preds = classify_batch(f, data.images, WeightSet::Live);
        int64_t correct = 0;
        for (int64_t i = 0; i < n; ++i) {
            if (preds[static_cast<size_t>(i)].label == data.labels[static_cast<size_t>(i)]) ++correct;
        }
        trace.epoch_acc.push_back(static_cast<double>(correct) / static_cast<double>(n));
    }
    return trace;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kMagic[4] = {'S', 'A', 'G', 'C'};
constexpr uint32_t kVersion = 1;

void write_bytes(std::ofstream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

json shapes_json(const std::vector<Tensor>& params) {
    json a = json::array();
    for (const Tensor& p : params) a.push_back(p.shape);
    return a;
}

void write_checkpoint(const std::string& path, const std::string& kind, const json& schedule,
                      const json& config, const std::vector<std::string>& names,
                      const std::vector<Tensor>& params, const std::vector<Tensor>& ema) {
    json header;
    header["model_kind"] = kind;
    header["shapes"] = shapes_json(params);
    header["names"] = names;
    header["schedule"] = schedule;
    header["config"] = config;
    std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    write_bytes(os, kMagic, 4);
    uint32_t ver = kVersion;
    write_bytes(os, &ver, 4);
    uint64_t hlen = hs.size();
    write_bytes(os, &hlen, 8);
    write_bytes(os, hs.data(), hs.size());
    for (const Tensor& p : params) write_bytes(os, p.data.data(), p.data.size() * sizeof(double));
    for (const Tensor& p : ema) write_bytes(os, p.data.data(), p.data.size() * sizeof(double));
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

struct RawCheckpoint {
    json header;
    std::vector<Tensor> params;
    std::vector<Tensor> ema;
};

RawCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("bad checkpoint magic in " + path);
    }
    uint32_t ver = 0;
    is.read(reinterpret_cast<char*>(&ver), 4);
    if (!is || ver != kVersion) throw IoError("unsupported checkpoint version in " + path);
    uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw IoError("truncated checkpoint header in " + path);

    RawCheckpoint raw;
    raw.header = json::parse(hs, nullptr, false);
    if (raw.header.is_discarded()) throw IoError("corrupt checkpoint header in " + path);

    for (int pass = 0; pass < 2; ++pass) {
        std::vector<Tensor>& dst = pass == 0 ? raw.params : raw.ema;
        for (const auto& js : raw.header.at("shapes")) {
            std::vector<int64_t> shape = js.get<std::vector<int64_t>>();
            Tensor t = Tensor::zeros(shape);
            is.read(reinterpret_cast<char*>(t.data.data()),
                    static_cast<std::streamsize>(t.data.size() * sizeof(double)));
            if (!is) throw IoError("truncated checkpoint payload in " + path);
            dst.push_back(std::move(t));
        }
    }
    return raw;
}

json nonlin_json(Nonlin n) { return nonlin_to_string(n); }

} // namespace

void save_score_checkpoint(const std::string& path, const ScoreModel& m) {
    json sched = {{"beta_min", m.schedule.beta_min},
                  {"beta_max", m.schedule.beta_max},
                  {"t_eps", m.schedule.t_eps}};
    json cfg = {{"input_dim", m.cfg.input_dim},
                {"n_classes", m.cfg.n_classes},
                {"time_embed_dim", m.cfg.time_embed_dim},
                {"class_embed_dim", m.cfg.class_embed_dim},
                {"hidden", m.cfg.hidden},
                {"nonlin", nonlin_json(m.cfg.nonlin)}};
    write_checkpoint(path, "score", sched, cfg, m.names, m.params, m.ema);
}

void save_classifier_checkpoint(const std::string& path, const Classifier& f) {
    json cfg = {{"input_shape", f.cfg.input_shape},
                {"n_classes", f.cfg.n_classes},
                {"kind", f.cfg.kind},
                {"conv_channels1", f.cfg.conv_channels1},
                {"conv_channels2", f.cfg.conv_channels2},
                {"mlp_hidden", f.cfg.mlp_hidden},
                {"feature_dim", f.cfg.feature_dim},
                {"nonlin", nonlin_json(f.cfg.nonlin)}};
    write_checkpoint(path, "classifier", nullptr, cfg, f.names, f.params, f.ema);
}

std::string checkpoint_kind(const std::string& path) {
    RawCheckpoint raw = read_checkpoint(path);
    return raw.header.at("model_kind").get<std::string>();
}

ScoreModel load_score_checkpoint(const std::string& path) {
    RawCheckpoint raw = read_checkpoint(path);
    if (raw.header.at("model_kind") != "score") {
        throw IoError("checkpoint " + path + " is not a score model");
    }
    const json& c = raw.header.at("config");
    ScoreNetConfig cfg;
    cfg.input_dim = c.at("input_dim").get<int64_t>();
    cfg.n_classes = c.at("n_classes").get<int>();
    cfg.time_embed_dim = c.at("time_embed_dim").get<int>();
    cfg.class_embed_dim = c.at("class_embed_dim").get<int>();
    cfg.hidden = c.at("hidden").get<std::vector<int>>();
    cfg.nonlin = nonlin_from_string(c.at("nonlin").get<std::string>());
    NoiseSchedule sched;
    sched.beta_min = raw.header.at("schedule").at("beta_min").get<double>();
    sched.beta_max = raw.header.at("schedule").at("beta_max").get<double>();
    sched.t_eps = raw.header.at("schedule").at("t_eps").get<double>();

    ScoreModel m = ScoreModel::init(cfg, sched, 0);
    m.names = raw.header.at("names").get<std::vector<std::string>>();
    m.params = std::move(raw.params);
    m.ema = std::move(raw.ema);
    return m;
}

Classifier load_classifier_checkpoint(const std::string& path) {
    RawCheckpoint raw = read_checkpoint(path);
    if (raw.header.at("model_kind") != "classifier") {
        throw IoError("checkpoint " + path + " is not a classifier");
    }
    const json& c = raw.header.at("config");
    ClassifierConfig cfg;
    cfg.input_shape = c.at("input_shape").get<std::vector<int64_t>>();
    cfg.n_classes = c.at("n_classes").get<int>();
    cfg.kind = c.at("kind").get<std::string>();
    cfg.conv_channels1 = c.at("conv_channels1").get<int>();
    cfg.conv_channels2 = c.at("conv_channels2").get<int>();
    cfg.mlp_hidden = c.at("mlp_hidden").get<std::vector<int>>();
    cfg.feature_dim = c.at("feature_dim").get<int>();
    cfg.nonlin = nonlin_from_string(c.at("nonlin").get<std::string>());

    Classifier f = Classifier::init(cfg, 0);
    f.names = raw.header.at("names").get<std::vector<std::string>>();
    f.params = std::move(raw.params);
    f.ema = std::move(raw.ema);
    return f;
}

} // namespace scoreag
