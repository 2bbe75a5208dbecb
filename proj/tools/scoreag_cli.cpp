// scoreag: train score networks / classifiers on synthetic data, run the
// guided sampler (synth / transform / purify), baseline attacks, and the
// evaluation harness. See README.md for the config schema.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scoreag/baselines.hpp"
#include "scoreag/config.hpp"
#include "scoreag/dataio.hpp"
#include "scoreag/errors.hpp"
#include "scoreag/eval.hpp"
#include "scoreag/gradcheck.hpp"
#include "scoreag/models.hpp"
#include "scoreag/sampler.hpp"
#include "scoreag/tasks.hpp"

namespace fs = std::filesystem;
using namespace scoreag;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    double s_x = -1.0, s_y = -1.0;
    int target_class = -1;
    int steps = -1;
    long long seed = -1;
    std::string weights;
    bool json_lines = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON run config (defaults apply when omitted)");
    cmd->add_option("--out", o.out_dir, "output directory (overrides config out_dir)");
    cmd->add_option("--s-x", o.s_x, "reconstruction guidance scale override");
    cmd->add_option("--s-y", o.s_y, "classifier guidance scale override");
    cmd->add_option("--target-class", o.target_class, "attack target class (0 = untargeted)");
    cmd->add_option("--steps", o.steps, "sampler step count override");
    cmd->add_option("--seed", o.seed, "seed override");
    cmd->add_option("--weights", o.weights, "weight set at sampling time: live|ema");
    cmd->add_flag("--json", o.json_lines, "echo per-sample results as JSON lines");
}

RunConfig load_config(const CommonOpts& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : RunConfig::from_file(o.config_path);
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (o.s_x >= 0.0) cfg.task.s_x = o.s_x;
    if (o.s_y >= 0.0) cfg.task.s_y = o.s_y;
    if (o.target_class >= 0) cfg.task.target_class = o.target_class;
    if (o.steps > 0) cfg.sampler.n_steps = o.steps;
    if (o.seed >= 0) cfg.seed = static_cast<uint64_t>(o.seed);
    if (!o.weights.empty()) cfg.task.weights = o.weights;
    return cfg;
}

NoiseSchedule schedule_of(const RunConfig& cfg) {
    NoiseSchedule s;
    s.beta_min = cfg.schedule.beta_min;
    s.beta_max = cfg.schedule.beta_max;
    s.t_eps = cfg.schedule.t_eps;
    s.validate();
    return s;
}

SamplerConfig sampler_of(const RunConfig& cfg) {
    SamplerConfig s;
    s.n_steps = cfg.sampler.n_steps;
    s.kind = sampler_kind_from_string(cfg.sampler.kind);
    s.t_start = cfg.sampler.t_start;
    s.t_end = cfg.sampler_t_end();
    s.stop_gradient_through_score = cfg.sampler.stop_gradient_through_score;
    return s;
}

TrainConfig train_of(const TrainSection& t, uint64_t seed) {
    TrainConfig c;
    c.epochs = t.epochs;
    c.batch_size = t.batch_size;
    c.lr = t.lr;
    c.momentum = t.momentum;
    c.weight_decay = t.weight_decay;
    c.ema_decay = t.ema_decay;
    c.lr_cycles = t.lr_cycles;
    c.lambda_weighting = t.lambda_weighting;
    c.uncond_fraction = t.uncond_fraction;
    c.seed = seed;
    return c;
}

Dataset make_split(const RunConfig& cfg, const std::string& split) {
    const DataSection& d = cfg.data;
    uint64_t seed = Rng::derive(cfg.seed, split == "train" ? 1 : 2);
    Rng rng(seed);
    Dataset ds;
    if (d.kind == "shapes") {
        int n = split == "train" ? d.n_per_class : d.eval_n_per_class;
        ds = gen_shapes(d.k, n, d.size, rng);
    } else if (d.kind == "blobs2d") {
        int n = split == "train" ? d.n_per_class : d.eval_n_per_class;
        ds = gen_blobs_2d(2, n, d.separation, rng);
    } else {
        const std::string& imgs = split == "train" ? d.images : d.eval_images;
        const std::string& labs = split == "train" ? d.labels : d.eval_labels;
        if (imgs.empty() || labs.empty()) {
            throw ConfigError("data.kind=idx requires images/labels paths for the " + split + " split");
        }
        ds = load_idx_dataset(imgs, labs, split);
    }
    ds.split = split;
    return ds;
}

void write_loss_csv(const std::string& path, const TrainTrace& trace) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path);
    bool has_acc = !trace.epoch_acc.empty();
    os << (has_acc ? "epoch,loss,train_acc\n" : "epoch,loss\n");
    char buf[96];
    for (size_t e = 0; e < trace.epoch_loss.size(); ++e) {
        if (has_acc) {
            std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", e, trace.epoch_loss[e], trace.epoch_acc[e]);
        } else {
            std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", e, trace.epoch_loss[e]);
        }
        os << buf;
    }
}

void echo_results(const std::vector<TaskResult>& results, bool json_lines) {
    if (!json_lines) return;
    for (const TaskResult& r : results) std::cout << task_result_json(r) << "\n";
}

int cmd_gen_data(const CommonOpts& o) {
    RunConfig cfg = load_config(o);
    fs::create_directories(cfg.out_dir);
    std::vector<std::string> outputs;
    for (const char* split : {"train", "eval"}) {
        Dataset ds = make_split(cfg, split);
        std::string ip = cfg.out_dir + "/" + split + "_images.idx";
        std::string lp = cfg.out_dir + "/" + split + "_labels.idx";
        int64_t n = ds.n();
        std::vector<int64_t> sh = ds.sample_shape(); // (C,H,W); written as (n, C*H, W)
        write_idx_unit(ip, ds.images.reshaped({n, sh[0] * sh[1], sh[2]}));
        write_idx_labels(lp, ds.labels);
        outputs.push_back(ip);
        outputs.push_back(lp);
        if (std::string(split) == "train" && ds.sample_shape()[1] > 1) {
            fs::create_directories(cfg.out_dir + "/preview");
            int64_t plane = sh[1] * sh[2];
            for (int64_t i = 0; i < std::min<int64_t>(8, n); ++i) {
                Tensor img = Tensor::zeros({plane});
                std::copy(ds.images.data.begin() + i * plane, ds.images.data.begin() + (i + 1) * plane,
                          img.data.begin());
                write_pgm(cfg.out_dir + "/preview/" + split + "_" + std::to_string(i) + ".pgm", img,
                          sh[1], sh[2]);
            }
        }
        std::cout << split << ": " << n << " samples, " << ds.n_classes << " classes\n";
    }
    write_manifest(cfg.out_dir, "gen-data", cfg, outputs);
    return 0;
}

int cmd_train_score(const CommonOpts& o) {
    RunConfig cfg = load_config(o);
    fs::create_directories(cfg.out_dir);
    Dataset ds = make_split(cfg, "train");
    TrainData td = ds.to_train_data();

    ScoreNetConfig sc;
    sc.input_dim = td.dim();
    sc.n_classes = td.n_classes;
    sc.time_embed_dim = cfg.score_model.time_embed_dim;
    sc.class_embed_dim = cfg.score_model.class_embed_dim;
    sc.hidden = cfg.score_model.hidden;
    sc.nonlin = nonlin_from_string(cfg.score_model.nonlin);
    ScoreModel model = ScoreModel::init(sc, schedule_of(cfg), cfg.seed);

    TrainTrace trace = train_score(model, td, train_of(cfg.score_model.train, cfg.seed));
    std::string ckpt = cfg.out_dir + "/score.ckpt";
    std::string csv = cfg.out_dir + "/score_train.csv";
    save_score_checkpoint(ckpt, model);
    write_loss_csv(csv, trace);
    write_manifest(cfg.out_dir, "train-score", cfg, {ckpt, csv});
    std::printf("trained score model: %d epochs, final loss %.6g\n",
                static_cast<int>(trace.epoch_loss.size()), trace.epoch_loss.back());
    return 0;
}

int cmd_train_classifier(const CommonOpts& o) {
    RunConfig cfg = load_config(o);
    fs::create_directories(cfg.out_dir);
    Dataset ds = make_split(cfg, "train");
    TrainData td = ds.to_train_data();

    ClassifierConfig cc;
    cc.input_shape = ds.sample_shape();
    cc.n_classes = td.n_classes;
    cc.kind = cfg.classifier.kind;
    cc.conv_channels1 = cfg.classifier.conv_channels1;
    cc.conv_channels2 = cfg.classifier.conv_channels2;
    cc.mlp_hidden = cfg.classifier.mlp_hidden;
    cc.feature_dim = cfg.classifier.feature_dim;
    cc.nonlin = nonlin_from_string(cfg.classifier.nonlin);
    Classifier f = Classifier::init(cc, cfg.seed);

    TrainTrace trace = train_classifier(f, td, train_of(cfg.classifier.train, cfg.seed));

    Dataset ev = make_split(cfg, "eval");
    TrainData et = ev.to_train_data();
    double held_out = accuracy(f, et.images, et.labels);

    std::string ckpt = cfg.out_dir + "/classifier.ckpt";
    std::string csv = cfg.out_dir + "/classifier_train.csv";
    save_classifier_checkpoint(ckpt, f);
    write_loss_csv(csv, trace);
    write_manifest(cfg.out_dir, "train-classifier", cfg, {ckpt, csv});
    std::printf("trained classifier: train acc %.4f, held-out acc %.4f\n", trace.epoch_acc.back(),
                held_out);
    return 0;
}

struct LoadedModels {
    ScoreModel score;
    Classifier classifier;
    bool has_classifier = false;
};

LoadedModels load_models(const RunConfig& cfg, const std::string& score_ckpt,
                         const std::string& classifier_ckpt, bool need_classifier) {
    LoadedModels m{ScoreModel{}, Classifier{}, false};
    std::string sp = score_ckpt.empty() ? cfg.out_dir + "/score.ckpt" : score_ckpt;
    m.score = load_score_checkpoint(sp);
    if (need_classifier || !classifier_ckpt.empty()) {
        std::string cp = classifier_ckpt.empty() ? cfg.out_dir + "/classifier.ckpt" : classifier_ckpt;
        m.classifier = load_classifier_checkpoint(cp);
        m.has_classifier = true;
    }
    return m;
}

AttackSpec attack_spec_of(const RunConfig& cfg) {
    AttackSpec a;
    a.mode = cfg.task.mode == "gat" ? "gat" : "gas";
    a.target_class = cfg.task.target_class;
    a.s_y = cfg.task.s_y;
    a.s_x = cfg.task.s_x;
    a.max_restarts = cfg.task.max_restarts;
    a.sampler = sampler_of(cfg);
    a.classifier_weights = weightset_from_string(cfg.task.weights);
    return a;
}

int cmd_synth(const CommonOpts& o, const std::string& score_ckpt, const std::string& cls_ckpt) {
    RunConfig cfg = load_config(o);
    fs::create_directories(cfg.out_dir);
    LoadedModels m = load_models(cfg, score_ckpt, cls_ckpt, true);
    NetScore net(m.score, weightset_from_string(cfg.task.weights));

    AttackSpec spec = attack_spec_of(cfg);
    spec.mode = "gas";
    std::vector<int> classes;
    for (int i = 0; i < cfg.task.n_samples; ++i) {
        classes.push_back(1 + i % m.score.cfg.n_classes);
    }
    std::vector<TaskResult> results = run_gas_batch(net, m.classifier, spec, classes, cfg.seed);

    std::string csv = cfg.out_dir + "/synth_results.csv";
    write_results_csv(csv, results);
    echo_results(results, o.json_lines);
    int succ = 0;
    for (const TaskResult& r : results) succ += r.success ? 1 : 0;
    write_manifest(cfg.out_dir, "synth", cfg, {csv});
    std::printf("gas: %d/%zu adversarial syntheses\n", succ, results.size());
    return 0;
}

int cmd_transform(const CommonOpts& o, const std::string& score_ckpt, const std::string& cls_ckpt) {
    RunConfig cfg = load_config(o);
    fs::create_directories(cfg.out_dir);
    LoadedModels m = load_models(cfg, score_ckpt, cls_ckpt, true);
    NetScore net(m.score, weightset_from_string(cfg.task.weights));

    Dataset ev = make_split(cfg, "eval");
    TrainData td = ev.to_train_data();
    int64_t n = std::min<int64_t>(cfg.task.n_samples, td.n());
    Tensor imgs = td.images.reshaped({td.n(), td.dim()});
    Tensor sub = Tensor::zeros({n, td.dim()});
    std::copy(imgs.data.begin(), imgs.data.begin() + n * td.dim(), sub.data.begin());
    std::vector<int> labels(td.labels.begin(), td.labels.begin() + n);

    AttackSpec spec = attack_spec_of(cfg);
    spec.mode = "gat";
    std::vector<TaskResult> results = run_gat_batch(net, m.classifier, spec, sub, labels, cfg.seed);

    std::string csv = cfg.out_dir + "/transform_results.csv";
    write_results_csv(csv, results);
    echo_results(results, o.json_lines);
    int succ = 0;
    for (const TaskResult& r : results) succ += r.success ? 1 : 0;
    write_manifest(cfg.out_dir, "transform", cfg, {csv});
    std::printf("gat: %d/%zu successful transformations\n", succ, results.size());
    return 0;
}

int cmd_purify(const CommonOpts& o, const std::string& score_ckpt, const std::string& images_idx) {
    RunConfig cfg = load_config(o);
    fs::create_directories(cfg.out_dir);
    LoadedModels m = load_models(cfg, score_ckpt, "", false);
    NetScore net(m.score, weightset_from_string(cfg.task.weights));

    Tensor images;
    if (!images_idx.empty()) {
        images = read_idx(images_idx);
    } else {
        Dataset ev = make_split(cfg, "eval");
        images = ev.images;
    }
    int64_t d = net.dim();
    int64_t n = std::min<int64_t>(cfg.task.n_samples, images.numel() / d);
    Tensor sub = Tensor::zeros({n, d});
    std::copy(images.data.begin(), images.data.begin() + n * d, sub.data.begin());

    PurifySpec spec;
    spec.s_x = cfg.task.s_x;
    spec.sampler = sampler_of(cfg);
    std::vector<TaskResult> results = run_gap_batch(net, spec, sub, cfg.seed);

    Tensor purified = Tensor::zeros({n, d});
    for (int64_t i = 0; i < n; ++i) {
        std::copy(results[static_cast<size_t>(i)].output.data.begin(),
                  results[static_cast<size_t>(i)].output.data.end(), purified.data.begin() + i * d);
    }
    std::string csv = cfg.out_dir + "/purify_results.csv";
    std::string out_idx = cfg.out_dir + "/purified_images.idx";
    write_results_csv(csv, results);
    write_idx_unit(out_idx, purified);
    echo_results(results, o.json_lines);
    write_manifest(cfg.out_dir, "purify", cfg, {csv, out_idx});
    std::printf("gap: purified %lld samples (s_x=%g)\n", static_cast<long long>(n), spec.s_x);
    return 0;
}

int cmd_baseline(const CommonOpts& o, const std::string& cls_ckpt) {
    RunConfig cfg = load_config(o);
    fs::create_directories(cfg.out_dir);
    std::string cp = cls_ckpt.empty() ? cfg.out_dir + "/classifier.ckpt" : cls_ckpt;
    Classifier f = load_classifier_checkpoint(cp);
    WeightSet ws = weightset_from_string(cfg.task.weights);

    Dataset ev = make_split(cfg, "eval");
    TrainData td = ev.to_train_data();
    int64_t n = std::min<int64_t>(cfg.task.n_samples, td.n());
    int64_t d = td.dim();

    NormBudget budget;
    budget.epsilon = cfg.baseline.epsilon;
    budget.step_size = cfg.baseline.step_size;
    budget.n_iter = cfg.baseline.n_iter;
    const std::string& kind = cfg.baseline.attack;
    if (kind == "pgd-l2") budget.norm = NormKind::L2;
    else if (kind == "pgd-linf" || kind == "fgsm") budget.norm = NormKind::Linf;
    else throw ConfigError("baseline.attack must be fgsm, pgd-l2 or pgd-linf");

    std::vector<TaskResult> results(static_cast<size_t>(n));
    Tensor adv = Tensor::zeros({n, d});
    for (int64_t i = 0; i < n; ++i) {
        Tensor x = Tensor::zeros({d});
        std::copy(td.images.data.begin() + i * d, td.images.data.begin() + (i + 1) * d, x.data.begin());
        int y = td.labels[static_cast<size_t>(i)];
        int before = classify(f, x, ws).label;
        Tensor xadv;
        if (kind == "fgsm") {
            xadv = fgsm(f, x, y, budget.epsilon, ws);
        } else {
            Rng rng(Rng::derive(cfg.seed, static_cast<uint64_t>(i)));
            xadv = pgd_restarts(f, x, y, budget, cfg.baseline.n_restarts, rng, ws);
        }
        TaskResult& r = results[static_cast<size_t>(i)];
        r.index = static_cast<int>(i);
        r.mode = kind;
        r.y_true = y;
        r.y_pred_before = before;
        r.y_pred_after = classify(f, xadv, ws).label;
        r.success = before == y && r.y_pred_after != y;
        r.l2 = l2_distance(xadv, x);
        r.linf = linf_distance(xadv, x);
        r.seed = cfg.seed;
        std::copy(xadv.data.begin(), xadv.data.end(), adv.data.begin() + i * d);
    }
    std::string csv = cfg.out_dir + "/baseline_results.csv";
    std::string out_idx = cfg.out_dir + "/adversarial_images.idx";
    write_results_csv(csv, results);
    write_idx_unit(out_idx, adv); // u8 quantized; in-memory results keep full precision
    echo_results(results, o.json_lines);
    write_manifest(cfg.out_dir, "baseline-attack", cfg, {csv, out_idx});
    int succ = 0;
    for (const TaskResult& r : results) succ += r.success ? 1 : 0;
    std::printf("%s: %d/%lld samples flipped\n", kind.c_str(), succ, static_cast<long long>(n));
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& score_ckpt, const std::string& cls_ckpt) {
    RunConfig cfg = load_config(o);
    fs::create_directories(cfg.out_dir);
    bool needs_score = cfg.eval.defense == "gap";
    for (const std::string& a : cfg.eval.attacks) {
        if (a == "gas" || a == "gat") needs_score = true;
    }
    Classifier f = load_classifier_checkpoint(cls_ckpt.empty() ? cfg.out_dir + "/classifier.ckpt"
                                                               : cls_ckpt);
    ScoreModel score;
    std::unique_ptr<NetScore> net;
    if (needs_score) {
        score = load_score_checkpoint(score_ckpt.empty() ? cfg.out_dir + "/score.ckpt" : score_ckpt);
        net = std::make_unique<NetScore>(score, weightset_from_string(cfg.task.weights));
    }

    Dataset ev = make_split(cfg, "eval");
    TrainData td = ev.to_train_data();

    std::vector<std::string> outputs;
    std::string summary = cfg.out_dir + "/metrics_summary.csv";
    if (fs::exists(summary)) fs::remove(summary);
    for (const std::string& attack : cfg.eval.attacks) {
        BenchmarkConfig bc;
        bc.classifier = &f;
        bc.score = net.get();
        bc.eval_images = td.images;
        bc.eval_labels = td.labels;
        bc.attack = attack;
        bc.budget.epsilon = cfg.baseline.epsilon;
        bc.budget.step_size = cfg.baseline.step_size;
        bc.budget.n_iter = cfg.baseline.n_iter;
        bc.pgd_n_restarts = cfg.baseline.n_restarts;
        bc.attack_spec = attack_spec_of(cfg);
        bc.defense = cfg.eval.defense;
        bc.purify.s_x = cfg.eval.purify_s_x;
        bc.purify.sampler = sampler_of(cfg);
        bc.n_eval = cfg.eval.n_eval;
        bc.seed = cfg.seed;
        bc.weights = weightset_from_string(cfg.task.weights);
        MetricReport rep = run_benchmark(bc);
        std::string jp = cfg.out_dir + "/metrics_" + attack + ".json";
        write_metric_report(jp, rep);
        append_metric_csv(summary, rep, cfg.task.s_y,
                          attack == "gat" ? cfg.task.s_x : cfg.eval.purify_s_x);
        outputs.push_back(jp);
        std::printf("%-9s clean %.4f adv %.4f robust %.4f defended-clean %.4f\n", attack.c_str(),
                    rep.clean_acc, rep.adv_acc, rep.robust_acc, rep.defended_clean_acc);
    }
    outputs.push_back(summary);
    write_manifest(cfg.out_dir, "eval", cfg, outputs);
    return 0;
}

int cmd_gradcheck(const CommonOpts& o, int cases) {
    RunConfig cfg = load_config(o);
    GradCheckReport rep = run_gradcheck(cases, cfg.seed);
    std::printf("gradcheck: %d cases, %ld coordinates, max relative error %.3g\n", rep.cases,
                rep.coords_checked, rep.max_rel_err);
    return rep.passed(1e-4) ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"score-guided adversarial synthesis, transformation and purification"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string score_ckpt, cls_ckpt, images_idx;
    int gradcheck_cases = 120;

    CLI::App* c_gen = app.add_subcommand("gen-data", "generate synthetic datasets as IDX files");
    add_common(c_gen, o);
    CLI::App* c_ts = app.add_subcommand("train-score", "train the class-conditional score network");
    add_common(c_ts, o);
    CLI::App* c_tc = app.add_subcommand("train-classifier", "train the classifier");
    add_common(c_tc, o);
    CLI::App* c_sy = app.add_subcommand("synth", "synthesize adversarial samples (GAS)");
    add_common(c_sy, o);
    c_sy->add_option("--score-ckpt", score_ckpt, "score checkpoint path");
    c_sy->add_option("--classifier-ckpt", cls_ckpt, "classifier checkpoint path");
    CLI::App* c_tr = app.add_subcommand("transform", "transform eval images into adversarial ones (GAT)");
    add_common(c_tr, o);
    c_tr->add_option("--score-ckpt", score_ckpt, "score checkpoint path");
    c_tr->add_option("--classifier-ckpt", cls_ckpt, "classifier checkpoint path");
    CLI::App* c_pu = app.add_subcommand("purify", "purify images (GAP)");
    add_common(c_pu, o);
    c_pu->add_option("--score-ckpt", score_ckpt, "score checkpoint path");
    c_pu->add_option("--images", images_idx, "IDX file with images to purify (default: eval split)");
    CLI::App* c_ba = app.add_subcommand("baseline-attack", "run FGSM/PGD over the eval split");
    add_common(c_ba, o);
    c_ba->add_option("--classifier-ckpt", cls_ckpt, "classifier checkpoint path");
    CLI::App* c_ev = app.add_subcommand("eval", "attack/defense benchmark with metric reports");
    add_common(c_ev, o);
    c_ev->add_option("--score-ckpt", score_ckpt, "score checkpoint path");
    c_ev->add_option("--classifier-ckpt", cls_ckpt, "classifier checkpoint path");
    CLI::App* c_gc = app.add_subcommand("gradcheck", "randomized finite-difference gradient suite");
    add_common(c_gc, o);
    c_gc->add_option("--cases", gradcheck_cases, "number of random graphs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << app.help() << "\n";
        return 1;
    }

    try {
        if (c_gen->parsed()) return cmd_gen_data(o);
        if (c_ts->parsed()) return cmd_train_score(o);
        if (c_tc->parsed()) return cmd_train_classifier(o);
        if (c_sy->parsed()) return cmd_synth(o, score_ckpt, cls_ckpt);
        if (c_tr->parsed()) return cmd_transform(o, score_ckpt, cls_ckpt);
        if (c_pu->parsed()) return cmd_purify(o, score_ckpt, images_idx);
        if (c_ba->parsed()) return cmd_baseline(o, cls_ckpt);
        if (c_ev->parsed()) return cmd_eval(o, score_ckpt, cls_ckpt);
        if (c_gc->parsed()) return cmd_gradcheck(o, gradcheck_cases);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
