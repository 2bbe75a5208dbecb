#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "scoreag/dataio.hpp"
#include "scoreag/errors.hpp"
#include "scoreag/models.hpp"
#include "scoreag/score_fn.hpp"
#include "testutil.hpp"

using namespace scoreag;
using namespace scoreag::testutil;

namespace {

ScoreNetConfig small_score_cfg(int64_t d, int k) {
    ScoreNetConfig sc;
    sc.input_dim = d;
    sc.n_classes = k;
    sc.time_embed_dim = 16;
    sc.class_embed_dim = 8;
    sc.hidden = {64, 64};
    return sc;
}

TrainConfig quick_train(int epochs, uint64_t seed, double lr = 0.05) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = 128;
    tc.lr = lr;
    tc.seed = seed;
    return tc;
}

ClassifierConfig blob_classifier_cfg() {
    ClassifierConfig cc;
    cc.input_shape = {1, 1, 2};
    cc.n_classes = 2;
    cc.kind = "mlp";
    cc.mlp_hidden = {32};
    cc.feature_dim = 16;
    return cc;
}

} // namespace

TEST_CASE("dsm_loss: analytic kernel score gives zero loss on point-mass data") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.3, 0.7});
    PointMassScore oracle(c, sched);
    TrainData td = point_mass_train_data(c, 64);
    Rng rng(4);
    double loss = dsm_loss(oracle, td.images, td.labels, "sigma2", rng);
    CHECK(loss < 1e-18);
}

TEST_CASE("dsm_loss: zero model on a point mass at 0 has expected loss d") {
    NoiseSchedule sched;
    ZeroScore zero(2, sched);
    Tensor x0 = Tensor::zeros({2000, 2});
    std::vector<int> y(2000, 1);
    Rng rng(5);
    // with lambda = sigma2 the loss reduces to E||z||^2 = d
    double loss = dsm_loss(zero, x0, y, "sigma2", rng);
    double se = std::sqrt(2.0 * 2.0 / 2000.0); // var of ||z||^2 per sample is 2d
    CHECK(std::abs(loss - 2.0) < 4.0 * se);
}

TEST_CASE("dsm_loss: non-negative and rejects empty batches") {
    NoiseSchedule sched;
    GaussianScore s(3, sched);
    Rng rng(6);
    Tensor x0 = Tensor::randn({16, 3}, rng);
    std::vector<int> y(16, 1);
    CHECK(dsm_loss(s, x0, y, "one", rng) >= 0.0);
    Tensor empty = Tensor::zeros({1, 3});
    std::vector<int> none;
    CHECK_THROWS_AS(dsm_loss(s, empty, none, "sigma2", rng), ContractError);
}

TEST_CASE("train_score learns the unit-Gaussian score (= -x) within 15%") {
    NoiseSchedule sched;
    TrainData td = gaussian_train_data(4000, 2, 7);
    ScoreModel m = ScoreModel::init(small_score_cfg(2, 1), sched, 1);
    TrainTrace tr = train_score(m, td, quick_train(60, 3));
    CHECK(tr.epoch_loss.back() < tr.epoch_loss.front());

    NetScore net(m, WeightSet::Ema);
    Rng erng(11);
    double acc = 0.0;
    const int n = 200;
    for (int i = 0; i < n; ++i) {
        double r = erng.uniform(0.5, 2.0);
        double a = erng.uniform(0.0, 6.2831853);
        Tensor x = Tensor::from({2}, {r * std::cos(a), r * std::sin(a)});
        double t = erng.uniform(sched.t_eps, 1.0);
        Tensor s = net.score(x, t, 1);
        acc += std::hypot(s.data[0] + x.data[0], s.data[1] + x.data[1]) / r;
    }
    double mean_rel = acc / n;
    CAPTURE(mean_rel);
    CHECK(mean_rel < 0.15);
}

TEST_CASE("train_score learns the point-mass kernel score within 20%") {
    NoiseSchedule sched;
    Tensor c = Tensor::from({2}, {0.3, 0.7});
    TrainData td = point_mass_train_data(c, 2000);
    ScoreModel m = ScoreModel::init(small_score_cfg(2, 1), sched, 3);
    TrainTrace tr = train_score(m, td, quick_train(60, 4));
    CHECK(tr.epoch_loss.back() < tr.epoch_loss.front());

    NetScore net(m, WeightSet::Ema);
    Rng erng(12);
    double acc = 0.0;
    int used = 0;
    for (int i = 0; i < 100; ++i) {
        double t = erng.uniform(sched.t_eps, 1.0);
        Tensor z = Tensor::randn({2}, erng);
        Tensor xt = perturb(c, t, z, sched);
        Tensor want = kernel_score(xt, c, t, sched);
        Tensor got = net.score(xt, t, 1);
        double w = std::hypot(want.data[0], want.data[1]);
        if (w < 0.05) continue; // at the kernel mean relative error is undefined
        acc += std::hypot(got.data[0] - want.data[0], got.data[1] - want.data[1]) / w;
        ++used;
    }
    double mean_rel = acc / used;
    CAPTURE(mean_rel);
    CHECK(used >= 95);
    CHECK(mean_rel < 0.20);
}

TEST_CASE("train_score is reproducible bit-for-bit") {
    TrainData td = gaussian_train_data(256, 2, 8);
    NoiseSchedule sched;
    ScoreModel a = ScoreModel::init(small_score_cfg(2, 1), sched, 9);
    ScoreModel b = ScoreModel::init(small_score_cfg(2, 1), sched, 9);
    train_score(a, td, quick_train(3, 10));
    train_score(b, td, quick_train(3, 10));
    CHECK(bits_equal(a.params, b.params));
    CHECK(bits_equal(a.ema, b.ema));
}

TEST_CASE("score output is finite on [-3,3]^d for t in [t_eps, 1]") {
    TrainData td = gaussian_train_data(512, 2, 13);
    NoiseSchedule sched;
    ScoreModel m = ScoreModel::init(small_score_cfg(2, 1), sched, 14);
    train_score(m, td, quick_train(5, 15));
    NetScore net(m, WeightSet::Live);
    for (double t : {sched.t_eps, 0.25, 0.5, 1.0}) {
        for (double a : {-3.0, -1.0, 0.0, 2.0, 3.0}) {
            for (double b : {-3.0, 0.5, 3.0}) {
                Tensor s = net.score(Tensor::from({2}, {a, b}), t, 1);
                CHECK(s.all_finite());
            }
        }
    }
}

TEST_CASE("unconditional evaluation ignores the per-class embedding rows") {
    NoiseSchedule sched;
    ScoreNetConfig sc = small_score_cfg(2, 4);
    ScoreModel m = ScoreModel::init(sc, sched, 16);
    // the output layer is zero-initialized; randomize it so the score
    // actually depends on the embeddings
    Rng wrng(99);
    for (size_t i = m.params.size() - 2; i < m.params.size(); ++i) {
        for (double& v : m.params[i].data) v = 0.1 * wrng.normal();
    }
    NetScore net(m, WeightSet::Live);
    Tensor x = Tensor::from({2}, {0.4, -0.2});
    Tensor before = net.score(x, 0.5, 0);
    Tensor cond_before = net.score(x, 0.5, 1);
    // permute the non-reserved class embedding rows
    Tensor& embed = m.params[0];
    int64_t e = sc.class_embed_dim;
    for (int64_t j = 0; j < e; ++j) {
        std::swap(embed.data[static_cast<size_t>(0 * e + j)], embed.data[static_cast<size_t>(3 * e + j)]);
        std::swap(embed.data[static_cast<size_t>(1 * e + j)], embed.data[static_cast<size_t>(2 * e + j)]);
    }
    Tensor after = net.score(x, 0.5, 0);
    CHECK(bits_equal(before, after));
    // while a conditional evaluation changes
    Tensor cond_after = net.score(x, 0.5, 1);
    CHECK_FALSE(bits_equal(cond_before, cond_after));
}

TEST_CASE("ema tracks live params when training continues with frozen weights") {
    TrainData td = gaussian_train_data(256, 2, 17);
    NoiseSchedule sched;
    ScoreModel m = ScoreModel::init(small_score_cfg(2, 1), sched, 18);
    train_score(m, td, quick_train(3, 19));
    double gap_before = 0.0;
    for (size_t i = 0; i < m.params.size(); ++i) {
        gap_before = std::max(gap_before, linf_distance(m.params[i], m.ema[i]));
    }
    // near-zero lr freezes the params; the ema keeps decaying toward them
    TrainConfig frozen = quick_train(20, 20, 1e-12);
    train_score(m, td, frozen);
    double gap_after = 0.0;
    for (size_t i = 0; i < m.params.size(); ++i) {
        gap_after = std::max(gap_after, linf_distance(m.params[i], m.ema[i]));
    }
    CHECK(gap_after < gap_before);
}

TEST_CASE("train_classifier reaches 99% on separable blobs") {
    Rng rng(21);
    Dataset ds = gen_blobs_2d(2, 400, 6.0, rng);
    TrainData td = ds.to_train_data();
    Classifier f = Classifier::init(blob_classifier_cfg(), 22);
    TrainTrace tr = train_classifier(f, td, quick_train(20, 23, 0.1));
    CHECK(tr.epoch_acc.back() >= 0.99);
    CHECK(tr.epoch_loss.back() < tr.epoch_loss.front());
}

TEST_CASE("constant-input data trains to majority-class accuracy") {
    TrainData td;
    int n = 100;
    td.images = Tensor::full({n, 2}, 0.5);
    td.labels.assign(static_cast<size_t>(n), 1);
    for (int i = 70; i < n; ++i) td.labels[static_cast<size_t>(i)] = 2;
    td.n_classes = 2;
    td.sample_shape = {2};
    Classifier f = Classifier::init(blob_classifier_cfg(), 24);
    TrainTrace tr = train_classifier(f, td, quick_train(30, 25, 0.05));
    CHECK(tr.epoch_acc.back() == doctest::Approx(0.7));
}

TEST_CASE("classify: argmax label, tie toward the lowest index, softmax sums to 1") {
    // zero head weights give all-zero logits: a K-way tie resolved to label 1
    ClassifierConfig cc = blob_classifier_cfg();
    Classifier f = Classifier::init(cc, 26);
    Tensor& head_w = f.params[f.params.size() - 2];
    Tensor& head_b = f.params[f.params.size() - 1];
    std::fill(head_w.data.begin(), head_w.data.end(), 0.0);
    std::fill(head_b.data.begin(), head_b.data.end(), 0.0);
    f.ema = f.params;
    Classification c = classify(f, Tensor::from({2}, {0.5, 0.5}));
    CHECK(c.label == 1);
    CHECK(c.logits[0] == c.logits[1]);

    // explicit tie-breaking on crafted logits via the softmax helper
    std::vector<double> probs(2);
    softmax_rows(c.logits.data(), probs.data(), 1, 2);
    CHECK(std::abs(probs[0] + probs[1] - 1.0) <= 1e-9);
}

TEST_CASE("classify clamps out-of-range inputs and flags them") {
    Classifier f = Classifier::init(blob_classifier_cfg(), 27);
    Classification ok = classify(f, Tensor::from({2}, {0.2, 0.8}));
    CHECK_FALSE(ok.clamped_input);
    Classification warned = classify(f, Tensor::from({2}, {1.7, -0.3}));
    CHECK(warned.clamped_input);
    Classification clamped = classify(f, Tensor::from({2}, {1.0, 0.0}));
    CHECK(warned.logits == clamped.logits);
}

TEST_CASE("classifier features have the configured dimension") {
    ClassifierConfig cc = blob_classifier_cfg();
    Classifier f = Classifier::init(cc, 28);
    Rng rng(29);
    Tensor batch = Tensor::randn({20, 2}, rng);
    Tensor feats = classifier_features(f, clamp01(batch));
    CHECK(feats.shape == std::vector<int64_t>{20, cc.feature_dim});
}

TEST_CASE("training aborts with diagnostics when the loss blows up") {
    TrainData td = gaussian_train_data(256, 2, 30);
    for (double& v : td.images.data) v *= 100.0; // wildly unnormalized data
    NoiseSchedule sched;
    ScoreModel m = ScoreModel::init(small_score_cfg(2, 1), sched, 31);
    TrainConfig tc = quick_train(5, 32, 2000.0); // absurd lr forces divergence
    try {
        train_score(m, td, tc);
        FAIL("expected DivergedError");
    } catch (const DivergedError& e) {
        std::string msg = e.what();
        CHECK(msg.find("step") != std::string::npos);
        CHECK(msg.find("lr") != std::string::npos);
    }
}

TEST_CASE("checkpoint round-trip: save -> load -> save is byte-identical") {
    namespace fs = std::filesystem;
    fs::create_directories("/tmp/scoreag_test");
    NoiseSchedule sched;
    TrainData td = gaussian_train_data(256, 2, 33);
    ScoreModel m = ScoreModel::init(small_score_cfg(2, 1), sched, 34);
    train_score(m, td, quick_train(2, 35));

    std::string p1 = "/tmp/scoreag_test/score_a.ckpt";
    std::string p2 = "/tmp/scoreag_test/score_b.ckpt";
    save_score_checkpoint(p1, m);
    ScoreModel loaded = load_score_checkpoint(p1);
    CHECK(bits_equal(loaded.params, m.params));
    CHECK(bits_equal(loaded.ema, m.ema));
    CHECK(loaded.schedule.beta_max == m.schedule.beta_max);
    save_score_checkpoint(p2, loaded);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(checkpoint_kind(p1) == "score");

    Classifier f = Classifier::init(blob_classifier_cfg(), 36);
    std::string pc = "/tmp/scoreag_test/cls.ckpt";
    save_classifier_checkpoint(pc, f);
    Classifier fl = load_classifier_checkpoint(pc);
    CHECK(bits_equal(fl.params, f.params));
    CHECK(checkpoint_kind(pc) == "classifier");
    CHECK_THROWS_AS(load_score_checkpoint(pc), IoError);
    CHECK_THROWS_AS(load_classifier_checkpoint("/tmp/scoreag_test/nope.ckpt"), IoError);
}

TEST_CASE("dsm loss value from the training graph matches the direct formula") {
    NoiseSchedule sched;
    TrainData td = gaussian_train_data(64, 2, 37);
    ScoreModel m = ScoreModel::init(small_score_cfg(2, 1), sched, 38);
    // one train step decreases nothing to check here; instead compare the
    // op-level loss against an independent recomputation through score()
    NetScore net(m, WeightSet::Live);
    Rng r1(39), r2(39);
    double via_op = dsm_loss(net, td.images, td.labels, "sigma2", r1);
    // replicate the draw order: per sample t then noise
    double manual = 0.0;
    int64_t n = td.images.shape[0];
    for (int64_t i = 0; i < n; ++i) {
        Tensor x0 = Tensor::from({2}, {td.images.data[static_cast<size_t>(2 * i)],
                                       td.images.data[static_cast<size_t>(2 * i + 1)]});
        double t = r2.uniform(sched.t_eps, 1.0);
        Tensor z = Tensor::randn({2}, r2);
        Tensor xt = perturb(x0, t, z, sched);
        Tensor target = kernel_score(xt, x0, t, sched);
        Tensor sc = net.score(xt, t, 1);
        double lam = coeffs(sched, t).sigma2;
        double e = 0.0;
        for (int j = 0; j < 2; ++j) {
            double d = sc.data[static_cast<size_t>(j)] - target.data[static_cast<size_t>(j)];
            e += d * d;
        }
        manual += lam * e;
    }
    manual /= static_cast<double>(n);
    CHECK(via_op == doctest::Approx(manual).epsilon(1e-12));
}
