#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scoreag/errors.hpp"
#include "scoreag/gradcheck.hpp"
#include "scoreag/graph.hpp"
#include "scoreag/optim.hpp"
#include "testutil.hpp"

using namespace scoreag;
using namespace scoreag::testutil;

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor::from({2}, {1.0, std::nan("")}), ValueError);
    CHECK_THROWS_AS(Tensor::from({2}, {1.0, INFINITY}), ValueError);
    CHECK_THROWS_AS(Tensor::from({3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({0}), ShapeError);
    Tensor s = Tensor::scalar(4.0);
    CHECK(s.rank() == 0);
    CHECK(s.numel() == 1);
}

TEST_CASE("forward: affine identity") {
    Graph g;
    NodeRef x = g.constant(Tensor::from({2}, {1, 2}));
    NodeRef w = g.constant(Tensor::from({2, 2}, {1, 0, 0, 1}));
    NodeRef b = g.constant(Tensor::zeros({2}));
    NodeRef y = g.affine(x, w, b);
    CHECK(g.value(y).data[0] == 1.0);
    CHECK(g.value(y).data[1] == 2.0);
}

TEST_CASE("forward: uniform-logit cross entropy is ln 2") {
    Graph g;
    NodeRef logits = g.constant(Tensor::from({2}, {0, 0}));
    NodeRef ce = g.softmax_xent(logits, {0});
    CHECK(g.value(ce).data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("forward: matmul hand arithmetic") {
    Graph g;
    NodeRef a = g.constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
    NodeRef b = g.constant(Tensor::from({2, 1}, {1, 1}));
    NodeRef c = g.matmul(a, b);
    CHECK(g.value(c).data[0] == 3.0);
    CHECK(g.value(c).data[1] == 7.0);
}

TEST_CASE("forward is deterministic: identical inputs, identical bits") {
    auto build = [](Graph& g) {
        Rng rng(33);
        NodeRef x = g.input("x", Tensor::randn({4, 4}, rng), true);
        NodeRef w = g.input("w", Tensor::randn({4, 3}, rng), true);
        NodeRef b = g.input("b", Tensor::randn({3}, rng), true);
        NodeRef h = g.nonlin(g.affine(x, w, b), Nonlin::Silu);
        return g.sum(g.mul(h, h));
    };
    Graph g1, g2;
    NodeRef o1 = build(g1), o2 = build(g2);
    CHECK(g1.value(o1).data[0] == g2.value(o2).data[0]);
    g1.backward(o1);
    g2.backward(o2);
    CHECK(bits_equal(g1.grad_of({0}), g2.grad_of({0})));
    CHECK(bits_equal(g1.grad_of({1}), g2.grad_of({1})));
}

TEST_CASE("backward: d/dx x*x at 3 is 6") {
    Graph g;
    NodeRef x = g.input("x", Tensor::scalar(3.0), true);
    NodeRef y = g.sum(g.mul(x, x));
    g.backward(y);
    CHECK(g.grad_of(x).data[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward: relu subgradient with relu'(0) = 0") {
    Graph g;
    NodeRef x = g.input("x", Tensor::from({2}, {-1, 2}), true);
    NodeRef y = g.sum(g.relu(x));
    g.backward(y);
    CHECK(g.grad_of(x).data[0] == 0.0);
    CHECK(g.grad_of(x).data[1] == 1.0);

    Graph g2;
    NodeRef x2 = g2.input("x", Tensor::from({1}, {0.0}), true);
    NodeRef y2 = g2.sum(g2.relu(x2));
    g2.backward(y2);
    CHECK(g2.grad_of(x2).data[0] == 0.0);
}

TEST_CASE("backward: unused inputs get zero gradients") {
    Graph g;
    NodeRef x = g.input("x", Tensor::from({2}, {1, 2}), true);
    NodeRef unused = g.input("unused", Tensor::from({3}, {1, 2, 3}), true);
    NodeRef y = g.sum(g.mul(x, x));
    g.backward(y);
    Tensor gu = g.grad_of(unused);
    for (double v : gu.data) CHECK(v == 0.0);
}

TEST_CASE("backward: non-scalar seed rejected") {
    Graph g;
    NodeRef x = g.input("x", Tensor::from({2}, {1, 2}), true);
    NodeRef y = g.mul(x, x);
    CHECK_THROWS_AS(g.backward(y), ContractError);
}

TEST_CASE("shape errors name the failing node") {
    Graph g;
    NodeRef a = g.constant(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}), "lhs");
    NodeRef b = g.constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
    try {
        g.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("(2,3)") != std::string::npos);
    }
}

TEST_CASE("non-finite intermediates raise overflow errors naming the node") {
    Graph g;
    NodeRef x = g.constant(Tensor::full({2}, 1e200));
    CHECK_THROWS_AS(g.mul(x, x), OverflowError);
}

TEST_CASE("linearity of backward: grad(a*f + b*g) = a*grad(f) + b*grad(g)") {
    Rng rng(5);
    Tensor x0 = Tensor::randn({6}, rng);
    double a = 1.7, b = -0.6;

    Graph gf;
    NodeRef xf = gf.input("x", x0, true);
    gf.backward(gf.sum(gf.mul(xf, xf)));
    Tensor gradf = gf.grad_of(xf);

    Graph gg;
    NodeRef xg = gg.input("x", x0, true);
    gg.backward(gg.sum(gg.nonlin(xg, Nonlin::Tanh)));
    Tensor gradg = gg.grad_of(xg);

    Graph gc;
    NodeRef xc = gc.input("x", x0, true);
    NodeRef f = gc.sum(gc.mul(xc, xc));
    NodeRef gq = gc.sum(gc.nonlin(xc, Nonlin::Tanh));
    NodeRef combined = gc.add(gc.scale(f, a), gc.scale(gq, b));
    gc.backward(combined);
    Tensor grad_combined = gc.grad_of(xc);

    for (size_t i = 0; i < x0.data.size(); ++i) {
        double want = a * gradf.data[i] + b * gradg.data[i];
        CHECK(std::abs(grad_combined.data[i] - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("backward can be re-seeded on the same graph") {
    Graph g;
    NodeRef x = g.input("x", Tensor::from({2}, {1.5, -0.5}), true);
    NodeRef f = g.sum(g.mul(x, x));
    NodeRef h = g.mean(g.mul(x, x));
    g.backward(f);
    Tensor g1 = g.grad_of(x);
    g.backward(h);
    Tensor g2 = g.grad_of(x);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(g2.data[i] == doctest::Approx(g1.data[i] / 2.0).epsilon(1e-15));
    }
}

TEST_CASE("randomized composed-graph gradient checks") {
    GradCheckReport rep = run_gradcheck(30, 20250810);
    CAPTURE(rep.max_rel_err);
    CHECK(rep.cases == 30);
    CHECK(rep.coords_checked > 100);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("sgd_nesterov_step: zero gradient and decay is a no-op") {
    std::vector<Tensor> p = {Tensor::from({1}, {1.0})};
    std::vector<Tensor> g = {Tensor::zeros({1})};
    std::vector<Tensor> v = {Tensor::zeros({1})};
    sgd_nesterov_step(p, g, v, 0.1, 0.9, 0.0);
    CHECK(p[0].data[0] == 1.0);
}

TEST_CASE("sgd_nesterov_step: plain SGD when momentum is zero") {
    std::vector<Tensor> p = {Tensor::from({1}, {1.0})};
    std::vector<Tensor> g = {Tensor::from({1}, {1.0})};
    std::vector<Tensor> v = {Tensor::zeros({1})};
    sgd_nesterov_step(p, g, v, 0.1, 0.0, 0.0);
    CHECK(p[0].data[0] == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("sgd_nesterov_step matches a hand-rolled scalar recurrence") {
    // scalar reference: g' = g + wd*p; v = mu*v + g'; p -= lr*(g' + mu*v)
    double lr = 0.1, mu = 0.9, wd = 5e-4, grad = 1.0;
    double pr = 1.0, vr = 0.0;
    std::vector<Tensor> p = {Tensor::from({1}, {1.0})};
    std::vector<Tensor> v = {Tensor::zeros({1})};
    std::vector<Tensor> g = {Tensor::from({1}, {grad})};
    for (int step = 0; step < 5; ++step) {
        double ge = grad + wd * pr;
        vr = mu * vr + ge;
        pr -= lr * (ge + mu * vr);
        sgd_nesterov_step(p, g, v, lr, mu, wd);
        CHECK(p[0].data[0] == doctest::Approx(pr).epsilon(1e-14));
    }
}

TEST_CASE("sgd_nesterov_step: shape mismatch rejected") {
    std::vector<Tensor> p = {Tensor::zeros({2})};
    std::vector<Tensor> g = {Tensor::zeros({3})};
    std::vector<Tensor> v = {Tensor::zeros({2})};
    CHECK_THROWS_AS(sgd_nesterov_step(p, g, v, 0.1, 0.9, 0.0), ShapeError);
}

TEST_CASE("ema_update basics and convergence") {
    Tensor shadow = Tensor::zeros({1});
    Tensor params = Tensor::from({1}, {1.0});
    ema_update(shadow, params, 0.0);
    CHECK(shadow.data[0] == 1.0);

    shadow = Tensor::zeros({1});
    ema_update(shadow, params, 0.995);
    CHECK(shadow.data[0] == doctest::Approx(0.005).epsilon(1e-15));

    shadow = Tensor::zeros({1});
    for (int i = 0; i < 3000; ++i) ema_update(shadow, params, 0.995);
    CHECK(std::abs(shadow.data[0] - 1.0) < 1e-6);

    Tensor bad = Tensor::zeros({2});
    CHECK_THROWS_AS(ema_update(bad, params, 0.5), ShapeError);
}

TEST_CASE("cosine_lr anneals from lr0 toward zero and restarts per cycle") {
    CHECK(cosine_lr(0.2, 0, 100, 1) == doctest::Approx(0.2));
    CHECK(cosine_lr(0.2, 50, 100, 1) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(cosine_lr(0.2, 99, 100, 1) < 0.001);
    // two cycles: step 50 restarts
    CHECK(cosine_lr(0.2, 50, 100, 2) == doctest::Approx(0.2));
}
