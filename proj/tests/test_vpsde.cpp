#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scoreag/errors.hpp"
#include "scoreag/vpsde.hpp"
#include "testutil.hpp"

using namespace scoreag;
using namespace scoreag::testutil;

namespace {

// Composite Simpson quadrature of beta(s) on [0, t]; independent oracle for
// the closed-form integral inside alpha(t).
double simpson_beta_integral(const NoiseSchedule& s, double t, int n = 2000) {
    double h = t / n;
    double acc = s.beta(0.0) + s.beta(t);
    for (int i = 1; i < n; ++i) acc += s.beta(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

// Invert sigma2(t) = target by bisection.
double t_for_sigma2(const NoiseSchedule& s, double target) {
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (coeffs(s, mid).sigma2 < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

TEST_CASE("coeffs: no diffusion at t = 0") {
    NoiseSchedule s;
    KernelCoeffs k = coeffs(s, 0.0);
    CHECK(k.alpha == 1.0);
    CHECK(k.sigma2 == 0.0);
}

TEST_CASE("coeffs at t = 1 matches the quadrature oracle") {
    NoiseSchedule s; // beta_min=0.1, beta_max=20
    KernelCoeffs k = coeffs(s, 1.0);
    double want_alpha = std::exp(-0.5 * simpson_beta_integral(s, 1.0));
    CHECK(k.alpha == doctest::Approx(want_alpha).epsilon(1e-10));
    CHECK(k.alpha == doctest::Approx(std::exp(-5.025)).epsilon(1e-12));
    CHECK(k.sigma2 == doctest::Approx(0.999957).epsilon(1e-4));

    Rng rng(77);
    for (int i = 0; i < 10; ++i) {
        NoiseSchedule r;
        r.beta_min = rng.uniform(0.01, 1.0);
        r.beta_max = r.beta_min + rng.uniform(0.0, 30.0);
        double t = rng.uniform(0.0, 1.0);
        CHECK(coeffs(r, t).alpha ==
              doctest::Approx(std::exp(-0.5 * simpson_beta_integral(r, std::max(t, 1e-12)))).epsilon(1e-9));
    }
}

TEST_CASE("alpha is strictly decreasing in t") {
    Rng rng(78);
    for (int i = 0; i < 20; ++i) {
        NoiseSchedule s;
        s.beta_min = rng.uniform(0.01, 2.0);
        s.beta_max = s.beta_min + rng.uniform(0.0, 25.0);
        CHECK(coeffs(s, 0.25).alpha > coeffs(s, 0.75).alpha);
    }
}

TEST_CASE("alpha^2 + sigma2 == 1 to 1e-12 on a grid") {
    NoiseSchedule s;
    for (int i = 0; i <= 100; ++i) {
        KernelCoeffs k = coeffs(s, i / 100.0);
        CHECK(std::abs(k.alpha * k.alpha + k.sigma2 - 1.0) <= 1e-12);
    }
}

TEST_CASE("coeffs rejects t outside [0,1]") {
    NoiseSchedule s;
    CHECK_THROWS_AS(coeffs(s, -0.1), ContractError);
    CHECK_THROWS_AS(coeffs(s, 1.1), ContractError);
}

TEST_CASE("perturb: t = 0 returns x0 exactly") {
    NoiseSchedule s;
    Rng rng(79);
    Tensor x0 = Tensor::randn({5}, rng);
    Tensor noise = Tensor::randn({5}, rng);
    Tensor xt = perturb(x0, 0.0, noise, s);
    for (size_t i = 0; i < 5; ++i) CHECK(xt.data[i] == x0.data[i]);
}

TEST_CASE("perturb: pure scaling when x0 = 0 and sigma2 = 0.64") {
    NoiseSchedule s;
    double t = t_for_sigma2(s, 0.64);
    Tensor x0 = Tensor::zeros({2});
    Tensor noise = Tensor::from({2}, {1, -1});
    Tensor xt = perturb(x0, t, noise, s);
    CHECK(xt.data[0] == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(xt.data[1] == doctest::Approx(-0.8).epsilon(1e-9));
}

TEST_CASE("perturb: Monte Carlo moments match alpha*x0 and sigma2") {
    NoiseSchedule s;
    double t = 0.5;
    KernelCoeffs k = coeffs(s, t);
    Tensor x0 = Tensor::from({1}, {0.7});
    Rng rng(80);
    const int n = 100000;
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        Tensor noise = Tensor::randn({1}, rng);
        double v = perturb(x0, t, noise, s).data[0];
        mean += v;
        m2 += v * v;
    }
    mean /= n;
    double var = m2 / n - mean * mean;
    double se_mean = k.sigma() / std::sqrt(static_cast<double>(n));
    double se_var = k.sigma2 * std::sqrt(2.0 / (n - 1.0));
    CHECK(std::abs(mean - k.alpha * 0.7) < 3.0 * se_mean);
    CHECK(std::abs(var - k.sigma2) < 3.0 * se_var);
}

TEST_CASE("variance preservation: unit-Gaussian data stays unit-Gaussian") {
    NoiseSchedule s;
    Rng rng(81);
    for (double t : {0.1, 0.5, 0.9}) {
        const int n = 50000;
        double mean = 0.0, m2 = 0.0;
        for (int i = 0; i < n; ++i) {
            Tensor x0 = Tensor::randn({1}, rng);
            Tensor noise = Tensor::randn({1}, rng);
            double v = perturb(x0, t, noise, s).data[0];
            mean += v;
            m2 += v * v;
        }
        mean /= n;
        double var = m2 / n - mean * mean;
        CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
        CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / (n - 1.0)));
    }
}

TEST_CASE("kernel_score: zero at the kernel mean") {
    NoiseSchedule s;
    Rng rng(82);
    Tensor x0 = Tensor::randn({4}, rng);
    double t = 0.37;
    KernelCoeffs k = coeffs(s, t);
    Tensor xt = scale(x0, k.alpha);
    Tensor sc = kernel_score(xt, x0, t, s);
    for (double v : sc.data) CHECK(v == 0.0);
}

TEST_CASE("kernel_score: Gaussian score arithmetic") {
    NoiseSchedule s;
    double t = t_for_sigma2(s, 0.25);
    Tensor x0 = Tensor::zeros({1});
    Tensor xt = Tensor::from({1}, {1.0});
    CHECK(kernel_score(xt, x0, t, s).data[0] == doctest::Approx(-4.0).epsilon(1e-9));
}

TEST_CASE("kernel_score matches finite differences of the log density") {
    NoiseSchedule s;
    Rng rng(83);
    for (int rep = 0; rep < 20; ++rep) {
        double t = rng.uniform(0.05, 1.0);
        KernelCoeffs k = coeffs(s, t);
        Tensor x0 = Tensor::randn({3}, rng);
        Tensor xt = Tensor::randn({3}, rng);
        auto logp = [&](const Tensor& x) {
            double acc = 0.0;
            for (size_t i = 0; i < x.data.size(); ++i) {
                double d = x.data[i] - k.alpha * x0.data[i];
                acc -= d * d / (2.0 * k.sigma2);
            }
            return acc;
        };
        Tensor want = finite_diff(logp, xt, 1e-6);
        Tensor got = kernel_score(xt, x0, t, s);
        CHECK(max_rel_err(got, want) < 1e-6);
    }
}

TEST_CASE("kernel_score: degenerate kernel at t = 0") {
    NoiseSchedule s;
    Tensor x = Tensor::zeros({1});
    CHECK_THROWS_AS(kernel_score(x, x, 0.0, s), ContractError);
}

TEST_CASE("schedule validation") {
    NoiseSchedule bad;
    bad.beta_min = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValueError);
    bad.beta_min = 5.0;
    bad.beta_max = 1.0;
    CHECK_THROWS_AS(bad.validate(), ValueError);
}
