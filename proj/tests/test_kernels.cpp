#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "scoreag/kernels.hpp"
#include "scoreag/rng.hpp"

using namespace scoreag;

namespace {

std::vector<double> randvec(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

bool bytes_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

TEST_CASE("matmul: parallel matches serial bitwise") {
    for (auto [m, k, n] : {std::tuple{3, 5, 7}, {64, 320, 256}, {129, 257, 63}, {1, 9, 4}}) {
        auto a = randvec(static_cast<size_t>(m) * k, 1);
        auto b = randvec(static_cast<size_t>(k) * n, 2);
        std::vector<double> cs(static_cast<size_t>(m) * n), cp(cs.size());
        kernels::serial::matmul(a.data(), b.data(), cs.data(), m, k, n);
        kernels::matmul(a.data(), b.data(), cp.data(), m, k, n);
        CHECK(bytes_equal(cs, cp));
    }
}

TEST_CASE("matmul_tn / matmul_nt agree with explicit transposes") {
    int m = 7, k = 11, n = 5;
    auto a = randvec(static_cast<size_t>(k) * m, 3);  // (k,m) for tn
    auto b = randvec(static_cast<size_t>(k) * n, 4);  // (k,n)
    std::vector<double> at(static_cast<size_t>(m) * k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < m; ++j) at[static_cast<size_t>(j) * k + i] = a[static_cast<size_t>(i) * m + j];
    }
    std::vector<double> want(static_cast<size_t>(m) * n), got(want.size());
    kernels::serial::matmul(at.data(), b.data(), want.data(), m, k, n);
    kernels::matmul_tn(a.data(), b.data(), got.data(), m, k, n);
    for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    auto c = randvec(static_cast<size_t>(m) * k, 5);  // (m,k)
    auto d = randvec(static_cast<size_t>(n) * k, 6);  // (n,k) for nt
    std::vector<double> dt(static_cast<size_t>(k) * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) dt[static_cast<size_t>(j) * n + i] = d[static_cast<size_t>(i) * k + j];
    }
    std::vector<double> want2(static_cast<size_t>(m) * n), got2(want2.size());
    kernels::serial::matmul(c.data(), dt.data(), want2.data(), m, k, n);
    kernels::matmul_nt(c.data(), d.data(), got2.data(), m, k, n);
    for (size_t i = 0; i < want2.size(); ++i) CHECK(got2[i] == doctest::Approx(want2[i]).epsilon(1e-12));
}

TEST_CASE("elementwise kernels: parallel matches serial bitwise") {
    size_t n = (1u << 16) + 37; // crosses the parallel threshold
    auto a = randvec(n, 7);
    auto b = randvec(n, 8);
    std::vector<double> s(n), p(n);
    kernels::serial::add(a.data(), b.data(), s.data(), n);
    kernels::add(a.data(), b.data(), p.data(), n);
    CHECK(bytes_equal(s, p));
    kernels::serial::mul(a.data(), b.data(), s.data(), n);
    kernels::mul(a.data(), b.data(), p.data(), n);
    CHECK(bytes_equal(s, p));
    kernels::serial::scale(a.data(), 3.25, s.data(), n);
    kernels::scale(a.data(), 3.25, p.data(), n);
    CHECK(bytes_equal(s, p));
}

TEST_CASE("sum and dot: fixed-chunk reduction is thread-count independent") {
    size_t n = (1u << 20) + 11;
    auto a = randvec(n, 9);
    auto b = randvec(n, 10);
    double serial_sum = kernels::serial::sum(a.data(), n);
    double serial_dot = kernels::serial::dot(a.data(), b.data(), n);
    CHECK(kernels::sum(a.data(), n) == serial_sum);
    CHECK(kernels::dot(a.data(), b.data(), n) == serial_dot);
#ifdef _OPENMP
    int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    double one_thread = kernels::sum(a.data(), n);
    omp_set_num_threads(saved);
    CHECK(one_thread == serial_sum);
#endif
}

TEST_CASE("matmul results are identical across thread counts") {
#ifdef _OPENMP
    int m = 96, k = 96, n = 96;
    auto a = randvec(static_cast<size_t>(m) * k, 11);
    auto b = randvec(static_cast<size_t>(k) * n, 12);
    std::vector<double> c1(static_cast<size_t>(m) * n), c2(c1.size());
    int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
    omp_set_num_threads(saved);
    kernels::matmul(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(bytes_equal(c1, c2));
#endif
}
