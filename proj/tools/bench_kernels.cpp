// Benchmark comparing the serial reference kernels against the OpenMP
// versions, plus a batched score-network forward/backward as an end-to-end
// case. Verifies bitwise equality of serial and parallel results while
// timing them.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "scoreag/graph.hpp"
#include "scoreag/kernels.hpp"
#include "scoreag/models.hpp"
#include "scoreag/rng.hpp"

using namespace scoreag;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm up
    auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void bench_matmul(int m, int k, int n, Rng& rng) {
    std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.normal();
    std::vector<double> cs(static_cast<size_t>(m) * n), cp(static_cast<size_t>(m) * n);

    int reps = std::max(1, static_cast<int>(2e8 / (static_cast<double>(m) * k * n)));
    double ts = time_ms([&] { kernels::serial::matmul(a.data(), b.data(), cs.data(), m, k, n); }, reps);
    double tp = time_ms([&] { kernels::matmul(a.data(), b.data(), cp.data(), m, k, n); }, reps);
    std::printf("matmul %4dx%4dx%4d   serial %8.3f ms   omp %8.3f ms   speedup %4.2fx   %s\n", m, k,
                n, ts, tp, ts / tp, bits_equal(cs, cp) ? "bitwise-equal" : "MISMATCH");
}

void bench_sum(size_t n, Rng& rng) {
    std::vector<double> a(n);
    for (double& v : a) v = rng.normal();
    double rs = 0, rp = 0;
    double ts = time_ms([&] { rs = kernels::serial::sum(a.data(), n); }, 50);
    double tp = time_ms([&] { rp = kernels::sum(a.data(), n); }, 50);
    std::printf("sum    n=%-10zu     serial %8.3f ms   omp %8.3f ms   speedup %4.2fx   %s\n", n, ts,
                tp, ts / tp, rs == rp ? "bitwise-equal" : "MISMATCH");
}

void bench_score_step(int batch, Rng& rng) {
    ScoreNetConfig cfg;
    cfg.input_dim = 256;
    cfg.n_classes = 10;
    ScoreModel model = ScoreModel::init(cfg, NoiseSchedule{}, 7);
    Tensor x = Tensor::randn({batch, cfg.input_dim}, rng);
    std::vector<double> ts(static_cast<size_t>(batch), 0.5);
    std::vector<int> ys(static_cast<size_t>(batch), 1);

    auto run = [&] {
        Graph g;
        std::vector<NodeRef> wn;
        for (size_t i = 0; i < model.params.size(); ++i) {
            wn.push_back(g.input(model.names[i], model.params[i], true));
        }
        NodeRef xin = g.constant(x, "x");
        NodeRef out = model.build_with_nodes(g, xin, ts, ys, wn);
        NodeRef loss = g.mean(g.mul(out, out));
        g.backward(loss);
    };
    double t = time_ms(run, 20);
    std::printf("score fwd+bwd batch=%-4d                  omp %8.3f ms  (%d threads)\n", batch, t,
                kernels::max_threads());
}

} // namespace

int main() {
    Rng rng(42);
    std::printf("threads: %d\n", kernels::max_threads());
    bench_matmul(64, 320, 256, rng);
    bench_matmul(256, 256, 256, rng);
    bench_matmul(512, 512, 512, rng);
    bench_sum(1 << 16, rng);
    bench_sum(1 << 22, rng);
    bench_score_step(64, rng);
    bench_score_step(256, rng);
    return 0;
}
