#include "scoreag/kernels.hpp"

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace scoreag::kernels {

namespace {

// Below these sizes the OpenMP fork/join costs more than it saves.
constexpr long kMatmulParThreshold = 64 * 1024; // m*k*n flops
constexpr size_t kElemParThreshold = 1 << 15;

inline double chunked_sum(const double* a, size_t n, bool parallel) {
    if (n == 0) return 0.0;
    size_t nchunks = (n + kSumChunk - 1) / kSumChunk;
    if (nchunks == 1) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += a[i];
        return s;
    }
    std::vector<double> partial(nchunks, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
    for (long long ci = 0; ci < static_cast<long long>(nchunks); ++ci) {
        size_t lo = static_cast<size_t>(ci) * kSumChunk;
        size_t hi = lo + kSumChunk < n ? lo + kSumChunk : n;
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += a[i];
        partial[static_cast<size_t>(ci)] = s;
    }
    double total = 0.0;
    for (size_t ci = 0; ci < nchunks; ++ci) total += partial[ci];
    return total;
}

inline double chunked_dot(const double* a, const double* b, size_t n, bool parallel) {
    if (n == 0) return 0.0;
    size_t nchunks = (n + kSumChunk - 1) / kSumChunk;
    if (nchunks == 1) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
        return s;
    }
    std::vector<double> partial(nchunks, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
    for (long long ci = 0; ci < static_cast<long long>(nchunks); ++ci) {
        size_t lo = static_cast<size_t>(ci) * kSumChunk;
        size_t hi = lo + kSumChunk < n ? lo + kSumChunk : n;
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += a[i] * b[i];
        partial[static_cast<size_t>(ci)] = s;
    }
    double total = 0.0;
    for (size_t ci = 0; ci < nchunks; ++ci) total += partial[ci];
    return total;
}

inline void matmul_row(const double* a, const double* b, double* c, int k, int n, int i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
    for (int p = 0; p < k; ++p) {
        double av = arow[p];
        const double* brow = b + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

// c[i,j] = sum_p a[p,i] * b[p,j]; a is (k,m), b is (k,n), c is (m,n)
inline void matmul_tn_row(const double* a, const double* b, double* c, int m, int k, int n, int i) {
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
    for (int p = 0; p < k; ++p) {
        double av = a[static_cast<size_t>(p) * m + i];
        const double* brow = b + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

// c[i,j] = sum_p a[i,p] * b[j,p]; a is (m,k), b is (n,k), c is (m,n)
inline void matmul_nt_row(const double* a, const double* b, double* c, int k, int n, int i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
        const double* brow = b + static_cast<size_t>(j) * k;
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
        crow[j] = s;
    }
}

} // namespace

namespace serial {

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, k, n, i);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) matmul_tn_row(a, b, c, m, k, n, i);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) matmul_nt_row(a, b, c, k, n, i);
}

void add(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const double* a, double c, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum(const double* a, size_t n) { return chunked_sum(a, n, false); }

double dot(const double* a, const double* b, size_t n) { return chunked_dot(a, b, n, false); }

} // namespace serial

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    long flops = static_cast<long>(m) * k * n;
    if (flops < kMatmulParThreshold || m == 1) {
        serial::matmul(a, b, c, m, k, n);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, k, n, i);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    long flops = static_cast<long>(m) * k * n;
    if (flops < kMatmulParThreshold || m == 1) {
        serial::matmul_tn(a, b, c, m, k, n);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < m; ++i) matmul_tn_row(a, b, c, m, k, n, i);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    long flops = static_cast<long>(m) * k * n;
    if (flops < kMatmulParThreshold || m == 1) {
        serial::matmul_nt(a, b, c, m, k, n);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < m; ++i) matmul_nt_row(a, b, c, k, n, i);
}

#ifdef _OPENMP
#define SCOREAG_ELEMWISE_LOOP(expr)                                        \
    if (n < kElemParThreshold) {                                           \
        for (size_t i = 0; i < n; ++i) expr;                               \
    } else {                                                               \
        _Pragma("omp parallel for schedule(static)")                       \
        for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {     \
            size_t i = static_cast<size_t>(ii);                            \
            expr;                                                          \
        }                                                                  \
    }
#else
#define SCOREAG_ELEMWISE_LOOP(expr)                                        \
    for (size_t i = 0; i < n; ++i) expr;
#endif

void add(const double* a, const double* b, double* out, size_t n) {
    SCOREAG_ELEMWISE_LOOP(out[i] = a[i] + b[i])
}

void sub(const double* a, const double* b, double* out, size_t n) {
    SCOREAG_ELEMWISE_LOOP(out[i] = a[i] - b[i])
}

void mul(const double* a, const double* b, double* out, size_t n) {
    SCOREAG_ELEMWISE_LOOP(out[i] = a[i] * b[i])
}

void scale(const double* a, double c, double* out, size_t n) {
    SCOREAG_ELEMWISE_LOOP(out[i] = a[i] * c)
}

void axpy(double alpha, const double* x, double* y, size_t n) {
    SCOREAG_ELEMWISE_LOOP(y[i] += alpha * x[i])
}

#undef SCOREAG_ELEMWISE_LOOP

double sum(const double* a, size_t n) { return chunked_sum(a, n, n >= kElemParThreshold); }

double dot(const double* a, const double* b, size_t n) {
    return chunked_dot(a, b, n, n >= kElemParThreshold);
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace scoreag::kernels
