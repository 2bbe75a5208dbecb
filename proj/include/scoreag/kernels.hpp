#pragma once

#include <cstddef>

// Dense numeric kernels. Every kernel exists twice: a serial reference in
// kernels::serial and an OpenMP version at kernels:: scope. The two use the
// same per-element arithmetic and the same (fixed-chunk) reduction order, so
// their outputs are bit-identical for any thread count; tests assert this.
// The top-level entry points dispatch to the parallel versions only above a
// size threshold to keep small-graph overhead low.

namespace scoreag::kernels {

// Reduction chunk: partial sums are formed per fixed-size chunk and combined
// in index order, independent of the number of threads.
inline constexpr size_t kSumChunk = 8192;

namespace serial {

void matmul(const double* a, const double* b, double* c, int m, int k, int n);
// c (m,n) += / = a^T (k,m)^T... : a is (k,m) stored row-major, result a^T b.
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
// a (m,k) times b^T where b is (n,k) row-major.
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);

void add(const double* a, const double* b, double* out, size_t n);
void sub(const double* a, const double* b, double* out, size_t n);
void mul(const double* a, const double* b, double* out, size_t n);
void scale(const double* a, double c, double* out, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n); // y += alpha*x

double sum(const double* a, size_t n);
double dot(const double* a, const double* b, size_t n);

} // namespace serial

void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);

void add(const double* a, const double* b, double* out, size_t n);
void sub(const double* a, const double* b, double* out, size_t n);
void mul(const double* a, const double* b, double* out, size_t n);
void scale(const double* a, double c, double* out, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);

double sum(const double* a, size_t n);
double dot(const double* a, const double* b, size_t n);

int max_threads();

} // namespace scoreag::kernels
