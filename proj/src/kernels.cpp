#include "sfmsfv/kernels.hpp"

#include <omp.h>

#include <vector>

namespace sfv {

int max_workers() { return omp_get_num_procs(); }

void for_each_index(Backend backend, int workers, int count, const std::function<void(int)>& body) {
  if (backend == Backend::serial || workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
#pragma omp parallel for schedule(static) num_threads(workers)
  for (int i = 0; i < count; ++i) body(i);
}

namespace kernels {

CsrView view(const SpMat& a) {
  CsrView v;
  v.rows = static_cast<int>(a.rows());
  v.ptr = a.outerIndexPtr();
  v.idx = a.innerIndexPtr();
  v.val = a.valuePtr();
  return v;
}

namespace {

inline double row_dot(const CsrView& a, int i, const double* x) {
  double s = 0.0;
  for (int k = a.ptr[i]; k < a.ptr[i + 1]; ++k) s += a.val[k] * x[a.idx[k]];
  return s;
}

}  // namespace

namespace serial {

void spmv(const CsrView& a, const double* x, double* y) {
  for (int i = 0; i < a.rows; ++i) y[i] = row_dot(a, i, x);
}

void leapfrog(const CsrView& a, const double* cur, const double* prev, double dt2, double* next) {
  for (int i = 0; i < a.rows; ++i) next[i] = 2.0 * cur[i] - prev[i] + dt2 * row_dot(a, i, cur);
}

}  // namespace serial

namespace omp {

void spmv(const CsrView& a, const double* x, double* y, int workers) {
#pragma omp parallel for schedule(static) num_threads(workers)
  for (int i = 0; i < a.rows; ++i) y[i] = row_dot(a, i, x);
}

void leapfrog(const CsrView& a, const double* cur, const double* prev, double dt2, double* next,
              int workers) {
#pragma omp parallel for schedule(static) num_threads(workers)
  for (int i = 0; i < a.rows; ++i) next[i] = 2.0 * cur[i] - prev[i] + dt2 * row_dot(a, i, cur);
}

}  // namespace omp

void spmv(Backend b, int workers, const CsrView& a, const double* x, double* y) {
  if (b == Backend::serial || workers <= 1)
    serial::spmv(a, x, y);
  else
    omp::spmv(a, x, y, workers);
}

void leapfrog(Backend b, int workers, const CsrView& a, const double* cur, const double* prev, double dt2,
              double* next) {
  if (b == Backend::serial || workers <= 1)
    serial::leapfrog(a, cur, prev, dt2, next);
  else
    omp::leapfrog(a, cur, prev, dt2, next, workers);
}

double squared_norm(Backend b, int workers, const double* x, int n) {
  // Fixed chunking keeps the summation order independent of the thread count.
  constexpr int kChunk = 4096;
  const int chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> part(chunks, 0.0);
  for_each_index(b, workers, chunks, [&](int c) {
    const int lo = c * kChunk, hi = std::min(n, lo + kChunk);
    double s = 0.0;
    for (int i = lo; i < hi; ++i) s += x[i] * x[i];
    part[c] = s;
  });
  double s = 0.0;
  for (double p : part) s += p;
  return s;
}

}  // namespace kernels
}  // namespace sfv
