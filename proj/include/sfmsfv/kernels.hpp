#pragma once

#include <functional>

#include "sfmsfv/common.hpp"

namespace sfv {

enum class Backend { serial, openmp };

// Run body(i) for i in [0, count). The OpenMP variant uses a static schedule;
// bodies must write disjoint data so the result is independent of threads.
void for_each_index(Backend backend, int workers, int count, const std::function<void(int)>& body);

// Worker count used when the caller asks for "max".
int max_workers();

namespace kernels {

// Symmetric sparse matrix (column-major storage read as rows).
struct CsrView {
  int rows = 0;
  const int* ptr = nullptr;
  const int* idx = nullptr;
  const double* val = nullptr;
};

CsrView view(const SpMat& symmetric);

namespace serial {
void spmv(const CsrView& a, const double* x, double* y);
// next = 2 cur - prev + dt2 * (A cur)
void leapfrog(const CsrView& a, const double* cur, const double* prev, double dt2, double* next);
}  // namespace serial

namespace omp {
void spmv(const CsrView& a, const double* x, double* y, int workers);
void leapfrog(const CsrView& a, const double* cur, const double* prev, double dt2, double* next,
              int workers);
}  // namespace omp

void spmv(Backend b, int workers, const CsrView& a, const double* x, double* y);
void leapfrog(Backend b, int workers, const CsrView& a, const double* cur, const double* prev, double dt2,
              double* next);

// Sum of squares with a fixed reduction order (blocked, then serial combine).
double squared_norm(Backend b, int workers, const double* x, int n);

}  // namespace kernels
}  // namespace sfv
