#pragma once

#include <cstddef>

namespace macn::kern {

/// Level-1 kernel table. One scalar reference implementation and, on
/// x86-64 machines with AVX2+FMA, a vectorized variant. The active table
/// is picked once at startup; MACN_LAB_KERNELS=scalar|avx2 overrides.
struct Ops {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*vmul)(const double* a, const double* b, double* out, std::size_t n);
  double (*vsum)(const double* a, std::size_t n);
};

const Ops& scalar_ops();

/// Returns nullptr when the build or the CPU lacks AVX2.
const Ops* avx2_ops();

const Ops& active();

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void vmul(const double* a, const double* b, double* out, std::size_t n) {
  active().vmul(a, b, out, n);
}
inline double vsum(const double* a, std::size_t n) {
  return active().vsum(a, n);
}

// Level-2 helpers layered on the dispatched level-1 kernels. W is row-major.

/// y = W x  (rows x cols)
inline void matvec(const double* W, const double* x, double* y,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(W + r * cols, x, cols);
}

/// out += W^T g
inline void matvec_t_acc(const double* W, const double* g, double* out,
                         std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    if (g[r] != 0.0) axpy(g[r], W + r * cols, out, cols);
}

/// W += a x^T  (outer-product accumulate)
inline void ger_acc(const double* a, const double* x, double* W,
                    std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    if (a[r] != 0.0) axpy(a[r], x, W + r * cols, cols);
}

}  // namespace macn::kern
