#pragma once

// Dense double-precision inner loops behind all tensor math. Every entry
// point exists as a plain scalar reference kernel plus SIMD variants
// (AVX2+FMA on x86-64, NEON on aarch64). One table is selected at startup
// from CPU capabilities; the SEQPOOL_KERNELS environment variable
// ("scalar", "avx2", "neon", "auto") overrides the choice. Variants are
// equivalence-tested against the scalar reference, not guaranteed
// bit-identical to it: SIMD reductions reassociate sums and may use FMA.
// Within one process the selected table never changes, so repeated runs on
// the same machine are bit-reproducible.

#include <cstddef>

namespace seqpool::kernels {

struct KernelTable {
  const char* name;

  // y = a * x, a is rows x cols row-major, x has cols entries.
  void (*matvec)(const double* a, const double* x, std::size_t rows, std::size_t cols, double* y);
  // acc += a^T * g, g has rows entries, acc has cols entries.
  void (*matvec_t_acc)(const double* a, const double* g, std::size_t rows, std::size_t cols,
                       double* acc);
  // a_acc += g * x^T (outer product), g has rows entries, x has cols entries.
  void (*outer_acc)(const double* g, const double* x, std::size_t rows, std::size_t cols,
                    double* a_acc);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, std::size_t n, double* y);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum over (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  void (*add)(const double* a, const double* b, std::size_t n, double* out);
  void (*sub)(const double* a, const double* b, std::size_t n, double* out);
  void (*scale)(const double* x, double alpha, std::size_t n, double* out);
  // acc += a .* b
  void (*mul_acc)(const double* a, const double* b, std::size_t n, double* acc);
  // acc += (1 - y.*y) .* g   (tanh backward, y holds tanh outputs)
  void (*tanh_backward_acc)(const double* y, const double* g, std::size_t n, double* acc);
};

/// Table chosen for this process. Stable for the process lifetime.
const KernelTable& active();

/// Scalar reference kernels, always available.
const KernelTable& scalar_table();

/// AVX2+FMA kernels, or nullptr when the CPU or build does not support them.
const KernelTable* avx2_table();

/// NEON kernels, or nullptr off aarch64.
const KernelTable* neon_table();

}  // namespace seqpool::kernels
