#include "seqpool/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>

#include "seqpool/errors.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define SEQPOOL_X86 1
#include <immintrin.h>
#else
#define SEQPOOL_X86 0
#endif

#if defined(__aarch64__)
#define SEQPOOL_AARCH64 1
#include <arm_neon.h>
#else
#define SEQPOOL_AARCH64 0
#endif

namespace seqpool::kernels {

// ---------------------------------------------------------------------------
// Scalar reference kernels
// ---------------------------------------------------------------------------

namespace scalar {

void matvec(const double* a, const double* x, std::size_t rows, std::size_t cols, double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = a + i * cols;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

void matvec_t_acc(const double* a, const double* g, std::size_t rows, std::size_t cols,
                  double* acc) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = a + i * cols;
    const double gi = g[i];
    for (std::size_t j = 0; j < cols; ++j) acc[j] += gi * row[j];
  }
}

void outer_acc(const double* g, const double* x, std::size_t rows, std::size_t cols,
               double* a_acc) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* row = a_acc + i * cols;
    const double gi = g[i];
    for (std::size_t j = 0; j < cols; ++j) row[j] += gi * x[j];
  }
}

void axpy(double alpha, const double* x, std::size_t n, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void add(const double* a, const double* b, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void scale(const double* x, double alpha, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void mul_acc(const double* a, const double* b, std::size_t n, double* acc) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += a[i] * b[i];
}

void tanh_backward_acc(const double* y, const double* g, std::size_t n, double* acc) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += (1.0 - y[i] * y[i]) * g[i];
}

}  // namespace scalar

const KernelTable& scalar_table() {
  static const KernelTable table = {
      "scalar",
      scalar::matvec,
      scalar::matvec_t_acc,
      scalar::outer_acc,
      scalar::axpy,
      scalar::dot,
      scalar::squared_distance,
      scalar::add,
      scalar::sub,
      scalar::scale,
      scalar::mul_acc,
      scalar::tanh_backward_acc,
  };
  return table;
}

// ---------------------------------------------------------------------------
// AVX2 + FMA kernels (function-level target attributes, no global -mavx2)
// ---------------------------------------------------------------------------

#if SEQPOOL_X86

namespace avx2 {

#define SEQPOOL_AVX2_FN __attribute__((target("avx2,fma")))

SEQPOOL_AVX2_FN static inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

SEQPOOL_AVX2_FN double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

SEQPOOL_AVX2_FN void matvec(const double* a, const double* x, std::size_t rows, std::size_t cols,
                            double* y) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = dot(a + i * cols, x, cols);
}

SEQPOOL_AVX2_FN void axpy(double alpha, const double* x, std::size_t n, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, r);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

SEQPOOL_AVX2_FN void matvec_t_acc(const double* a, const double* g, std::size_t rows,
                                  std::size_t cols, double* acc) {
  for (std::size_t i = 0; i < rows; ++i) axpy(g[i], a + i * cols, cols, acc);
}

SEQPOOL_AVX2_FN void outer_acc(const double* g, const double* x, std::size_t rows,
                               std::size_t cols, double* a_acc) {
  for (std::size_t i = 0; i < rows; ++i) axpy(g[i], x, cols, a_acc + i * cols);
}

SEQPOOL_AVX2_FN double squared_distance(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

SEQPOOL_AVX2_FN void add(const double* a, const double* b, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

SEQPOOL_AVX2_FN void sub(const double* a, const double* b, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

SEQPOOL_AVX2_FN void scale(const double* x, double alpha, std::size_t n, double* out) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

SEQPOOL_AVX2_FN void mul_acc(const double* a, const double* b, std::size_t n, double* acc) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r =
        _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), _mm256_loadu_pd(acc + i));
    _mm256_storeu_pd(acc + i, r);
  }
  for (; i < n; ++i) acc[i] += a[i] * b[i];
}

SEQPOOL_AVX2_FN void tanh_backward_acc(const double* y, const double* g, std::size_t n,
                                       double* acc) {
  const __m256d ones = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d u = _mm256_fnmadd_pd(vy, vy, ones);  // 1 - y*y
    __m256d r = _mm256_fmadd_pd(u, _mm256_loadu_pd(g + i), _mm256_loadu_pd(acc + i));
    _mm256_storeu_pd(acc + i, r);
  }
  for (; i < n; ++i) acc[i] += (1.0 - y[i] * y[i]) * g[i];
}

#undef SEQPOOL_AVX2_FN

}  // namespace avx2

#endif  // SEQPOOL_X86

const KernelTable* avx2_table() {
#if SEQPOOL_X86
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
  static const KernelTable table = {
      "avx2",
      avx2::matvec,
      avx2::matvec_t_acc,
      avx2::outer_acc,
      avx2::axpy,
      avx2::dot,
      avx2::squared_distance,
      avx2::add,
      avx2::sub,
      avx2::scale,
      avx2::mul_acc,
      avx2::tanh_backward_acc,
  };
  return &table;
#else
  return nullptr;
#endif
}

// ---------------------------------------------------------------------------
// NEON kernels (aarch64 has NEON unconditionally)
// ---------------------------------------------------------------------------

#if SEQPOOL_AARCH64

namespace neon {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void matvec(const double* a, const double* x, std::size_t rows, std::size_t cols, double* y) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = dot(a + i * cols, x, cols);
}

void axpy(double alpha, const double* x, std::size_t n, double* y) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_t_acc(const double* a, const double* g, std::size_t rows, std::size_t cols,
                  double* acc) {
  for (std::size_t i = 0; i < rows; ++i) axpy(g[i], a + i * cols, cols, acc);
}

void outer_acc(const double* g, const double* x, std::size_t rows, std::size_t cols,
               double* a_acc) {
  for (std::size_t i = 0; i < rows; ++i) axpy(g[i], x, cols, a_acc + i * cols);
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc = vfmaq_f64(acc, d, d);
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void add(const double* a, const double* b, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void scale(const double* x, double alpha, std::size_t n, double* out) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void mul_acc(const double* a, const double* b, std::size_t n, double* acc) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(acc + i, vfmaq_f64(vld1q_f64(acc + i), vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) acc[i] += a[i] * b[i];
}

void tanh_backward_acc(const double* y, const double* g, std::size_t n, double* acc) {
  const float64x2_t ones = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t vy = vld1q_f64(y + i);
    float64x2_t u = vfmsq_f64(ones, vy, vy);  // 1 - y*y
    vst1q_f64(acc + i, vfmaq_f64(vld1q_f64(acc + i), u, vld1q_f64(g + i)));
  }
  for (; i < n; ++i) acc[i] += (1.0 - y[i] * y[i]) * g[i];
}

}  // namespace neon

#endif  // SEQPOOL_AARCH64

const KernelTable* neon_table() {
#if SEQPOOL_AARCH64
  static const KernelTable table = {
      "neon",
      neon::matvec,
      neon::matvec_t_acc,
      neon::outer_acc,
      neon::axpy,
      neon::dot,
      neon::squared_distance,
      neon::add,
      neon::sub,
      neon::scale,
      neon::mul_acc,
      neon::tanh_backward_acc,
  };
  return &table;
#else
  return nullptr;
#endif
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

namespace {

const KernelTable& pick() {
  const char* env = std::getenv("SEQPOOL_KERNELS");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return scalar_table();
  if (want == "avx2") {
    if (const KernelTable* t = avx2_table()) return *t;
    throw ConfigError("SEQPOOL_KERNELS=avx2 but AVX2+FMA is unavailable on this CPU");
  }
  if (want == "neon") {
    if (const KernelTable* t = neon_table()) return *t;
    throw ConfigError("SEQPOOL_KERNELS=neon but NEON is unavailable on this CPU");
  }
  if (want != "auto")
    throw ConfigError("unknown SEQPOOL_KERNELS value '" + want +
                      "' (expected scalar, avx2, neon or auto)");
  if (const KernelTable* t = avx2_table()) return *t;
  if (const KernelTable* t = neon_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = pick();
  return table;
}

}  // namespace seqpool::kernels
