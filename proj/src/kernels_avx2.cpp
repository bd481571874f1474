#include "kernels_impl.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

// Built with -ffp-contract=off: FMA is used only where written explicitly, so
// ema_update and sgd_momentum_step keep the exact mul/add trees of the scalar
// reference.

namespace hico::kern::detail {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double a_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double a_reduce_sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double a_reduce_max(const double* x, std::size_t n) {
  if (n < 4) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i)
      if (x[i] > m) m = x[i];
    return m;
  }
  __m256d acc = _mm256_loadu_pd(x);
  std::size_t i = 4;
  for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double m = lanes[0];
  for (int k = 1; k < 4; ++k)
    if (lanes[k] > m) m = lanes[k];
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

double a_squared_norm(const double* x, std::size_t n) { return a_dot(x, x, n); }

void a_axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void a_vscale(double alpha, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

void a_vadd(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void a_vsub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void a_vmul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void a_vmax(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] > b[i] ? a[i] : b[i];
}

void a_relu(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void a_relu_backward(const double* x, const double* grad, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(grad + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? grad[i] : 0.0;
}

void a_sgd_momentum_step(double* param, const double* grad, double* buf, std::size_t n,
                         double lr, double momentum, double weight_decay) {
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d vmu = _mm256_set1_pd(momentum);
  const __m256d vwd = _mm256_set1_pd(weight_decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d p = _mm256_loadu_pd(param + i);
    __m256d g = _mm256_add_pd(_mm256_loadu_pd(grad + i), _mm256_mul_pd(vwd, p));
    __m256d b = _mm256_add_pd(_mm256_mul_pd(vmu, _mm256_loadu_pd(buf + i)), g);
    _mm256_storeu_pd(buf + i, b);
    _mm256_storeu_pd(param + i, _mm256_sub_pd(p, _mm256_mul_pd(vlr, b)));
  }
  for (; i < n; ++i) {
    const double g = grad[i] + weight_decay * param[i];
    buf[i] = momentum * buf[i] + g;
    param[i] = param[i] - lr * buf[i];
  }
}

void a_ema_update(double* target, const double* source, std::size_t n, double keep) {
  const __m256d vk = _mm256_set1_pd(keep);
  const __m256d vb = _mm256_set1_pd(1.0 - keep);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_mul_pd(vk, _mm256_loadu_pd(target + i));
    __m256d s = _mm256_mul_pd(vb, _mm256_loadu_pd(source + i));
    _mm256_storeu_pd(target + i, _mm256_add_pd(t, s));
  }
  const double blend = 1.0 - keep;
  for (; i < n; ++i) target[i] = keep * target[i] + blend * source[i];
}

void a_gemv(const double* w, std::size_t rows, std::size_t cols, const double* x,
            const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = a_dot(w + r * cols, x, cols);
    y[r] = bias ? acc + bias[r] : acc;
  }
}

void a_gemv_accum(const double* w, std::size_t rows, std::size_t cols, const double* x,
                  double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += a_dot(w + r * cols, x, cols);
}

void a_gemv_transposed_accum(const double* w, std::size_t rows, std::size_t cols,
                             const double* g, double* gx) {
  for (std::size_t r = 0; r < rows; ++r) a_axpy(g[r], w + r * cols, gx, cols);
}

void a_outer_accum(double* w, std::size_t rows, std::size_t cols, const double* g,
                   const double* x) {
  for (std::size_t r = 0; r < rows; ++r) a_axpy(g[r], x, w + r * cols, cols);
}

}  // namespace

const KernelTable* avx2_table() {
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
  static const KernelTable table = {
      a_dot,         a_reduce_sum, a_reduce_max,        a_squared_norm,
      a_axpy,        a_vscale,     a_vadd,              a_vsub,
      a_vmul,        a_vmax,       a_relu,              a_relu_backward,
      a_sgd_momentum_step,          a_ema_update,
      a_gemv,        a_gemv_accum, a_gemv_transposed_accum,
      a_outer_accum,
  };
  return &table;
}

}  // namespace hico::kern::detail

#else

namespace hico::kern::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace hico::kern::detail

#endif
