#include "kernels_impl.hpp"

namespace hico::kern::detail {
namespace {

double s_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double s_reduce_sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double s_reduce_max(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

double s_squared_norm(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void s_axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void s_vscale(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void s_vadd(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void s_vsub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void s_vmul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void s_vmax(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > b[i] ? a[i] : b[i];
}

void s_relu(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_backward(const double* x, const double* grad, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? grad[i] : 0.0;
}

void s_sgd_momentum_step(double* param, const double* grad, double* buf, std::size_t n,
                         double lr, double momentum, double weight_decay) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i] + weight_decay * param[i];
    buf[i] = momentum * buf[i] + g;
    param[i] = param[i] - lr * buf[i];
  }
}

void s_ema_update(double* target, const double* source, std::size_t n, double keep) {
  const double blend = 1.0 - keep;
  for (std::size_t i = 0; i < n; ++i) target[i] = keep * target[i] + blend * source[i];
}

void s_gemv(const double* w, std::size_t rows, std::size_t cols, const double* x,
            const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = bias ? bias[r] : 0.0;
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void s_gemv_accum(const double* w, std::size_t rows, std::size_t cols, const double* x,
                  double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += s_dot(w + r * cols, x, cols);
}

void s_gemv_transposed_accum(const double* w, std::size_t rows, std::size_t cols,
                             const double* g, double* gx) {
  for (std::size_t r = 0; r < rows; ++r) s_axpy(g[r], w + r * cols, gx, cols);
}

void s_outer_accum(double* w, std::size_t rows, std::size_t cols, const double* g,
                   const double* x) {
  for (std::size_t r = 0; r < rows; ++r) s_axpy(g[r], x, w + r * cols, cols);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table = {
      s_dot,         s_reduce_sum, s_reduce_max,        s_squared_norm,
      s_axpy,        s_vscale,     s_vadd,              s_vsub,
      s_vmul,        s_vmax,       s_relu,              s_relu_backward,
      s_sgd_momentum_step,          s_ema_update,
      s_gemv,        s_gemv_accum, s_gemv_transposed_accum,
      s_outer_accum,
  };
  return table;
}

}  // namespace hico::kern::detail
