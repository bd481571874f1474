#pragma once

#include <cstddef>

// Double-precision array kernels behind a runtime ISA dispatcher.
//
// Every kernel has a scalar reference implementation and may have vector
// variants (AVX2+FMA on x86-64). The dispatcher picks the best available
// variant at startup; tests can pin an ISA with set_isa to compare variants
// against the scalar reference.
//
// ema_update and sgd_momentum_step are specified as exact per-element
// expression trees (multiplies and adds in the written order, no FMA
// contraction) so their results are bit-identical across ISA variants.
// Reductions (dot, reduce_sum, gemv, ...) may reassociate and fuse, so
// variants agree only to rounding.

namespace hico::kern {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);
bool isa_available(Isa isa);
Isa active_isa();
void set_isa(Isa isa);  // throws std::invalid_argument if unavailable

// Reductions.
double dot(const double* a, const double* b, std::size_t n);
double reduce_sum(const double* x, std::size_t n);
double reduce_max(const double* x, std::size_t n);  // n >= 1
double squared_norm(const double* x, std::size_t n);

// Elementwise.
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
void vscale(double alpha, double* x, std::size_t n);
void vadd(const double* a, const double* b, double* out, std::size_t n);
void vsub(const double* a, const double* b, double* out, std::size_t n);
void vmul(const double* a, const double* b, double* out, std::size_t n);
void vmax(const double* a, const double* b, double* out, std::size_t n);
void relu(const double* x, double* out, std::size_t n);
// out = grad where x > 0, else 0
void relu_backward(const double* x, const double* grad, double* out, std::size_t n);

// Optimizer steps. Per element, in this exact order:
//   g = grad[i] + weight_decay * param[i]
//   buf[i] = momentum * buf[i] + g
//   param[i] = param[i] - lr * buf[i]
void sgd_momentum_step(double* param, const double* grad, double* buf, std::size_t n,
                       double lr, double momentum, double weight_decay);
// target[i] = keep * target[i] + (1 - keep) * source[i]
void ema_update(double* target, const double* source, std::size_t n, double keep);

// Dense matrix-vector products, W row-major (rows x cols).
void gemv(const double* w, std::size_t rows, std::size_t cols, const double* x,
          const double* bias, double* y);  // y = W x (+ bias if non-null)
void gemv_accum(const double* w, std::size_t rows, std::size_t cols, const double* x,
                double* y);  // y += W x
void gemv_transposed_accum(const double* w, std::size_t rows, std::size_t cols,
                           const double* g, double* gx);  // gx += W^T g
void outer_accum(double* w, std::size_t rows, std::size_t cols, const double* g,
                 const double* x);  // W += g x^T

}  // namespace hico::kern
