#include "hico/kernels.hpp"

#include <stdexcept>

#include "kernels_impl.hpp"

namespace hico::kern {
namespace {

using detail::KernelTable;

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar: return &detail::scalar_table();
    case Isa::avx2: return detail::avx2_table();
  }
  return nullptr;
}

struct Dispatch {
  const KernelTable* table;
  Isa isa;
  Dispatch() {
    if (const KernelTable* avx2 = detail::avx2_table()) {
      table = avx2;
      isa = Isa::avx2;
    } else {
      table = &detail::scalar_table();
      isa = Isa::scalar;
    }
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "?";
}

bool isa_available(Isa isa) { return table_for(isa) != nullptr; }

Isa active_isa() { return dispatch().isa; }

void set_isa(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (!t) throw std::invalid_argument(std::string("kernel ISA not available: ") + isa_name(isa));
  dispatch().table = t;
  dispatch().isa = isa;
}

double dot(const double* a, const double* b, std::size_t n) {
  return dispatch().table->dot(a, b, n);
}
double reduce_sum(const double* x, std::size_t n) { return dispatch().table->reduce_sum(x, n); }
double reduce_max(const double* x, std::size_t n) { return dispatch().table->reduce_max(x, n); }
double squared_norm(const double* x, std::size_t n) {
  return dispatch().table->squared_norm(x, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  dispatch().table->axpy(alpha, x, y, n);
}
void vscale(double alpha, double* x, std::size_t n) { dispatch().table->vscale(alpha, x, n); }
void vadd(const double* a, const double* b, double* out, std::size_t n) {
  dispatch().table->vadd(a, b, out, n);
}
void vsub(const double* a, const double* b, double* out, std::size_t n) {
  dispatch().table->vsub(a, b, out, n);
}
void vmul(const double* a, const double* b, double* out, std::size_t n) {
  dispatch().table->vmul(a, b, out, n);
}
void vmax(const double* a, const double* b, double* out, std::size_t n) {
  dispatch().table->vmax(a, b, out, n);
}
void relu(const double* x, double* out, std::size_t n) { dispatch().table->relu(x, out, n); }
void relu_backward(const double* x, const double* grad, double* out, std::size_t n) {
  dispatch().table->relu_backward(x, grad, out, n);
}
void sgd_momentum_step(double* param, const double* grad, double* buf, std::size_t n, double lr,
                       double momentum, double weight_decay) {
  dispatch().table->sgd_momentum_step(param, grad, buf, n, lr, momentum, weight_decay);
}
void ema_update(double* target, const double* source, std::size_t n, double keep) {
  dispatch().table->ema_update(target, source, n, keep);
}
void gemv(const double* w, std::size_t rows, std::size_t cols, const double* x,
          const double* bias, double* y) {
  dispatch().table->gemv(w, rows, cols, x, bias, y);
}
void gemv_accum(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  dispatch().table->gemv_accum(w, rows, cols, x, y);
}
void gemv_transposed_accum(const double* w, std::size_t rows, std::size_t cols, const double* g,
                           double* gx) {
  dispatch().table->gemv_transposed_accum(w, rows, cols, g, gx);
}
void outer_accum(double* w, std::size_t rows, std::size_t cols, const double* g, const double* x) {
  dispatch().table->outer_accum(w, rows, cols, g, x);
}

}  // namespace hico::kern
