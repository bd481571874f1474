#pragma once

#include <cstddef>

// Internal kernel function table shared between ISA translation units.

namespace hico::kern::detail {

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*reduce_sum)(const double*, std::size_t);
  double (*reduce_max)(const double*, std::size_t);
  double (*squared_norm)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*vscale)(double, double*, std::size_t);
  void (*vadd)(const double*, const double*, double*, std::size_t);
  void (*vsub)(const double*, const double*, double*, std::size_t);
  void (*vmul)(const double*, const double*, double*, std::size_t);
  void (*vmax)(const double*, const double*, double*, std::size_t);
  void (*relu)(const double*, double*, std::size_t);
  void (*relu_backward)(const double*, const double*, double*, std::size_t);
  void (*sgd_momentum_step)(double*, const double*, double*, std::size_t, double, double, double);
  void (*ema_update)(double*, const double*, std::size_t, double);
  void (*gemv)(const double*, std::size_t, std::size_t, const double*, const double*, double*);
  void (*gemv_accum)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*gemv_transposed_accum)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*outer_accum)(double*, std::size_t, std::size_t, const double*, const double*);
};

const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when unsupported at build or run time

}  // namespace hico::kern::detail
