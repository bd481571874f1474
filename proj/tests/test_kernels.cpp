#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hico/kernels.hpp"
#include "hico/mat.hpp"
#include "hico/rng.hpp"

using namespace hico;
namespace k = hico::kern;

namespace {

Vec random_vec(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// sizes that exercise full vectors plus every tail remainder
const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 15, 16, 17, 31, 64, 100, 257};

struct IsaGuard {
  k::Isa saved;
  IsaGuard() : saved(k::active_isa()) {}
  ~IsaGuard() { k::set_isa(saved); }
};

}  // namespace

TEST_CASE("dispatch reports an available isa") {
  CHECK(k::isa_available(k::Isa::scalar));
  CHECK(k::isa_name(k::active_isa()) != nullptr);
}

TEST_CASE("vector variants match the scalar reference") {
  if (!k::isa_available(k::Isa::avx2)) {
    MESSAGE("avx2 unavailable; scalar-only build");
    return;
  }
  IsaGuard guard;
  Rng rng(2024);
  for (std::size_t n : kSizes) {
    Vec a = random_vec(n, rng), b = random_vec(n, rng);
    const double tol = 1e-12 * static_cast<double>(n);

    k::set_isa(k::Isa::scalar);
    const double dot_s = k::dot(a.data(), b.data(), n);
    const double sum_s = k::reduce_sum(a.data(), n);
    const double max_s = k::reduce_max(a.data(), n);
    const double nrm_s = k::squared_norm(a.data(), n);
    Vec add_s(n), sub_s(n), mul_s(n), max2_s(n), relu_s(n), rb_s(n);
    k::vadd(a.data(), b.data(), add_s.data(), n);
    k::vsub(a.data(), b.data(), sub_s.data(), n);
    k::vmul(a.data(), b.data(), mul_s.data(), n);
    k::vmax(a.data(), b.data(), max2_s.data(), n);
    k::relu(a.data(), relu_s.data(), n);
    k::relu_backward(a.data(), b.data(), rb_s.data(), n);
    Vec axpy_s = b;
    k::axpy(0.37, a.data(), axpy_s.data(), n);

    k::set_isa(k::Isa::avx2);
    CHECK(std::abs(k::dot(a.data(), b.data(), n) - dot_s) <= tol);
    CHECK(std::abs(k::reduce_sum(a.data(), n) - sum_s) <= tol);
    CHECK(k::reduce_max(a.data(), n) == max_s);
    CHECK(std::abs(k::squared_norm(a.data(), n) - nrm_s) <= tol);
    Vec out(n);
    k::vadd(a.data(), b.data(), out.data(), n);
    CHECK(out == add_s);
    k::vsub(a.data(), b.data(), out.data(), n);
    CHECK(out == sub_s);
    k::vmul(a.data(), b.data(), out.data(), n);
    CHECK(out == mul_s);
    k::vmax(a.data(), b.data(), out.data(), n);
    CHECK(out == max2_s);
    k::relu(a.data(), out.data(), n);
    CHECK(out == relu_s);
    k::relu_backward(a.data(), b.data(), out.data(), n);
    CHECK(out == rb_s);
    Vec axpy_v = b;
    k::axpy(0.37, a.data(), axpy_v.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(axpy_v[i] - axpy_s[i]) <= 1e-14);
  }
}

TEST_CASE("sgd and ema updates are bit-identical across isas") {
  if (!k::isa_available(k::Isa::avx2)) return;
  IsaGuard guard;
  Rng rng(7);
  for (std::size_t n : kSizes) {
    Vec p0 = random_vec(n, rng), g = random_vec(n, rng), buf0 = random_vec(n, rng);
    Vec k0 = random_vec(n, rng), q = random_vec(n, rng);

    Vec p_s = p0, buf_s = buf0, k_s = k0;
    k::set_isa(k::Isa::scalar);
    k::sgd_momentum_step(p_s.data(), g.data(), buf_s.data(), n, 0.01, 0.9, 1e-4);
    k::ema_update(k_s.data(), q.data(), n, 0.999);

    Vec p_v = p0, buf_v = buf0, k_v = k0;
    k::set_isa(k::Isa::avx2);
    k::sgd_momentum_step(p_v.data(), g.data(), buf_v.data(), n, 0.01, 0.9, 1e-4);
    k::ema_update(k_v.data(), q.data(), n, 0.999);

    CHECK(p_v == p_s);
    CHECK(buf_v == buf_s);
    CHECK(k_v == k_s);
  }
}

TEST_CASE("gemv family matches naive loops") {
  if (!k::isa_available(k::Isa::avx2)) return;
  IsaGuard guard;
  Rng rng(99);
  for (std::size_t rows : {1u, 3u, 8u, 17u}) {
    for (std::size_t cols : {1u, 4u, 7u, 33u, 96u}) {
      Vec w = random_vec(rows * cols, rng), x = random_vec(cols, rng), b = random_vec(rows, rng);
      Vec g = random_vec(rows, rng);
      Vec y_ref(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
        y_ref[r] = acc;
      }
      Vec gx_ref(cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gx_ref[c] += w[r * cols + c] * g[r];
      Vec w_ref = w;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) w_ref[r * cols + c] += g[r] * x[c];

      for (k::Isa isa : {k::Isa::scalar, k::Isa::avx2}) {
        k::set_isa(isa);
        Vec y(rows);
        k::gemv(w.data(), rows, cols, x.data(), b.data(), y.data());
        Vec gx(cols, 0.0);
        k::gemv_transposed_accum(w.data(), rows, cols, g.data(), gx.data());
        Vec w2 = w;
        k::outer_accum(w2.data(), rows, cols, g.data(), x.data());
        for (std::size_t i = 0; i < rows; ++i)
          CHECK(y[i] == doctest::Approx(y_ref[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < cols; ++i)
          CHECK(gx[i] == doctest::Approx(gx_ref[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < rows * cols; ++i)
          CHECK(w2[i] == doctest::Approx(w_ref[i]).epsilon(1e-12));
      }
    }
  }
}
