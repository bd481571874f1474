#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "hico/kernels.hpp"
#include "hico/nn.hpp"

using namespace hico;
using hico_test::random_mat;
using hico_test::random_vec;

TEST_CASE("linear_map contract cases and oracle") {
  Rng rng(1);
  // zero weight -> bias
  Mat w0(4, 3);
  Vec b{1.0, -2.0, 3.0, 0.5};
  Vec x{9.0, -7.0, 2.0};
  CHECK(linear_map(w0, b, x) == b);

  // identity
  Mat eye(3, 3);
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Vec zero3(3, 0.0);
  CHECK(linear_map(eye, zero3, x) == x);

  // random vs naive dot-product oracle
  Mat w = random_mat(5, 7, rng);
  Vec bias = random_vec(5, rng);
  Vec in = random_vec(7, rng);
  Vec y = linear_map(w, bias, in);
  for (std::size_t r = 0; r < 5; ++r) {
    double acc = bias[r];
    for (std::size_t c = 0; c < 7; ++c) acc += w.at(r, c) * in[c];
    CHECK(std::abs(y[r] - acc) <= 1e-12);
  }
  CHECK_THROWS_AS(linear_map(w, bias, Vec(3, 0.0)), std::invalid_argument);
}

TEST_CASE("conv1d contract cases") {
  const std::size_t win = 3, wout = 2;
  Rng rng(2);
  Mat seq = random_mat(6, win, rng);
  // zero kernel -> every token equals the bias
  Vec k0(Conv1dLayer::taps * wout * win, 0.0);
  Vec bias{0.25, -1.0};
  Mat y0 = conv1d(seq, wout, win, k0, bias);
  for (std::size_t t = 0; t < seq.rows; ++t) {
    CHECK(y0.at(t, 0) == 0.25);
    CHECK(y0.at(t, 1) == -1.0);
  }
  // delta kernel (center tap identity) -> output equals input
  Vec kd(Conv1dLayer::taps * win * win, 0.0);
  for (std::size_t c = 0; c < win; ++c) kd[2 * win * win + c * win + c] = 1.0;
  Mat yd = conv1d(seq, win, win, kd, Vec(win, 0.0));
  for (std::size_t i = 0; i < seq.size(); ++i) CHECK(yd.v[i] == seq.v[i]);
}

TEST_CASE("conv1d matches the sliding-window brute force oracle") {
  Rng rng(3);
  const std::size_t win = 4, wout = 3, n = 9;
  Mat seq = random_mat(n, win, rng);
  Vec kernel = random_vec(Conv1dLayer::taps * wout * win, rng);
  Vec bias = random_vec(wout, rng);
  Mat y = conv1d(seq, wout, win, kernel, bias);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t o = 0; o < wout; ++o) {
      double acc = bias[o];
      for (std::size_t tap = 0; tap < Conv1dLayer::taps; ++tap) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + tap) - 2;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
        for (std::size_t c = 0; c < win; ++c)
          acc += kernel[(tap * wout + o) * win + c] * seq.at(static_cast<std::size_t>(src), c);
      }
      CHECK(std::abs(y.at(t, o) - acc) <= 1e-10);
    }
}

TEST_CASE("layer_norm_op") {
  // constant vector centers to zero
  Vec c(5, 3.7), gain(5, 1.0), shift(5, 0.0);
  for (double v : layer_norm_op(c, gain, shift)) CHECK(std::abs(v) <= 1e-6);

  // (-1, 1) is already unit variance up to eps
  Vec pm{-1.0, 1.0};
  Vec y = layer_norm_op(pm, Vec(2, 1.0), Vec(2, 0.0), 1e-12);
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-6));

  // random case against a direct scalar oracle
  Rng rng(4);
  Vec x = random_vec(9, rng), g = random_vec(9, rng), s = random_vec(9, rng);
  Vec out = layer_norm_op(x, g, s, 1e-5);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= 9.0;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= 9.0;
  for (std::size_t i = 0; i < 9; ++i) {
    const double expect = (x[i] - mean) / std::sqrt(var + 1e-5) * g[i] + s[i];
    CHECK(std::abs(out[i] - expect) <= 1e-10);
  }
}

TEST_CASE("maxpool1d") {
  Mat seq(4, 1);
  seq.at(0, 0) = 1.0;
  seq.at(1, 0) = 3.0;
  seq.at(2, 0) = 2.0;
  seq.at(3, 0) = 5.0;
  Mat out = maxpool1d(seq);
  REQUIRE(out.rows == 2);
  CHECK(out.at(0, 0) == 3.0);
  CHECK(out.at(1, 0) == 5.0);

  Rng rng(5);
  Mat odd = random_mat(25, 4, rng);
  CHECK(maxpool1d(odd).rows == 12);

  Mat one = random_mat(1, 4, rng);
  CHECK_THROWS_AS(maxpool1d(one), std::invalid_argument);
}

TEST_CASE("pool over all rows is an elementwise max and order-invariant") {
  Mat two(2, 2);
  two.at(0, 0) = 1.0;
  two.at(1, 1) = 1.0;
  Vec pooled = pool_max_over_rows(two);
  CHECK(pooled == Vec{1.0, 1.0});

  Rng rng(6);
  Mat seq = random_mat(7, 5, rng);
  Vec base = pool_max_over_rows(seq);
  Mat rev = reverse_rows(seq);
  CHECK(pool_max_over_rows(rev) == base);
}

TEST_CASE("s2s output shape is (length, C) for all three kinds") {
  for (S2sKind kind : {S2sKind::gru, S2sKind::lstm, S2sKind::transformer}) {
    ParamStore store;
    S2s enc = S2s::create(store, "s2s", kind, 512);
    Rng rng(7);
    store.init_all(rng);
    Mat x = random_mat(8, 512, rng, 0.5);
    Mat y = s2s_encode(x, enc, store);
    CHECK(y.rows == 8);
    CHECK(y.cols == 512);
    for (double v : y.v) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(parse_s2s_kind("mamba"), std::invalid_argument);
}

TEST_CASE("transformer with zeroed sublayer outputs reduces to the normalized residual path") {
  ParamStore store;
  S2s enc = S2s::create(store, "tf", S2sKind::transformer, 16);
  Rng rng(8);
  store.init_all(rng);
  // zero the attention projection and the second feed-forward layer
  for (const char* name : {"tf.o.w", "tf.o.b", "tf.ff2.w", "tf.ff2.b"}) {
    const std::size_t id = store.find(name);
    REQUIRE(id != ParamStore::npos);
    std::fill(store[id].v.begin(), store[id].v.end(), 0.0);
  }
  Mat x = random_mat(5, 16, rng);
  Mat y = enc.forward(store, x, nullptr);

  Mat pos = sinusoidal_positions(5, 16);
  const Vec& gain = store[store.find("tf.lnf.gain")].v;
  const Vec& shift = store[store.find("tf.lnf.shift")].v;
  for (std::size_t r = 0; r < 5; ++r) {
    Vec u(16);
    for (std::size_t c2 = 0; c2 < 16; ++c2) u[c2] = x.at(r, c2) + pos.at(r, c2);
    Vec expect = layer_norm_op(u, gain, shift, 1e-5);
    for (std::size_t c2 = 0; c2 < 16; ++c2)
      CHECK(y.at(r, c2) == doctest::Approx(expect[c2]).epsilon(1e-10));
  }
}

TEST_CASE("param store enumeration is stable and init is seed-deterministic") {
  auto build = [] {
    ParamStore store;
    Linear::create(store, "a", 3, 4);
    LayerNormLayer::create(store, "n", 4);
    Conv1dLayer::create(store, "c", 4, 4);
    return store;
  };
  ParamStore s1 = build(), s2 = build();
  REQUIRE(s1.count() == s2.count());
  for (std::size_t i = 0; i < s1.count(); ++i) CHECK(s1[i].name == s2[i].name);
  Rng r1(42), r2(42);
  s1.init_all(r1);
  s2.init_all(r2);
  for (std::size_t i = 0; i < s1.count(); ++i) CHECK(s1[i].v == s2[i].v);
  CHECK_THROWS_AS(s1.add("a.w", {1}, InitSpec::zeros()), std::invalid_argument);
}
