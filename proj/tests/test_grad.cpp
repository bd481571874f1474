#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "grad_check.hpp"
#include "hico/contrast.hpp"
#include "hico/encoder.hpp"
#include "hico/kernels.hpp"

// Finite-difference checks for every differentiable building block. Each case
// wires a module, drives it with a fixed random input, reduces the output to
// a scalar with a fixed random coefficient vector, and compares the analytic
// parameter gradients against central differences.

using namespace hico;
using hico_test::compare_gradients;
using hico_test::random_mat;
using hico_test::random_vec;

namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("linear gradients") {
  ParamStore store;
  Linear lin = Linear::create(store, "lin", 5, 4);
  Rng rng(11);
  store.init_all(rng);
  Mat x = random_mat(3, 5, rng);
  Mat coeff = random_mat(3, 4, rng);
  auto loss = [&] {
    Mat y = lin.forward(store, x);
    return kern::dot(y.v.data(), coeff.v.data(), y.size());
  };
  ParamStore grads = store.zeros_like();
  lin.backward(store, grads, x, coeff);
  auto rep = compare_gradients(store, grads, loss);
  CHECK_MESSAGE(rep.max_rel < kTol, rep.worst, " rel=", rep.max_rel);
}

TEST_CASE("conv1d gradients") {
  ParamStore store;
  Conv1dLayer conv = Conv1dLayer::create(store, "conv", 4, 3);
  Rng rng(12);
  store.init_all(rng);
  Mat x = random_mat(7, 4, rng);
  Mat coeff = random_mat(7, 3, rng);
  auto loss = [&] {
    Mat y = conv.forward(store, x);
    return kern::dot(y.v.data(), coeff.v.data(), y.size());
  };
  ParamStore grads = store.zeros_like();
  conv.backward(store, grads, x, coeff);
  auto rep = compare_gradients(store, grads, loss);
  CHECK_MESSAGE(rep.max_rel < kTol, rep.worst, " rel=", rep.max_rel);
}

TEST_CASE("layer norm gradients, including the input path") {
  // layer norm sits behind a linear layer so its input gradient is exercised
  ParamStore store;
  Linear lin = Linear::create(store, "lin", 4, 6);
  LayerNormLayer ln = LayerNormLayer::create(store, "ln", 6);
  Rng rng(13);
  store.init_all(rng);
  Mat x = random_mat(3, 4, rng);
  Mat coeff = random_mat(3, 6, rng);
  LayerNormLayer::Cache cache;
  auto loss = [&] {
    Mat h = lin.forward(store, x);
    Mat y = ln.forward(store, h, nullptr);
    return kern::dot(y.v.data(), coeff.v.data(), y.size());
  };
  ParamStore grads = store.zeros_like();
  Mat h = lin.forward(store, x);
  ln.forward(store, h, &cache);
  Mat gh = ln.backward(store, grads, cache, coeff);
  lin.backward(store, grads, x, gh);
  auto rep = compare_gradients(store, grads, loss);
  CHECK_MESSAGE(rep.max_rel < kTol, rep.worst, " rel=", rep.max_rel);
}

TEST_CASE("max pooling gradients through a linear layer") {
  ParamStore store;
  Linear lin = Linear::create(store, "lin", 3, 4);
  Rng rng(14);
  store.init_all(rng);
  Mat x = random_mat(6, 3, rng);
  Mat coeff3 = random_mat(3, 4, rng);
  Vec coeff1 = random_vec(4, rng);
  auto loss = [&] {
    Mat h = lin.forward(store, x);
    Mat pooled = maxpool1d(h, nullptr);
    Vec v = pool_max_over_rows(pooled, nullptr);
    return kern::dot(pooled.v.data(), coeff3.v.data(), pooled.size()) +
           kern::dot(v.data(), coeff1.data(), v.size());
  };
  ParamStore grads = store.zeros_like();
  Mat h = lin.forward(store, x);
  PoolCache pc;
  Mat pooled = maxpool1d(h, &pc);
  std::vector<std::uint32_t> am;
  pool_max_over_rows(pooled, &am);
  Mat g_pooled = coeff3;
  Mat g_from_vec = pool_max_over_rows_backward(pooled.rows, am, coeff1);
  kern::vadd(g_pooled.v.data(), g_from_vec.v.data(), g_pooled.v.data(), g_pooled.size());
  Mat gh = maxpool1d_backward(pc, g_pooled, 4);
  lin.backward(store, grads, x, gh);
  auto rep = compare_gradients(store, grads, loss);
  CHECK_MESSAGE(rep.max_rel < kTol, rep.worst, " rel=", rep.max_rel);
}

TEST_CASE("embedding mlp gradients") {
  ParamStore store;
  EmbedMlp mlp = EmbedMlp::create(store, "emb", 6, 5);
  Rng rng(15);
  store.init_all(rng);
  Mat x = random_mat(4, 6, rng);
  Mat coeff = random_mat(4, 5, rng);
  auto loss = [&] {
    Mat y = mlp.forward(store, x, nullptr);
    return kern::dot(y.v.data(), coeff.v.data(), y.size());
  };
  ParamStore grads = store.zeros_like();
  EmbedMlp::Cache cache;
  mlp.forward(store, x, &cache);
  mlp.backward(store, grads, cache, coeff);
  auto rep = compare_gradients(store, grads, loss);
  CHECK_MESSAGE(rep.max_rel < kTol, rep.worst, " rel=", rep.max_rel);
}

static void check_s2s_gradients(S2sKind kind, std::uint64_t seed) {
  ParamStore store;
  S2s enc = S2s::create(store, "s2s", kind, 8);
  Rng rng(seed);
  store.init_all(rng);
  Mat x = random_mat(6, 8, rng);
  Mat coeff = random_mat(6, 8, rng);
  auto loss = [&] {
    Mat y = enc.forward(store, x, nullptr);
    return kern::dot(y.v.data(), coeff.v.data(), y.size());
  };
  ParamStore grads = store.zeros_like();
  S2s::Cache cache;
  enc.forward(store, x, &cache);
  enc.backward(store, grads, cache, coeff);
  auto rep = compare_gradients(store, grads, loss);
  CHECK_MESSAGE(rep.max_rel < kTol, to_string(kind), ": ", rep.worst, " rel=", rep.max_rel);
  MESSAGE(to_string(kind), " checked ", rep.checked, " params, max rel ", rep.max_rel);
}

TEST_CASE("gru gradients") { check_s2s_gradients(S2sKind::gru, 16); }
TEST_CASE("lstm gradients") { check_s2s_gradients(S2sKind::lstm, 17); }
TEST_CASE("transformer gradients") { check_s2s_gradients(S2sKind::transformer, 18); }

TEST_CASE("udm gradients for every structure variant") {
  for (UdmKind kind : {UdmKind::conv_max, UdmKind::conv_mean, UdmKind::max_only,
                       UdmKind::mean_only}) {
    ParamStore store;
    // an upstream linear provides parameters even for the pooling-only variants
    Linear lin = Linear::create(store, "lin", 4, 6);
    UdmModule udm = UdmModule::create(store, "udm", 6, kind);
    Rng rng(19);
    store.init_all(rng);
    Mat x = random_mat(6, 4, rng);
    Mat coeff = random_mat(3, 6, rng);
    auto loss = [&] {
      Mat h = lin.forward(store, x);
      Mat y = udm.forward(store, h, nullptr);
      return kern::dot(y.v.data(), coeff.v.data(), y.size());
    };
    ParamStore grads = store.zeros_like();
    Mat h = lin.forward(store, x);
    UdmModule::Cache cache;
    udm.forward(store, h, &cache);
    Mat gh = udm.backward(store, grads, cache, coeff);
    lin.backward(store, grads, x, gh);
    auto rep = compare_gradients(store, grads, loss);
    CHECK_MESSAGE(rep.max_rel < kTol, to_string(kind), ": ", rep.worst, " rel=", rep.max_rel);
  }
}

TEST_CASE("full branch gradients (embed, shared udm, shared s2s, pooling)") {
  ParamStore store;
  BranchModule branch = BranchModule::create(store, "t", 9, 8, 3, S2sKind::gru,
                                             UdmKind::conv_max);
  Rng rng(20);
  store.init_all(rng);
  Mat rows = random_mat(8, 9, rng);
  std::vector<Vec> coeff;
  for (int l = 0; l < 3; ++l) coeff.push_back(random_vec(8, rng));
  auto loss = [&] {
    std::vector<Vec> v = branch.forward(store, rows, nullptr);
    double acc = 0.0;
    for (int l = 0; l < 3; ++l) acc += kern::dot(v[l].data(), coeff[l].data(), v[l].size());
    return acc;
  };
  ParamStore grads = store.zeros_like();
  BranchModule::Cache cache;
  branch.forward(store, rows, &cache);
  branch.backward(store, grads, cache, coeff);
  auto rep = compare_gradients(store, grads, loss);
  CHECK_MESSAGE(rep.max_rel < kTol, rep.worst, " rel=", rep.max_rel);
  MESSAGE("branch checked ", rep.checked, " params, max rel ", rep.max_rel);
}

TEST_CASE("projection head gradients through the normalization") {
  ParamStore store;
  ProjectionHead head = ProjectionHead::create(store, "head", 6, 5);
  Rng rng(21);
  store.init_all(rng);
  Vec x = random_vec(6, rng);
  Vec coeff = random_vec(ProjectionHead::out_dim, rng);
  auto loss = [&] {
    Vec y = head.forward(store, x, nullptr);
    return kern::dot(y.data(), coeff.data(), y.size());
  };
  ParamStore grads = store.zeros_like();
  ProjectionHead::Cache cache;
  head.forward(store, x, &cache);
  head.backward(store, grads, cache, coeff);
  auto rep = compare_gradients(store, grads, loss);
  CHECK_MESSAGE(rep.max_rel < kTol, rep.worst, " rel=", rep.max_rel);
}

TEST_CASE("fusion backward matches finite differences on the inputs") {
  Rng rng(22);
  for (Fusion fusion : {Fusion::concat, Fusion::sum, Fusion::product, Fusion::weighted}) {
    std::vector<Vec> inputs;
    for (int i2 = 0; i2 < 3; ++i2) inputs.push_back(random_vec(5, rng));
    Vec weights = random_vec(3, rng);
    std::vector<const Vec*> ptrs{&inputs[0], &inputs[1], &inputs[2]};
    Vec fused = fuse_vectors(fusion, ptrs, weights.data());
    Vec coeff = random_vec(fused.size(), rng);
    auto loss = [&] {
      Vec f = fuse_vectors(fusion, ptrs, weights.data());
      return kern::dot(f.data(), coeff.data(), f.size());
    };
    std::vector<Vec> g_inputs;
    Vec g_weights(3, 0.0);
    fuse_vectors_backward(fusion, ptrs, weights.data(), coeff, g_inputs, g_weights.data());
    const double eps = 1e-5;
    for (int i2 = 0; i2 < 3; ++i2)
      for (std::size_t j = 0; j < 5; ++j) {
        const double saved = inputs[i2][j];
        inputs[i2][j] = saved + eps;
        const double up = loss();
        inputs[i2][j] = saved - eps;
        const double down = loss();
        inputs[i2][j] = saved;
        const double numeric = (up - down) / (2 * eps);
        CHECK(g_inputs[i2][j] == doctest::Approx(numeric).epsilon(1e-5));
      }
    if (fusion == Fusion::weighted) {
      for (int i2 = 0; i2 < 3; ++i2) {
        const double saved = weights[i2];
        weights[i2] = saved + eps;
        const double up = loss();
        weights[i2] = saved - eps;
        const double down = loss();
        weights[i2] = saved;
        CHECK(g_weights[i2] == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("whole-encoder gradients for ablation modes and fusion variants") {
  struct Setup {
    Branches branches;
    Fusion fusion;
  };
  for (const Setup& s : {Setup{Branches::both, Fusion::concat},
                         Setup{Branches::temporal, Fusion::concat},
                         Setup{Branches::spatial, Fusion::concat},
                         Setup{Branches::both, Fusion::sum},
                         Setup{Branches::both, Fusion::product},
                         Setup{Branches::both, Fusion::weighted}}) {
    EncoderConfig cfg;
    cfg.C = 8;
    cfg.L = 2;
    cfg.kind = S2sKind::gru;
    cfg.out_frames = 6;
    cfg.joints = 4;
    cfg.branches = s.branches;
    cfg.fusion = s.fusion;
    ParamStore store;
    HicoModel model = HicoModel::create(store, cfg, SkeletonTopology::chain(4));
    Rng rng(23);
    store.init_all(rng);
    SkeletonSequence seq(6, 4);
    for (float& x : seq.xyz) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    Vec coeff = random_vec(cfg.instance_width(), rng);
    auto loss = [&] {
      MultiLevelEmbedding emb = model.forward(store, seq, nullptr);
      return kern::dot(emb.instance.data(), coeff.data(), emb.instance.size());
    };
    ParamStore grads = store.zeros_like();
    HicoModel::Cache cache;
    model.forward(store, seq, &cache);
    HicoModel::EmbeddingGrads eg;
    eg.instance = coeff;
    model.backward(store, grads, cache, eg);
    auto rep = compare_gradients(store, grads, loss);
    CHECK_MESSAGE(rep.max_rel < kTol, to_string(s.branches), "/", to_string(s.fusion), ": ",
                  rep.worst, " rel=", rep.max_rel);
  }
}
