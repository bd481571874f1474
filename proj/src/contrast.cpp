#include "hico/contrast.hpp"

#include <algorithm>
#include <cmath>

#include "hico/common.hpp"
#include "hico/kernels.hpp"

namespace hico {

// --- projection head ---------------------------------------------------------

ProjectionHead ProjectionHead::create(ParamStore& store, const std::string& prefix,
                                      std::size_t in, std::size_t hidden) {
  ProjectionHead h;
  h.in = in;
  h.hidden = hidden;
  h.fc1 = Linear::create(store, prefix + ".fc1", in, hidden);
  h.fc2 = Linear::create(store, prefix + ".fc2", hidden, out_dim);
  return h;
}

Vec ProjectionHead::forward(const ParamStore& store, const Vec& x, Cache* cache) const {
  require(x.size() == in, "projection head: input width mismatch");
  Vec pre = fc1.forward_vec(store, x);
  Vec act(pre.size());
  kern::relu(pre.data(), act.data(), pre.size());
  Vec raw = fc2.forward_vec(store, act);
  const double norm = std::sqrt(kern::squared_norm(raw.data(), raw.size()));
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw std::runtime_error("projection produced a zero-norm or non-finite vector");
  Vec y(raw.size());
  const double inv = 1.0 / norm;
  for (std::size_t i = 0; i < raw.size(); ++i) y[i] = raw[i] * inv;
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
    cache->raw = std::move(raw);
    cache->inv_norm = inv;
  }
  return y;
}

Vec ProjectionHead::backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
                             const Vec& gy) const {
  // y = raw/|raw|: graw = (gy - y (y . gy)) / |raw|
  const std::size_t d = gy.size();
  Vec y(d);
  for (std::size_t i = 0; i < d; ++i) y[i] = cache.raw[i] * cache.inv_norm;
  const double proj = kern::dot(y.data(), gy.data(), d);
  Vec graw(d);
  for (std::size_t i = 0; i < d; ++i) graw[i] = (gy[i] - y[i] * proj) * cache.inv_norm;
  Vec gact = fc2.backward_vec(store, grads, cache.act, graw);
  Vec gpre(gact.size());
  kern::relu_backward(cache.pre.data(), gact.data(), gpre.data(), gact.size());
  return fc1.backward_vec(store, grads, cache.x, gpre);
}

// --- queue -------------------------------------------------------------------

void ContrastQueue::enqueue(const Vec& v) {
  require(v.size() == dim, "queue entry width mismatch");
  const double norm = std::sqrt(kern::squared_norm(v.data(), v.size()));
  require(std::abs(norm - 1.0) <= 1e-5, "queue entries must be unit vectors");
  const std::size_t slot = (head + count) % capacity;
  std::copy(v.begin(), v.end(), buf.begin() + slot * dim);
  if (count < capacity)
    ++count;
  else
    head = (head + 1) % capacity;
}

void ContrastQueue::enqueue_batch(const std::vector<Vec>& batch) {
  require(batch.size() <= capacity, "enqueue batch larger than queue capacity");
  for (const Vec& v : batch) enqueue(v);
}

void ContrastQueue::fill_random_unit(Rng& rng) {
  Vec v(dim);
  for (std::size_t i = 0; i < capacity; ++i) {
    double norm2 = 0.0;
    do {
      for (double& x : v) x = rng.normal();
      norm2 = kern::squared_norm(v.data(), v.size());
    } while (norm2 == 0.0);
    kern::vscale(1.0 / std::sqrt(norm2), v.data(), v.size());
    enqueue(v);
  }
}

// --- InfoNCE ------------------------------------------------------------------

double info_nce_multi(const Vec& anchor, const std::vector<const Vec*>& positives,
                      const ContrastQueue& queue, double tau, Vec* grad_anchor) {
  require(!positives.empty(), "info_nce_multi needs at least one positive");
  require(queue.size() > 0, "info_nce_multi needs a non-empty queue");
  require(tau > 0.0, "temperature must be positive");
  const std::size_t d = anchor.size();
  const std::size_t np = positives.size();
  const std::size_t nm = queue.size();
  std::vector<double> zp(np), zm(nm);
  for (std::size_t i = 0; i < np; ++i) {
    require(positives[i]->size() == d, "positive width mismatch");
    zp[i] = kern::dot(anchor.data(), positives[i]->data(), d) / tau;
  }
  require(queue.dim == d, "queue width mismatch");
  for (std::size_t j = 0; j < nm; ++j)
    zm[j] = kern::dot(anchor.data(), queue.entry(j), d) / tau;
  const double mx = std::max(kern::reduce_max(zp.data(), np), kern::reduce_max(zm.data(), nm));
  double sp = 0.0, sm = 0.0;
  for (double& z : zp) {
    z = std::exp(z - mx);
    sp += z;
  }
  for (double& z : zm) {
    z = std::exp(z - mx);
    sm += z;
  }
  const double loss = std::log(sp + sm) - std::log(sp);
  if (grad_anchor) {
    require(grad_anchor->size() == d, "grad_anchor width mismatch");
    const double inv_all = 1.0 / (sp + sm);
    const double inv_sp = 1.0 / sp;
    for (std::size_t i = 0; i < np; ++i)
      kern::axpy(zp[i] * (inv_all - inv_sp) / tau, positives[i]->data(), grad_anchor->data(), d);
    for (std::size_t j = 0; j < nm; ++j)
      kern::axpy(zm[j] * inv_all / tau, queue.entry(j), grad_anchor->data(), d);
  }
  return loss;
}

double domain_loss(const Vec& v_t, const Vec& v_s, const Vec& v_t_hat, const Vec& v_s_hat,
                   const ContrastQueue& queue_t, const ContrastQueue& queue_s, double tau,
                   Vec* g_vt, Vec* g_vs) {
  const double a = info_nce_multi(v_t, {&v_s_hat}, queue_s, tau, g_vt);
  const double b = info_nce_multi(v_s, {&v_t_hat}, queue_t, tau, g_vs);
  return a + b;
}

// --- heads & state ---------------------------------------------------------------

HicoHeads HicoHeads::create(ParamStore& store, const EncoderConfig& cfg) {
  HicoHeads h;
  const std::size_t iw = cfg.instance_width();
  const std::size_t dw = cfg.domain_width();
  h.instance = ProjectionHead::create(store, "head.inst", iw, std::min<std::size_t>(iw, 512));
  h.has_domain = cfg.branches == Branches::both;
  h.has_clip = cfg.has_temporal();
  h.has_part = cfg.has_spatial();
  if (h.has_domain) {
    h.dom_t = ProjectionHead::create(store, "head.dom_t", dw, std::min<std::size_t>(dw, 512));
    h.dom_s = ProjectionHead::create(store, "head.dom_s", dw, std::min<std::size_t>(dw, 512));
  }
  if (h.has_clip) h.clip = ProjectionHead::create(store, "head.clip", cfg.C, 512);
  if (h.has_part) h.part = ProjectionHead::create(store, "head.part", cfg.C, 512);
  return h;
}

MoCoState MoCoState::create(const MoCoConfig& cfg, const SkeletonTopology& topo) {
  require(cfg.tau > 0.0, "tau must be positive");
  require(cfg.key_momentum >= 0.0 && cfg.key_momentum <= 1.0, "key momentum must be in [0,1]");
  require(cfg.queue_capacity >= 1, "queue capacity must be >= 1");
  MoCoState st;
  st.cfg = cfg;
  st.model = HicoModel::create(st.query, cfg.enc, topo);
  st.heads = HicoHeads::create(st.query, cfg.enc);
  Rng init_rng(mix_seed(cfg.seed, 0x1417));
  st.query.init_all(init_rng);
  st.key = st.query;
  const std::size_t cap = cfg.queue_capacity;
  st.q_instance = ContrastQueue(ProjectionHead::out_dim, cap);
  st.q_temporal = ContrastQueue(ProjectionHead::out_dim, cap);
  st.q_spatial = ContrastQueue(ProjectionHead::out_dim, cap);
  st.q_clip = ContrastQueue(ProjectionHead::out_dim, cap);
  st.q_part = ContrastQueue(ProjectionHead::out_dim, cap);
  ContrastQueue* qs[5] = {&st.q_instance, &st.q_temporal, &st.q_spatial, &st.q_clip, &st.q_part};
  for (int i = 0; i < 5; ++i) {
    Rng qrng(mix_seed(cfg.seed, 0x9u, static_cast<std::uint64_t>(i)));
    qs[i]->fill_random_unit(qrng);
  }
  return st;
}

void momentum_update(MoCoState& state) {
  for (std::size_t id = 0; id < state.query.count(); ++id) {
    auto& k = state.key[id].v;
    const auto& q = state.query[id].v;
    kern::ema_update(k.data(), q.data(), k.size(), state.cfg.key_momentum);
  }
}

// --- total loss --------------------------------------------------------------------

namespace {

struct ItemProjections {
  HicoModel::Cache enc_cache;
  ProjectionHead::Cache c_inst, c_dom_t, c_dom_s, c_clip, c_part;
  Vec a_inst, a_dom_t, a_dom_s, a_clip, a_part;  // query-side anchors
};

}  // namespace

LossBreakdown hico_total_loss(
    const MoCoState& state,
    const std::vector<std::pair<SkeletonSequence, SkeletonSequence>>& batch,
    const MoCoLossToggles& toggles, ParamStore* grads, std::vector<KeyFeatures>* keys) {
  require(!batch.empty(), "empty batch");
  const HicoHeads& heads = state.heads;
  const double tau = state.cfg.tau;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool want_instance = toggles.instance;
  const bool want_domain = toggles.domain && heads.has_domain;
  const bool want_clip = toggles.clip_part && heads.has_clip;
  const bool want_part = toggles.clip_part && heads.has_part;
  LossBreakdown sum;
  if (keys) {
    keys->clear();
    keys->reserve(batch.size());
  }
  for (const auto& [q_view, k_view] : batch) {
    ItemProjections item;
    MultiLevelEmbedding q_emb =
        state.model.forward(state.query, q_view, grads ? &item.enc_cache : nullptr);
    MultiLevelEmbedding k_emb = state.model.forward(state.key, k_view, nullptr);

    KeyFeatures kf;
    kf.instance = heads.instance.forward(state.key, k_emb.instance, nullptr);
    if (heads.has_domain) {
      kf.temporal = heads.dom_t.forward(state.key, k_emb.temporal, nullptr);
      kf.spatial = heads.dom_s.forward(state.key, k_emb.spatial, nullptr);
    }
    if (heads.has_clip)
      for (const Vec& v : k_emb.clip)
        kf.clip.push_back(heads.clip.forward(state.key, v, nullptr));
    if (heads.has_part)
      for (const Vec& v : k_emb.part)
        kf.part.push_back(heads.part.forward(state.key, v, nullptr));

    Vec g_inst, g_dom_t, g_dom_s, g_clip, g_part;
    if (want_instance) {
      item.a_inst =
          heads.instance.forward(state.query, q_emb.instance, grads ? &item.c_inst : nullptr);
      if (grads) g_inst.assign(ProjectionHead::out_dim, 0.0);
      sum.instance += info_nce_multi(item.a_inst, {&kf.instance}, state.q_instance, tau,
                                     grads ? &g_inst : nullptr);
    }
    if (want_domain) {
      item.a_dom_t =
          heads.dom_t.forward(state.query, q_emb.temporal, grads ? &item.c_dom_t : nullptr);
      item.a_dom_s =
          heads.dom_s.forward(state.query, q_emb.spatial, grads ? &item.c_dom_s : nullptr);
      if (grads) {
        g_dom_t.assign(ProjectionHead::out_dim, 0.0);
        g_dom_s.assign(ProjectionHead::out_dim, 0.0);
      }
      sum.domain += domain_loss(item.a_dom_t, item.a_dom_s, kf.temporal, kf.spatial,
                                state.q_temporal, state.q_spatial, tau,
                                grads ? &g_dom_t : nullptr, grads ? &g_dom_s : nullptr);
    }
    if (want_clip) {
      item.a_clip =
          heads.clip.forward(state.query, q_emb.clip[0], grads ? &item.c_clip : nullptr);
      std::vector<const Vec*> pos;
      for (const Vec& v : kf.clip) pos.push_back(&v);
      if (grads) g_clip.assign(ProjectionHead::out_dim, 0.0);
      sum.clip += info_nce_multi(item.a_clip, pos, state.q_clip, tau,
                                 grads ? &g_clip : nullptr);
    }
    if (want_part) {
      item.a_part =
          heads.part.forward(state.query, q_emb.part[0], grads ? &item.c_part : nullptr);
      std::vector<const Vec*> pos;
      for (const Vec& v : kf.part) pos.push_back(&v);
      if (grads) g_part.assign(ProjectionHead::out_dim, 0.0);
      sum.part += info_nce_multi(item.a_part, pos, state.q_part, tau,
                                 grads ? &g_part : nullptr);
    }

    if (grads) {
      HicoModel::EmbeddingGrads eg;
      if (want_instance) {
        kern::vscale(inv_b, g_inst.data(), g_inst.size());
        eg.instance = heads.instance.backward(state.query, *grads, item.c_inst, g_inst);
      }
      if (want_domain) {
        kern::vscale(inv_b, g_dom_t.data(), g_dom_t.size());
        kern::vscale(inv_b, g_dom_s.data(), g_dom_s.size());
        eg.temporal = heads.dom_t.backward(state.query, *grads, item.c_dom_t, g_dom_t);
        eg.spatial = heads.dom_s.backward(state.query, *grads, item.c_dom_s, g_dom_s);
      }
      if (want_clip) {
        kern::vscale(inv_b, g_clip.data(), g_clip.size());
        eg.clip1 = heads.clip.backward(state.query, *grads, item.c_clip, g_clip);
      }
      if (want_part) {
        kern::vscale(inv_b, g_part.data(), g_part.size());
        eg.part1 = heads.part.backward(state.query, *grads, item.c_part, g_part);
      }
      state.model.backward(state.query, *grads, item.enc_cache, eg);
    }
    if (keys) keys->push_back(std::move(kf));
  }
  sum.instance *= inv_b;
  sum.domain *= inv_b;
  sum.clip *= inv_b;
  sum.part *= inv_b;
  sum.total = (want_instance ? sum.instance : 0.0) + (want_domain ? sum.domain : 0.0) +
              (want_clip ? sum.clip : 0.0) + (want_part ? sum.part : 0.0);
  return sum;
}

void enqueue_key_features(MoCoState& state, const std::vector<KeyFeatures>& keys) {
  for (const KeyFeatures& kf : keys) {
    state.q_instance.enqueue(kf.instance);
    if (!kf.temporal.empty()) state.q_temporal.enqueue(kf.temporal);
    if (!kf.spatial.empty()) state.q_spatial.enqueue(kf.spatial);
    for (const Vec& v : kf.clip) state.q_clip.enqueue(v);
    for (const Vec& v : kf.part) state.q_part.enqueue(v);
  }
}

}  // namespace hico
