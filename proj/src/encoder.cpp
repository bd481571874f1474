#include "hico/encoder.hpp"

#include <cstring>

#include "hico/common.hpp"
#include "hico/kernels.hpp"

namespace hico {

Branches parse_branches(const std::string& s) {
  if (s == "both") return Branches::both;
  if (s == "temporal") return Branches::temporal;
  if (s == "spatial") return Branches::spatial;
  throw std::invalid_argument("unknown branches mode: " + s);
}

Fusion parse_fusion(const std::string& s) {
  if (s == "concat") return Fusion::concat;
  if (s == "sum") return Fusion::sum;
  if (s == "product") return Fusion::product;
  if (s == "weighted") return Fusion::weighted;
  throw std::invalid_argument("unknown fusion: " + s);
}

UdmKind parse_udm_kind(const std::string& s) {
  if (s == "conv_max") return UdmKind::conv_max;
  if (s == "conv_mean") return UdmKind::conv_mean;
  if (s == "max") return UdmKind::max_only;
  if (s == "mean") return UdmKind::mean_only;
  throw std::invalid_argument("unknown udm structure: " + s);
}

const char* to_string(Branches b) {
  switch (b) {
    case Branches::both: return "both";
    case Branches::temporal: return "temporal";
    case Branches::spatial: return "spatial";
  }
  return "?";
}

const char* to_string(Fusion f) {
  switch (f) {
    case Fusion::concat: return "concat";
    case Fusion::sum: return "sum";
    case Fusion::product: return "product";
    case Fusion::weighted: return "weighted";
  }
  return "?";
}

const char* to_string(UdmKind u) {
  switch (u) {
    case UdmKind::conv_max: return "conv_max";
    case UdmKind::conv_mean: return "conv_mean";
    case UdmKind::max_only: return "max";
    case UdmKind::mean_only: return "mean";
  }
  return "?";
}

void EncoderConfig::validate() const {
  require(C >= 1, "encoder C must be >= 1");
  require(L >= 1, "encoder L must be >= 1");
  const std::size_t min_len = std::size_t{1} << (L - 1);
  require(out_frames >= min_len, "out_frames must be >= 2^(L-1)");
  require(joints >= min_len, "joints must be >= 2^(L-1)");
  if (kind != S2sKind::transformer)
    require(C % 2 == 0, "gru/lstm encoders need an even width C");
  else
    require(C % 8 == 0, "transformer encoder needs C divisible by 8");
}

// --- UDM -------------------------------------------------------------------------

UdmModule UdmModule::create(ParamStore& store, const std::string& prefix, std::size_t width,
                            UdmKind kind) {
  UdmModule m;
  m.kind = kind;
  m.width = width;
  m.has_conv = kind == UdmKind::conv_max || kind == UdmKind::conv_mean;
  if (m.has_conv) {
    m.conv = Conv1dLayer::create(store, prefix + ".conv", width, width);
    m.ln = LayerNormLayer::create(store, prefix + ".ln", width);
  }
  return m;
}

Mat UdmModule::forward(const ParamStore& store, const Mat& x, Cache* cache) const {
  require(x.rows >= 2, "udm needs a sequence of length >= 2");
  const bool use_max = kind == UdmKind::conv_max || kind == UdmKind::max_only;
  if (!has_conv) {
    if (cache) {
      cache->in = x;
      cache->pooled_from_rows = x.rows;
    }
    return use_max ? maxpool1d(x, cache ? &cache->pool : nullptr) : meanpool1d(x);
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  c.in = x;
  c.conv_out = conv.forward(store, x);
  c.relu_out = Mat(c.conv_out.rows, c.conv_out.cols);
  kern::relu(c.conv_out.v.data(), c.relu_out.v.data(), c.conv_out.size());
  c.ln_out = ln.forward(store, c.relu_out, cache ? &c.lnc : nullptr);
  c.pooled_from_rows = c.ln_out.rows;
  return use_max ? maxpool1d(c.ln_out, cache ? &c.pool : nullptr) : meanpool1d(c.ln_out);
}

Mat UdmModule::backward(const ParamStore& store, ParamStore& grads, const Cache& c,
                        const Mat& gy) const {
  const bool use_max = kind == UdmKind::conv_max || kind == UdmKind::max_only;
  Mat gpool = use_max ? maxpool1d_backward(c.pool, gy, width)
                      : meanpool1d_backward(c.pooled_from_rows, gy);
  if (!has_conv) return gpool;
  Mat grelu = ln.backward(store, grads, c.lnc, gpool);
  Mat gconv(grelu.rows, grelu.cols);
  kern::relu_backward(c.conv_out.v.data(), grelu.v.data(), gconv.v.data(), grelu.size());
  return conv.backward(store, grads, c.in, gconv);
}

// --- branch -----------------------------------------------------------------------

BranchModule BranchModule::create(ParamStore& store, const std::string& prefix,
                                  std::size_t in_width, std::size_t C, std::size_t L,
                                  S2sKind kind, UdmKind udm_kind) {
  BranchModule b;
  b.in_width = in_width;
  b.C = C;
  b.L = L;
  b.embed = EmbedMlp::create(store, prefix + ".emb", in_width, C);
  if (L > 1) b.udm = UdmModule::create(store, prefix + ".udm", C, udm_kind);
  b.s2s = S2s::create(store, prefix + ".s2s", kind, C);
  return b;
}

std::vector<Vec> BranchModule::forward(const ParamStore& store, const Mat& rows,
                                       Cache* cache) const {
  require(rows.cols == in_width, "branch: row width mismatch");
  require(rows.rows >= (std::size_t{1} << (L - 1)), "branch: sequence shorter than 2^(L-1)");
  Cache local;
  Cache& c = cache ? *cache : local;
  c.levels.clear();
  c.udmc.assign(L > 1 ? L - 1 : 0, {});
  c.s2sc.assign(L, {});
  c.s2s_out.assign(L, {});
  c.tmp_argmax.assign(L, {});
  c.levels.push_back(embed.forward(store, rows, cache ? &c.emb : nullptr));
  for (std::size_t l = 1; l < L; ++l)
    c.levels.push_back(udm.forward(store, c.levels[l - 1], cache ? &c.udmc[l - 1] : nullptr));
  std::vector<Vec> v(L);
  for (std::size_t l = 0; l < L; ++l) {
    c.s2s_out[l] = s2s.forward(store, c.levels[l], cache ? &c.s2sc[l] : nullptr);
    v[l] = pool_max_over_rows(c.s2s_out[l], cache ? &c.tmp_argmax[l] : nullptr);
  }
  return v;
}

void BranchModule::backward(const ParamStore& store, ParamStore& grads, const Cache& c,
                            const std::vector<Vec>& g_levels) const {
  require(g_levels.size() == L, "branch backward: wrong gradient count");
  Mat g_up;  // gradient w.r.t. X_{l+1}, propagated down the pyramid
  for (std::size_t l = L; l-- > 0;) {
    Mat g_x;
    if (!g_levels[l].empty()) {
      Mat g_s2s = pool_max_over_rows_backward(c.s2s_out[l].rows, c.tmp_argmax[l], g_levels[l]);
      g_x = s2s.backward(store, grads, c.s2sc[l], g_s2s);
    }
    if (l + 1 < L && g_up.size() > 0) {
      Mat g_from_up = udm.backward(store, grads, c.udmc[l], g_up);
      if (g_x.size() == 0)
        g_x = std::move(g_from_up);
      else
        kern::vadd(g_x.v.data(), g_from_up.v.data(), g_x.v.data(), g_x.size());
    }
    g_up = std::move(g_x);
  }
  if (g_up.size() > 0) embed.backward(store, grads, c.emb, g_up);
}

// --- fusion ------------------------------------------------------------------------

Vec fuse_vectors(Fusion fusion, const std::vector<const Vec*>& inputs, const double* weights) {
  require(!inputs.empty(), "fusion over zero vectors");
  const std::size_t w = inputs[0]->size();
  for (const Vec* v : inputs)
    require(v->size() == w, "fusion inputs must have equal widths");
  switch (fusion) {
    case Fusion::concat: {
      Vec out;
      out.reserve(w * inputs.size());
      for (const Vec* v : inputs) out.insert(out.end(), v->begin(), v->end());
      return out;
    }
    case Fusion::sum: {
      Vec out(w, 0.0);
      for (const Vec* v : inputs) kern::axpy(1.0, v->data(), out.data(), w);
      return out;
    }
    case Fusion::product: {
      Vec out = *inputs[0];
      for (std::size_t i = 1; i < inputs.size(); ++i)
        kern::vmul(out.data(), inputs[i]->data(), out.data(), w);
      return out;
    }
    case Fusion::weighted: {
      require(weights != nullptr, "weighted fusion needs coefficients");
      Vec out(w, 0.0);
      for (std::size_t i = 0; i < inputs.size(); ++i)
        kern::axpy(weights[i], inputs[i]->data(), out.data(), w);
      return out;
    }
  }
  throw std::invalid_argument("unknown fusion");
}

void fuse_vectors_backward(Fusion fusion, const std::vector<const Vec*>& inputs,
                           const double* weights, const Vec& g, std::vector<Vec>& g_inputs,
                           double* g_weights) {
  const std::size_t k = inputs.size();
  const std::size_t w = inputs[0]->size();
  g_inputs.assign(k, {});
  switch (fusion) {
    case Fusion::concat:
      for (std::size_t i = 0; i < k; ++i)
        g_inputs[i] = Vec(g.begin() + i * w, g.begin() + (i + 1) * w);
      return;
    case Fusion::sum:
      for (std::size_t i = 0; i < k; ++i) g_inputs[i] = g;
      return;
    case Fusion::product: {
      // prefix/suffix products avoid dividing by zero entries
      std::vector<Vec> prefix(k + 1, Vec(w, 1.0));
      for (std::size_t i = 0; i < k; ++i)
        kern::vmul(prefix[i].data(), inputs[i]->data(), prefix[i + 1].data(), w);
      Vec suffix(w, 1.0);
      for (std::size_t i = k; i-- > 0;) {
        g_inputs[i].assign(w, 0.0);
        for (std::size_t j = 0; j < w; ++j)
          g_inputs[i][j] = g[j] * prefix[i][j] * suffix[j];
        kern::vmul(suffix.data(), inputs[i]->data(), suffix.data(), w);
      }
      return;
    }
    case Fusion::weighted:
      for (std::size_t i = 0; i < k; ++i) {
        g_inputs[i].assign(w, 0.0);
        kern::axpy(weights[i], g.data(), g_inputs[i].data(), w);
        if (g_weights) g_weights[i] += kern::dot(inputs[i]->data(), g.data(), w);
      }
      return;
  }
  throw std::invalid_argument("unknown fusion");
}

// --- whole encoder --------------------------------------------------------------------

HicoModel HicoModel::create(ParamStore& store, const EncoderConfig& cfg,
                            const SkeletonTopology& topo) {
  cfg.validate();
  topo.validate();
  require(topo.joints() == cfg.joints, "topology joint count must match encoder config");
  HicoModel m;
  m.cfg = cfg;
  m.topo = topo;
  if (cfg.has_temporal())
    m.tbr = BranchModule::create(store, "t", 3 * cfg.joints, cfg.C, cfg.L, cfg.kind, cfg.udm);
  if (cfg.has_spatial())
    m.sbr = BranchModule::create(store, "s", 3 * cfg.out_frames, cfg.C, cfg.L, cfg.kind, cfg.udm);
  if (cfg.fusion == Fusion::weighted) {
    const double lw = 1.0 / static_cast<double>(cfg.L);
    if (cfg.has_temporal()) m.wt = store.add("fusion.t.w", {cfg.L}, InitSpec::constant(lw));
    if (cfg.has_spatial()) m.ws = store.add("fusion.s.w", {cfg.L}, InitSpec::constant(lw));
    if (cfg.branches == Branches::both)
      m.wi = store.add("fusion.i.w", {2}, InitSpec::constant(0.5));
  }
  return m;
}

namespace {

std::vector<const Vec*> pointers(const std::vector<Vec>& vs) {
  std::vector<const Vec*> out;
  out.reserve(vs.size());
  for (const Vec& v : vs) out.push_back(&v);
  return out;
}

void add_into(Vec& acc, const Vec& g) {
  if (g.empty()) return;
  if (acc.empty()) {
    acc = g;
    return;
  }
  kern::axpy(1.0, g.data(), acc.data(), acc.size());
}

}  // namespace

MultiLevelEmbedding HicoModel::forward(const ParamStore& store, const SkeletonSequence& seq,
                                       Cache* cache) const {
  require(seq.frames == cfg.out_frames, "sequence frame count does not match encoder config");
  require(seq.joints == cfg.joints, "sequence joint count does not match encoder config");
  Cache local;
  Cache& c = cache ? *cache : local;
  MultiLevelEmbedding emb;
  if (cfg.has_temporal()) {
    emb.clip = tbr.forward(store, time_major_rows(seq), cache ? &c.t : nullptr);
    emb.temporal = fuse_vectors(cfg.fusion, pointers(emb.clip),
                                wt != ParamStore::npos ? store[wt].v.data() : nullptr);
  }
  if (cfg.has_spatial()) {
    emb.part = sbr.forward(store, space_major_rows(seq, topo.joint_order),
                           cache ? &c.s : nullptr);
    emb.spatial = fuse_vectors(cfg.fusion, pointers(emb.part),
                               ws != ParamStore::npos ? store[ws].v.data() : nullptr);
  }
  if (cfg.branches == Branches::both) {
    emb.instance = fuse_vectors(cfg.fusion, {&emb.temporal, &emb.spatial},
                                wi != ParamStore::npos ? store[wi].v.data() : nullptr);
  } else {
    emb.instance = cfg.has_temporal() ? emb.temporal : emb.spatial;
  }
  c.emb = emb;
  return emb;
}

void HicoModel::backward(const ParamStore& store, ParamStore& grads, const Cache& c,
                         const EmbeddingGrads& g) const {
  Vec g_t = g.temporal;
  Vec g_s = g.spatial;
  if (!g.instance.empty()) {
    if (cfg.branches == Branches::both) {
      std::vector<Vec> parts;
      fuse_vectors_backward(cfg.fusion, {&c.emb.temporal, &c.emb.spatial},
                            wi != ParamStore::npos ? store[wi].v.data() : nullptr, g.instance,
                            parts, wi != ParamStore::npos ? grads[wi].v.data() : nullptr);
      add_into(g_t, parts[0]);
      add_into(g_s, parts[1]);
    } else if (cfg.has_temporal()) {
      add_into(g_t, g.instance);
    } else {
      add_into(g_s, g.instance);
    }
  }
  if (cfg.has_temporal()) {
    std::vector<Vec> g_levels(cfg.L);
    if (!g_t.empty())
      fuse_vectors_backward(cfg.fusion, pointers(c.emb.clip),
                            wt != ParamStore::npos ? store[wt].v.data() : nullptr, g_t, g_levels,
                            wt != ParamStore::npos ? grads[wt].v.data() : nullptr);
    if (!g.clip1.empty()) add_into(g_levels[0], g.clip1);
    tbr.backward(store, grads, c.t, g_levels);
  }
  if (cfg.has_spatial()) {
    std::vector<Vec> g_levels(cfg.L);
    if (!g_s.empty())
      fuse_vectors_backward(cfg.fusion, pointers(c.emb.part),
                            ws != ParamStore::npos ? store[ws].v.data() : nullptr, g_s, g_levels,
                            ws != ParamStore::npos ? grads[ws].v.data() : nullptr);
    if (!g.part1.empty()) add_into(g_levels[0], g.part1);
    sbr.backward(store, grads, c.s, g_levels);
  }
}

}  // namespace hico
