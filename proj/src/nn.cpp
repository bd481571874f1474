#include "hico/nn.hpp"

#include <cmath>
#include <cstring>

#include "hico/common.hpp"
#include "hico/kernels.hpp"

namespace hico {

namespace {

void sigmoid_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void tanh_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

}  // namespace

// --- ParamStore --------------------------------------------------------------

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape, InitSpec init) {
  require(find(name) == npos, "duplicate parameter name: " + name);
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  require(n >= 1, "parameter must have at least one value: " + name);
  ParamTensor t;
  t.name = std::move(name);
  t.shape = std::move(shape);
  t.v.assign(n, 0.0);
  t.init = init;
  tensors_.push_back(std::move(t));
  return tensors_.size() - 1;
}

std::size_t ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].name == name) return i;
  return npos;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out = *this;
  out.zero_all();
  return out;
}

void ParamStore::zero_all() {
  for (auto& t : tensors_) std::fill(t.v.begin(), t.v.end(), 0.0);
}

void ParamStore::init_all(Rng& rng) {
  for (auto& t : tensors_) {
    switch (t.init.kind) {
      case InitSpec::Kind::uniform_fanin: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.init.fan_in));
        for (double& x : t.v) x = rng.uniform(-bound, bound);
        break;
      }
      case InitSpec::Kind::zero:
        std::fill(t.v.begin(), t.v.end(), 0.0);
        break;
      case InitSpec::Kind::one:
        std::fill(t.v.begin(), t.v.end(), 1.0);
        break;
      case InitSpec::Kind::constant:
        std::fill(t.v.begin(), t.v.end(), t.init.value);
        break;
    }
  }
}

void ParamStore::require_all_finite(const std::string& what) const {
  for (const auto& t : tensors_)
    if (!all_finite(t.v.data(), t.v.size()))
      throw std::runtime_error(what + ": non-finite values in " + t.name);
}

// --- primitives ---------------------------------------------------------------

Vec linear_map(const Mat& w, const Vec& b, const Vec& x) {
  require(w.cols == x.size(), "linear_map: weight/input width mismatch");
  require(w.rows == b.size(), "linear_map: weight/bias size mismatch");
  Vec y(w.rows);
  kern::gemv(w.v.data(), w.rows, w.cols, x.data(), b.data(), y.data());
  return y;
}

Vec layer_norm_op(const Vec& x, const Vec& gain, const Vec& shift, double eps) {
  const std::size_t d = x.size();
  require(d >= 1, "layer_norm_op: empty input");
  require(gain.size() == d && shift.size() == d, "layer_norm_op: gain/shift width mismatch");
  const double mean = kern::reduce_sum(x.data(), d) / static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(var + eps);
  Vec y(d);
  for (std::size_t i = 0; i < d; ++i) y[i] = (x[i] - mean) * inv * gain[i] + shift[i];
  return y;
}

Mat maxpool1d(const Mat& seq, PoolCache* cache) {
  require(seq.rows >= 2, "maxpool1d needs length >= 2");
  const std::size_t out_rows = seq.rows / 2;
  Mat out(out_rows, seq.cols);
  if (cache) {
    cache->in_rows = seq.rows;
    cache->argmax.assign(out_rows * seq.cols, 0);
  }
  for (std::size_t r = 0; r < out_rows; ++r) {
    const double* a = seq.row(2 * r);
    const double* b = seq.row(2 * r + 1);
    double* dst = out.row(r);
    if (cache) {
      for (std::size_t c = 0; c < seq.cols; ++c) {
        const bool second = b[c] > a[c];
        dst[c] = second ? b[c] : a[c];
        cache->argmax[r * seq.cols + c] = static_cast<std::uint32_t>(2 * r + (second ? 1 : 0));
      }
    } else {
      kern::vmax(a, b, dst, seq.cols);
    }
  }
  return out;
}

Mat maxpool1d_backward(const PoolCache& cache, const Mat& gy, std::size_t width) {
  Mat gx(cache.in_rows, width);
  for (std::size_t r = 0; r < gy.rows; ++r)
    for (std::size_t c = 0; c < width; ++c)
      gx.at(cache.argmax[r * width + c], c) += gy.at(r, c);
  return gx;
}

Mat meanpool1d(const Mat& seq) {
  require(seq.rows >= 2, "meanpool1d needs length >= 2");
  const std::size_t out_rows = seq.rows / 2;
  Mat out(out_rows, seq.cols);
  for (std::size_t r = 0; r < out_rows; ++r) {
    const double* a = seq.row(2 * r);
    const double* b = seq.row(2 * r + 1);
    double* dst = out.row(r);
    for (std::size_t c = 0; c < seq.cols; ++c) dst[c] = 0.5 * (a[c] + b[c]);
  }
  return out;
}

Mat meanpool1d_backward(std::size_t in_rows, const Mat& gy) {
  Mat gx(in_rows, gy.cols);
  for (std::size_t r = 0; r < gy.rows; ++r)
    for (std::size_t c = 0; c < gy.cols; ++c) {
      gx.at(2 * r, c) += 0.5 * gy.at(r, c);
      gx.at(2 * r + 1, c) += 0.5 * gy.at(r, c);
    }
  return gx;
}

Vec pool_max_over_rows(const Mat& seq, std::vector<std::uint32_t>* argmax) {
  require(seq.rows >= 1, "max pooling over an empty sequence");
  Vec out(seq.row(0), seq.row(0) + seq.cols);
  if (argmax) argmax->assign(seq.cols, 0);
  for (std::size_t r = 1; r < seq.rows; ++r) {
    const double* src = seq.row(r);
    if (argmax) {
      for (std::size_t c = 0; c < seq.cols; ++c)
        if (src[c] > out[c]) {
          out[c] = src[c];
          (*argmax)[c] = static_cast<std::uint32_t>(r);
        }
    } else {
      kern::vmax(out.data(), src, out.data(), seq.cols);
    }
  }
  return out;
}

Mat pool_max_over_rows_backward(std::size_t rows, const std::vector<std::uint32_t>& argmax,
                                const Vec& g) {
  Mat gx(rows, g.size());
  for (std::size_t c = 0; c < g.size(); ++c) gx.at(argmax[c], c) += g[c];
  return gx;
}

// --- Linear -------------------------------------------------------------------

Linear Linear::create(ParamStore& store, const std::string& prefix, std::size_t in,
                      std::size_t out) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w = store.add(prefix + ".w", {out, in}, InitSpec::uniform(in));
  l.b = store.add(prefix + ".b", {out}, InitSpec::uniform(in));
  return l;
}

Mat Linear::forward(const ParamStore& store, const Mat& x) const {
  require(x.cols == in, "linear: input width mismatch");
  const auto& w_ = store[w].v;
  const auto& b_ = store[b].v;
  Mat y(x.rows, out);
  for (std::size_t r = 0; r < x.rows; ++r)
    kern::gemv(w_.data(), out, in, x.row(r), b_.data(), y.row(r));
  return y;
}

Mat Linear::backward(const ParamStore& store, ParamStore& grads, const Mat& x,
                     const Mat& gy) const {
  const auto& w_ = store[w].v;
  auto& gw = grads[w].v;
  auto& gb = grads[b].v;
  Mat gx(x.rows, in);
  for (std::size_t r = 0; r < x.rows; ++r) {
    kern::gemv_transposed_accum(w_.data(), out, in, gy.row(r), gx.row(r));
    kern::outer_accum(gw.data(), out, in, gy.row(r), x.row(r));
    kern::axpy(1.0, gy.row(r), gb.data(), out);
  }
  return gx;
}

Vec Linear::forward_vec(const ParamStore& store, const Vec& x) const {
  require(x.size() == in, "linear: input width mismatch");
  Vec y(out);
  kern::gemv(store[w].v.data(), out, in, x.data(), store[b].v.data(), y.data());
  return y;
}

Vec Linear::backward_vec(const ParamStore& store, ParamStore& grads, const Vec& x,
                         const Vec& gy) const {
  Vec gx(in, 0.0);
  kern::gemv_transposed_accum(store[w].v.data(), out, in, gy.data(), gx.data());
  kern::outer_accum(grads[w].v.data(), out, in, gy.data(), x.data());
  kern::axpy(1.0, gy.data(), grads[b].v.data(), out);
  return gx;
}

// --- LayerNorm ------------------------------------------------------------------

LayerNormLayer LayerNormLayer::create(ParamStore& store, const std::string& prefix,
                                      std::size_t width) {
  LayerNormLayer l;
  l.width = width;
  l.gain = store.add(prefix + ".gain", {width}, InitSpec::ones());
  l.shift = store.add(prefix + ".shift", {width}, InitSpec::zeros());
  return l;
}

Mat LayerNormLayer::forward(const ParamStore& store, const Mat& x, Cache* cache) const {
  require(x.cols == width, "layer norm: width mismatch");
  const auto& g = store[gain].v;
  const auto& s = store[shift].v;
  Mat y(x.rows, width);
  if (cache) {
    cache->xhat = Mat(x.rows, width);
    cache->inv_std.assign(x.rows, 0.0);
  }
  const double d = static_cast<double>(width);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    const double mean = kern::reduce_sum(xr, width) / d;
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    double* yr = y.row(r);
    for (std::size_t c = 0; c < width; ++c) {
      const double xhat = (xr[c] - mean) * inv;
      if (cache) cache->xhat.at(r, c) = xhat;
      yr[c] = xhat * g[c] + s[c];
    }
    if (cache) cache->inv_std[r] = inv;
  }
  return y;
}

Mat LayerNormLayer::backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
                             const Mat& gy) const {
  const auto& g = store[gain].v;
  auto& gg = grads[gain].v;
  auto& gs = grads[shift].v;
  Mat gx(gy.rows, width);
  const double d = static_cast<double>(width);
  Vec gxhat(width);
  for (std::size_t r = 0; r < gy.rows; ++r) {
    const double* gyr = gy.row(r);
    const double* xh = cache.xhat.row(r);
    double mean_gxhat = 0.0, mean_gxhat_xhat = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      gs[c] += gyr[c];
      gg[c] += gyr[c] * xh[c];
      gxhat[c] = gyr[c] * g[c];
      mean_gxhat += gxhat[c];
      mean_gxhat_xhat += gxhat[c] * xh[c];
    }
    mean_gxhat /= d;
    mean_gxhat_xhat /= d;
    const double inv = cache.inv_std[r];
    double* gxr = gx.row(r);
    for (std::size_t c = 0; c < width; ++c)
      gxr[c] = inv * (gxhat[c] - mean_gxhat - xh[c] * mean_gxhat_xhat);
  }
  return gx;
}

// --- Conv1d --------------------------------------------------------------------

Conv1dLayer Conv1dLayer::create(ParamStore& store, const std::string& prefix,
                                std::size_t width_in, std::size_t width_out) {
  Conv1dLayer l;
  l.width_in = width_in;
  l.width_out = width_out;
  l.k = store.add(prefix + ".k", {taps, width_out, width_in},
                  InitSpec::uniform(width_in * taps));
  l.b = store.add(prefix + ".b", {width_out}, InitSpec::uniform(width_in * taps));
  return l;
}

Mat conv1d(const Mat& seq, std::size_t width_out, std::size_t width_in, const Vec& kernel,
           const Vec& bias) {
  require(seq.rows >= 1, "conv1d needs length >= 1");
  require(seq.cols == width_in, "conv1d: input width mismatch");
  require(kernel.size() == Conv1dLayer::taps * width_out * width_in, "conv1d: bad kernel size");
  require(bias.size() == width_out, "conv1d: bad bias size");
  constexpr std::ptrdiff_t pad = 2;
  Mat y(seq.rows, width_out);
  for (std::size_t t = 0; t < seq.rows; ++t) {
    double* yr = y.row(t);
    std::copy(bias.begin(), bias.end(), yr);
    for (std::size_t tap = 0; tap < Conv1dLayer::taps; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + tap) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(seq.rows)) continue;
      kern::gemv_accum(kernel.data() + tap * width_out * width_in, width_out, width_in,
                       seq.row(static_cast<std::size_t>(src)), yr);
    }
  }
  return y;
}

Mat Conv1dLayer::forward(const ParamStore& store, const Mat& x) const {
  return conv1d(x, width_out, width_in, store[k].v, store[b].v);
}

Mat Conv1dLayer::backward(const ParamStore& store, ParamStore& grads, const Mat& x,
                          const Mat& gy) const {
  constexpr std::ptrdiff_t pad = 2;
  const auto& k_ = store[k].v;
  auto& gk = grads[k].v;
  auto& gb = grads[b].v;
  Mat gx(x.rows, width_in);
  const std::size_t tap_stride = width_out * width_in;
  for (std::size_t t = 0; t < x.rows; ++t) {
    const double* gyr = gy.row(t);
    kern::axpy(1.0, gyr, gb.data(), width_out);
    for (std::size_t tap = 0; tap < taps; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + tap) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(x.rows)) continue;
      const std::size_t s = static_cast<std::size_t>(src);
      kern::gemv_transposed_accum(k_.data() + tap * tap_stride, width_out, width_in, gyr,
                                  gx.row(s));
      kern::outer_accum(gk.data() + tap * tap_stride, width_out, width_in, gyr, x.row(s));
    }
  }
  return gx;
}

// --- EmbedMlp --------------------------------------------------------------------

EmbedMlp EmbedMlp::create(ParamStore& store, const std::string& prefix, std::size_t in,
                          std::size_t width) {
  EmbedMlp m;
  m.fc1 = Linear::create(store, prefix + ".fc1", in, width);
  m.fc2 = Linear::create(store, prefix + ".fc2", width, width);
  return m;
}

Mat EmbedMlp::forward(const ParamStore& store, const Mat& x, Cache* cache) const {
  Mat pre = fc1.forward(store, x);
  Mat act(pre.rows, pre.cols);
  kern::relu(pre.v.data(), act.v.data(), pre.size());
  Mat y = fc2.forward(store, act);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return y;
}

Mat EmbedMlp::backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
                       const Mat& gy) const {
  Mat gact = fc2.backward(store, grads, cache.act, gy);
  Mat gpre(gact.rows, gact.cols);
  kern::relu_backward(cache.pre.v.data(), gact.v.data(), gpre.v.data(), gact.size());
  return fc1.backward(store, grads, cache.x, gpre);
}

// --- recurrent directions ----------------------------------------------------------

Mat reverse_rows(const Mat& m) {
  Mat out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    std::memcpy(out.row(r), m.row(m.rows - 1 - r), m.cols * sizeof(double));
  return out;
}

GruDir GruDir::create(ParamStore& store, const std::string& prefix, std::size_t in,
                      std::size_t hidden) {
  GruDir d;
  d.in = in;
  d.hidden = hidden;
  d.wz = store.add(prefix + ".wz", {hidden, in}, InitSpec::uniform(in));
  d.wr = store.add(prefix + ".wr", {hidden, in}, InitSpec::uniform(in));
  d.wc = store.add(prefix + ".wc", {hidden, in}, InitSpec::uniform(in));
  d.uz = store.add(prefix + ".uz", {hidden, hidden}, InitSpec::uniform(hidden));
  d.ur = store.add(prefix + ".ur", {hidden, hidden}, InitSpec::uniform(hidden));
  d.uc = store.add(prefix + ".uc", {hidden, hidden}, InitSpec::uniform(hidden));
  d.bz = store.add(prefix + ".bz", {hidden}, InitSpec::uniform(hidden));
  d.br = store.add(prefix + ".br", {hidden}, InitSpec::uniform(hidden));
  d.bc = store.add(prefix + ".bc", {hidden}, InitSpec::uniform(hidden));
  return d;
}

Mat GruDir::forward(const ParamStore& store, const Mat& x, Cache* cache) const {
  require(x.cols == in, "gru: input width mismatch");
  const std::size_t n = x.rows;
  Mat z(n, hidden), r(n, hidden), c(n, hidden), h(n, hidden);
  Vec hprev(hidden, 0.0), rh(hidden);
  const auto& wz_ = store[wz].v;
  const auto& wr_ = store[wr].v;
  const auto& wc_ = store[wc].v;
  const auto& uz_ = store[uz].v;
  const auto& ur_ = store[ur].v;
  const auto& uc_ = store[uc].v;
  for (std::size_t t = 0; t < n; ++t) {
    double* zt = z.row(t);
    double* rt = r.row(t);
    double* ct = c.row(t);
    double* ht = h.row(t);
    kern::gemv(wz_.data(), hidden, in, x.row(t), store[bz].v.data(), zt);
    kern::gemv_accum(uz_.data(), hidden, hidden, hprev.data(), zt);
    sigmoid_inplace(zt, hidden);
    kern::gemv(wr_.data(), hidden, in, x.row(t), store[br].v.data(), rt);
    kern::gemv_accum(ur_.data(), hidden, hidden, hprev.data(), rt);
    sigmoid_inplace(rt, hidden);
    kern::vmul(rt, hprev.data(), rh.data(), hidden);
    kern::gemv(wc_.data(), hidden, in, x.row(t), store[bc].v.data(), ct);
    kern::gemv_accum(uc_.data(), hidden, hidden, rh.data(), ct);
    tanh_inplace(ct, hidden);
    for (std::size_t i = 0; i < hidden; ++i)
      ht[i] = (1.0 - zt[i]) * hprev[i] + zt[i] * ct[i];
    std::copy(ht, ht + hidden, hprev.begin());
  }
  if (cache) {
    cache->x = x;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->c = std::move(c);
    cache->h = h;
  }
  return h;
}

Mat GruDir::backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
                     const Mat& gh) const {
  const std::size_t n = cache.x.rows;
  Mat gx(n, in);
  Vec dh_next(hidden, 0.0), dh(hidden), dac(hidden), dar(hidden), daz(hidden), drh(hidden),
      rh(hidden);
  const Vec zero(hidden, 0.0);
  const auto& wz_ = store[wz].v;
  const auto& wr_ = store[wr].v;
  const auto& wc_ = store[wc].v;
  const auto& uz_ = store[uz].v;
  const auto& ur_ = store[ur].v;
  const auto& uc_ = store[uc].v;
  for (std::size_t tt = n; tt-- > 0;) {
    const double* zt = cache.z.row(tt);
    const double* rt = cache.r.row(tt);
    const double* ct = cache.c.row(tt);
    const double* hprev = tt > 0 ? cache.h.row(tt - 1) : zero.data();
    kern::vadd(gh.row(tt), dh_next.data(), dh.data(), hidden);
    // h = (1-z) h_prev + z c
    for (std::size_t i = 0; i < hidden; ++i) {
      const double dz = dh[i] * (ct[i] - hprev[i]);
      const double dc = dh[i] * zt[i];
      dh_next[i] = dh[i] * (1.0 - zt[i]);  // becomes dh_prev
      dac[i] = dc * (1.0 - ct[i] * ct[i]);
      daz[i] = dz * zt[i] * (1.0 - zt[i]);
    }
    kern::vmul(rt, hprev, rh.data(), hidden);
    kern::outer_accum(grads[wc].v.data(), hidden, in, dac.data(), cache.x.row(tt));
    kern::outer_accum(grads[uc].v.data(), hidden, hidden, dac.data(), rh.data());
    kern::axpy(1.0, dac.data(), grads[bc].v.data(), hidden);
    std::fill(drh.begin(), drh.end(), 0.0);
    kern::gemv_transposed_accum(uc_.data(), hidden, hidden, dac.data(), drh.data());
    for (std::size_t i = 0; i < hidden; ++i) {
      const double dr = drh[i] * hprev[i];
      dh_next[i] += drh[i] * rt[i];
      dar[i] = dr * rt[i] * (1.0 - rt[i]);
    }
    kern::outer_accum(grads[wr].v.data(), hidden, in, dar.data(), cache.x.row(tt));
    kern::outer_accum(grads[ur].v.data(), hidden, hidden, dar.data(), hprev);
    kern::axpy(1.0, dar.data(), grads[br].v.data(), hidden);
    kern::gemv_transposed_accum(ur_.data(), hidden, hidden, dar.data(), dh_next.data());
    kern::outer_accum(grads[wz].v.data(), hidden, in, daz.data(), cache.x.row(tt));
    kern::outer_accum(grads[uz].v.data(), hidden, hidden, daz.data(), hprev);
    kern::axpy(1.0, daz.data(), grads[bz].v.data(), hidden);
    kern::gemv_transposed_accum(uz_.data(), hidden, hidden, daz.data(), dh_next.data());
    double* gxt = gx.row(tt);
    kern::gemv_transposed_accum(wz_.data(), hidden, in, daz.data(), gxt);
    kern::gemv_transposed_accum(wr_.data(), hidden, in, dar.data(), gxt);
    kern::gemv_transposed_accum(wc_.data(), hidden, in, dac.data(), gxt);
  }
  return gx;
}

LstmDir LstmDir::create(ParamStore& store, const std::string& prefix, std::size_t in,
                        std::size_t hidden) {
  LstmDir d;
  d.in = in;
  d.hidden = hidden;
  const char* gates = "ifog";
  std::size_t* ws[4] = {&d.wi, &d.wf, &d.wo, &d.wg};
  std::size_t* us[4] = {&d.ui, &d.uf, &d.uo, &d.ug};
  std::size_t* bs[4] = {&d.bi, &d.bf, &d.bo, &d.bg};
  for (int g = 0; g < 4; ++g) {
    const std::string gate(1, gates[g]);
    *ws[g] = store.add(prefix + ".w" + gate, {hidden, in}, InitSpec::uniform(in));
    *us[g] = store.add(prefix + ".u" + gate, {hidden, hidden}, InitSpec::uniform(hidden));
    *bs[g] = store.add(prefix + ".b" + gate, {hidden}, InitSpec::uniform(hidden));
  }
  return d;
}

Mat LstmDir::forward(const ParamStore& store, const Mat& x, Cache* cache) const {
  require(x.cols == in, "lstm: input width mismatch");
  const std::size_t n = x.rows;
  Mat im(n, hidden), fm(n, hidden), om(n, hidden), gm(n, hidden), cm(n, hidden), tcm(n, hidden),
      hm(n, hidden);
  Vec hprev(hidden, 0.0), cprev(hidden, 0.0);
  auto gate = [&](std::size_t w, std::size_t b, std::size_t u, std::size_t t, double* dst) {
    kern::gemv(store[w].v.data(), hidden, in, x.row(t), store[b].v.data(), dst);
    kern::gemv_accum(store[u].v.data(), hidden, hidden, hprev.data(), dst);
  };
  for (std::size_t t = 0; t < n; ++t) {
    double* it = im.row(t);
    double* ft = fm.row(t);
    double* ot = om.row(t);
    double* gt = gm.row(t);
    double* ct = cm.row(t);
    double* tct = tcm.row(t);
    double* ht = hm.row(t);
    gate(wi, bi, ui, t, it);
    gate(wf, bf, uf, t, ft);
    gate(wo, bo, uo, t, ot);
    gate(wg, bg, ug, t, gt);
    sigmoid_inplace(it, hidden);
    sigmoid_inplace(ft, hidden);
    sigmoid_inplace(ot, hidden);
    tanh_inplace(gt, hidden);
    for (std::size_t i2 = 0; i2 < hidden; ++i2) {
      ct[i2] = ft[i2] * cprev[i2] + it[i2] * gt[i2];
      tct[i2] = std::tanh(ct[i2]);
      ht[i2] = ot[i2] * tct[i2];
    }
    std::copy(ht, ht + hidden, hprev.begin());
    std::copy(ct, ct + hidden, cprev.begin());
  }
  if (cache) {
    cache->x = x;
    cache->i = std::move(im);
    cache->f = std::move(fm);
    cache->o = std::move(om);
    cache->g = std::move(gm);
    cache->c = std::move(cm);
    cache->tc = std::move(tcm);
    cache->h = hm;
  }
  return hm;
}

Mat LstmDir::backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
                      const Mat& gh) const {
  const std::size_t n = cache.x.rows;
  Mat gx(n, in);
  Vec dh_next(hidden, 0.0), dc_next(hidden, 0.0), dh(hidden), dai(hidden), daf(hidden),
      dao(hidden), dag(hidden);
  const Vec zero(hidden, 0.0);
  for (std::size_t tt = n; tt-- > 0;) {
    const double* it = cache.i.row(tt);
    const double* ft = cache.f.row(tt);
    const double* ot = cache.o.row(tt);
    const double* gt = cache.g.row(tt);
    const double* tct = cache.tc.row(tt);
    const double* cprev = tt > 0 ? cache.c.row(tt - 1) : zero.data();
    kern::vadd(gh.row(tt), dh_next.data(), dh.data(), hidden);
    for (std::size_t i2 = 0; i2 < hidden; ++i2) {
      const double do_ = dh[i2] * tct[i2];
      const double dc = dc_next[i2] + dh[i2] * ot[i2] * (1.0 - tct[i2] * tct[i2]);
      const double df = dc * cprev[i2];
      const double di = dc * gt[i2];
      const double dg = dc * it[i2];
      dc_next[i2] = dc * ft[i2];
      dai[i2] = di * it[i2] * (1.0 - it[i2]);
      daf[i2] = df * ft[i2] * (1.0 - ft[i2]);
      dao[i2] = do_ * ot[i2] * (1.0 - ot[i2]);
      dag[i2] = dg * (1.0 - gt[i2] * gt[i2]);
    }
    const double* hprev = tt > 0 ? cache.h.row(tt - 1) : zero.data();
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    double* gxt = gx.row(tt);
    const std::size_t wid[4] = {wi, wf, wo, wg};
    const std::size_t uid[4] = {ui, uf, uo, ug};
    const std::size_t bid[4] = {bi, bf, bo, bg};
    const Vec* da[4] = {&dai, &daf, &dao, &dag};
    for (int g2 = 0; g2 < 4; ++g2) {
      kern::outer_accum(grads[wid[g2]].v.data(), hidden, in, da[g2]->data(), cache.x.row(tt));
      kern::outer_accum(grads[uid[g2]].v.data(), hidden, hidden, da[g2]->data(), hprev);
      kern::axpy(1.0, da[g2]->data(), grads[bid[g2]].v.data(), hidden);
      kern::gemv_transposed_accum(store[uid[g2]].v.data(), hidden, hidden, da[g2]->data(),
                                  dh_next.data());
      kern::gemv_transposed_accum(store[wid[g2]].v.data(), hidden, in, da[g2]->data(), gxt);
    }
  }
  return gx;
}

// --- bidirectional stacks -----------------------------------------------------------

namespace {

template <typename Dir>
Mat bistack_forward(const BiStack<Dir>& stack, const ParamStore& store, const Mat& x,
                    typename BiStack<Dir>::Cache* cache) {
  require(x.cols == stack.width, "s2s: input width must equal model width");
  Mat cur = x;
  const std::size_t h = stack.width / 2;
  for (int layer = 0; layer < 2; ++layer) {
    Mat fwd = stack.dirs[layer][0].forward(store, cur,
                                           cache ? &cache->cell[layer][0] : nullptr);
    Mat bwd_rev = stack.dirs[layer][1].forward(store, reverse_rows(cur),
                                               cache ? &cache->cell[layer][1] : nullptr);
    Mat bwd = reverse_rows(bwd_rev);
    Mat next(cur.rows, stack.width);
    for (std::size_t r = 0; r < cur.rows; ++r) {
      std::memcpy(next.row(r), fwd.row(r), h * sizeof(double));
      std::memcpy(next.row(r) + h, bwd.row(r), h * sizeof(double));
    }
    cur = std::move(next);
  }
  return cur;
}

template <typename Dir>
Mat bistack_backward(const BiStack<Dir>& stack, const ParamStore& store, ParamStore& grads,
                     const typename BiStack<Dir>::Cache& cache, const Mat& gy) {
  const std::size_t h = stack.width / 2;
  Mat g = gy;
  for (int layer = 1; layer >= 0; --layer) {
    Mat gf(g.rows, h), gb(g.rows, h);
    for (std::size_t r = 0; r < g.rows; ++r) {
      std::memcpy(gf.row(r), g.row(r), h * sizeof(double));
      std::memcpy(gb.row(r), g.row(r) + h, h * sizeof(double));
    }
    Mat gx_f = stack.dirs[layer][0].backward(store, grads, cache.cell[layer][0], gf);
    Mat gx_b_rev =
        stack.dirs[layer][1].backward(store, grads, cache.cell[layer][1], reverse_rows(gb));
    Mat gx_b = reverse_rows(gx_b_rev);
    Mat gsum(g.rows, gx_f.cols);
    kern::vadd(gx_f.v.data(), gx_b.v.data(), gsum.v.data(), gsum.size());
    g = std::move(gsum);
  }
  return g;
}

}  // namespace

GruStack make_gru_stack(ParamStore& store, const std::string& prefix, std::size_t width) {
  require(width % 2 == 0, "gru/lstm model width must be even");
  GruStack s;
  s.width = width;
  const std::size_t h = width / 2;
  const char* dname[2] = {"f", "b"};
  for (int layer = 0; layer < 2; ++layer)
    for (int dir = 0; dir < 2; ++dir)
      s.dirs[layer][dir] = GruDir::create(
          store, prefix + ".l" + std::to_string(layer) + "." + dname[dir], width, h);
  return s;
}

LstmStack make_lstm_stack(ParamStore& store, const std::string& prefix, std::size_t width) {
  require(width % 2 == 0, "gru/lstm model width must be even");
  LstmStack s;
  s.width = width;
  const std::size_t h = width / 2;
  const char* dname[2] = {"f", "b"};
  for (int layer = 0; layer < 2; ++layer)
    for (int dir = 0; dir < 2; ++dir)
      s.dirs[layer][dir] = LstmDir::create(
          store, prefix + ".l" + std::to_string(layer) + "." + dname[dir], width, h);
  return s;
}

// --- transformer ----------------------------------------------------------------------

Mat sinusoidal_positions(std::size_t n, std::size_t width) {
  Mat pe(n, width);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t i = 0; 2 * i < width; ++i) {
      const double rate =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * rate;
      pe.at(pos, 2 * i) = std::sin(angle);
      if (2 * i + 1 < width) pe.at(pos, 2 * i + 1) = std::cos(angle);
    }
  return pe;
}

TransformerBlock TransformerBlock::create(ParamStore& store, const std::string& prefix,
                                          std::size_t width) {
  require(width % 8 == 0, "transformer model width must be divisible by 8 heads");
  TransformerBlock b;
  b.width = width;
  b.heads = 8;
  b.head_dim = width / b.heads;
  b.ff_width = 2 * width;
  b.ln1 = LayerNormLayer::create(store, prefix + ".ln1", width);
  b.q = Linear::create(store, prefix + ".q", width, width);
  b.k = Linear::create(store, prefix + ".k", width, width);
  b.v = Linear::create(store, prefix + ".v", width, width);
  b.o = Linear::create(store, prefix + ".o", width, width);
  b.ln2 = LayerNormLayer::create(store, prefix + ".ln2", width);
  b.ff1 = Linear::create(store, prefix + ".ff1", width, b.ff_width);
  b.ff2 = Linear::create(store, prefix + ".ff2", b.ff_width, width);
  b.lnf = LayerNormLayer::create(store, prefix + ".lnf", width);
  return b;
}

namespace {

Mat head_slice(const Mat& m, std::size_t head, std::size_t head_dim) {
  Mat out(m.rows, head_dim);
  for (std::size_t r = 0; r < m.rows; ++r)
    std::memcpy(out.row(r), m.row(r) + head * head_dim, head_dim * sizeof(double));
  return out;
}

void head_unslice_accum(Mat& dst, const Mat& part, std::size_t head, std::size_t head_dim) {
  for (std::size_t r = 0; r < dst.rows; ++r)
    kern::axpy(1.0, part.row(r), dst.row(r) + head * head_dim, head_dim);
}

void softmax_rows_inplace(Mat& m) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* row = m.row(r);
    const double mx = kern::reduce_max(row, m.cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    kern::vscale(1.0 / sum, row, m.cols);
  }
}

}  // namespace

Mat TransformerBlock::forward(const ParamStore& store, const Mat& x, Cache* cache) const {
  require(x.cols == width, "transformer: input width must equal model width");
  Cache local;
  Cache& c = cache ? *cache : local;
  c.u = x;
  const Mat pe = sinusoidal_positions(x.rows, width);
  kern::vadd(c.u.v.data(), pe.v.data(), c.u.v.data(), c.u.size());
  c.n1 = ln1.forward(store, c.u, &c.ln1c);
  c.qm = q.forward(store, c.n1);
  c.km = k.forward(store, c.n1);
  c.vm = v.forward(store, c.n1);
  c.attn.clear();
  c.concat = Mat(x.rows, width);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (std::size_t h = 0; h < heads; ++h) {
    Mat qh = head_slice(c.qm, h, head_dim);
    Mat kh = head_slice(c.km, h, head_dim);
    Mat vh = head_slice(c.vm, h, head_dim);
    Mat scores(x.rows, x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
      kern::gemv(kh.v.data(), x.rows, head_dim, qh.row(r), nullptr, scores.row(r));
      kern::vscale(scale, scores.row(r), x.rows);
    }
    softmax_rows_inplace(scores);
    Mat oh(x.rows, head_dim);
    for (std::size_t r = 0; r < x.rows; ++r)
      kern::gemv_transposed_accum(vh.v.data(), x.rows, head_dim, scores.row(r), oh.row(r));
    for (std::size_t r = 0; r < x.rows; ++r)
      std::memcpy(c.concat.row(r) + h * head_dim, oh.row(r), head_dim * sizeof(double));
    c.attn.push_back(std::move(scores));
  }
  Mat attn_out = o.forward(store, c.concat);
  c.u2 = Mat(x.rows, width);
  kern::vadd(c.u.v.data(), attn_out.v.data(), c.u2.v.data(), c.u2.size());
  c.n2 = ln2.forward(store, c.u2, &c.ln2c);
  c.ff_pre = ff1.forward(store, c.n2);
  c.ff_act = Mat(c.ff_pre.rows, c.ff_pre.cols);
  kern::relu(c.ff_pre.v.data(), c.ff_act.v.data(), c.ff_pre.size());
  Mat ff_out = ff2.forward(store, c.ff_act);
  Mat u3(x.rows, width);
  kern::vadd(c.u2.v.data(), ff_out.v.data(), u3.v.data(), u3.size());
  return lnf.forward(store, u3, &c.lnfc);
}

Mat TransformerBlock::backward(const ParamStore& store, ParamStore& grads, const Cache& c,
                               const Mat& gy) const {
  const std::size_t n = gy.rows;
  Mat gu3 = lnf.backward(store, grads, c.lnfc, gy);
  // u3 = u2 + ff2(relu(ff1(n2)))
  Mat gff_act = ff2.backward(store, grads, c.ff_act, gu3);
  Mat gff_pre(gff_act.rows, gff_act.cols);
  kern::relu_backward(c.ff_pre.v.data(), gff_act.v.data(), gff_pre.v.data(), gff_act.size());
  Mat gn2 = ff1.backward(store, grads, c.n2, gff_pre);
  Mat gu2 = ln2.backward(store, grads, c.ln2c, gn2);
  kern::vadd(gu2.v.data(), gu3.v.data(), gu2.v.data(), gu2.size());
  // u2 = u + o(concat)
  Mat gconcat = o.backward(store, grads, c.concat, gu2);
  Mat gq(n, width), gk(n, width), gv(n, width);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (std::size_t h = 0; h < heads; ++h) {
    Mat goh = head_slice(gconcat, h, head_dim);
    Mat qh = head_slice(c.qm, h, head_dim);
    Mat kh = head_slice(c.km, h, head_dim);
    Mat vh = head_slice(c.vm, h, head_dim);
    const Mat& a = c.attn[h];
    Mat ga(n, n), gvh(n, head_dim), gqh(n, head_dim), gkh(n, head_dim);
    for (std::size_t r = 0; r < n; ++r) {
      kern::gemv(vh.v.data(), n, head_dim, goh.row(r), nullptr, ga.row(r));
      kern::outer_accum(gvh.v.data(), n, head_dim, a.row(r), goh.row(r));
    }
    // softmax backward: gz = a .* (ga - sum(ga .* a)) then the 1/sqrt(d) scale
    for (std::size_t r = 0; r < n; ++r) {
      double* gar = ga.row(r);
      const double* ar = a.row(r);
      const double s = kern::dot(gar, ar, n);
      for (std::size_t j = 0; j < n; ++j) gar[j] = ar[j] * (gar[j] - s) * scale;
      kern::gemv_transposed_accum(kh.v.data(), n, head_dim, gar, gqh.row(r));
      kern::outer_accum(gkh.v.data(), n, head_dim, gar, qh.row(r));
    }
    head_unslice_accum(gq, gqh, h, head_dim);
    head_unslice_accum(gk, gkh, h, head_dim);
    head_unslice_accum(gv, gvh, h, head_dim);
  }
  Mat gn1 = q.backward(store, grads, c.n1, gq);
  Mat gn1b = k.backward(store, grads, c.n1, gk);
  Mat gn1c = v.backward(store, grads, c.n1, gv);
  kern::vadd(gn1.v.data(), gn1b.v.data(), gn1.v.data(), gn1.size());
  kern::vadd(gn1.v.data(), gn1c.v.data(), gn1.v.data(), gn1.size());
  Mat gu = ln1.backward(store, grads, c.ln1c, gn1);
  kern::vadd(gu.v.data(), gu2.v.data(), gu.v.data(), gu.size());
  return gu;  // positions are constants
}

// --- S2s wrapper -------------------------------------------------------------------------

S2sKind parse_s2s_kind(const std::string& name) {
  if (name == "gru") return S2sKind::gru;
  if (name == "lstm") return S2sKind::lstm;
  if (name == "transformer") return S2sKind::transformer;
  throw std::invalid_argument("unknown s2s encoder kind: " + name);
}

const char* to_string(S2sKind kind) {
  switch (kind) {
    case S2sKind::gru: return "gru";
    case S2sKind::lstm: return "lstm";
    case S2sKind::transformer: return "transformer";
  }
  return "?";
}

S2s S2s::create(ParamStore& store, const std::string& prefix, S2sKind kind, std::size_t width) {
  S2s s;
  s.kind = kind;
  switch (kind) {
    case S2sKind::gru: s.gru = make_gru_stack(store, prefix, width); break;
    case S2sKind::lstm: s.lstm = make_lstm_stack(store, prefix, width); break;
    case S2sKind::transformer: s.tf = TransformerBlock::create(store, prefix, width); break;
  }
  return s;
}

Mat S2s::forward(const ParamStore& store, const Mat& x, Cache* cache) const {
  switch (kind) {
    case S2sKind::gru:
      return bistack_forward(gru, store, x, cache ? &cache->gru : nullptr);
    case S2sKind::lstm:
      return bistack_forward(lstm, store, x, cache ? &cache->lstm : nullptr);
    case S2sKind::transformer:
      return tf.forward(store, x, cache ? &cache->tf : nullptr);
  }
  throw std::invalid_argument("unknown s2s encoder kind");
}

Mat S2s::backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
                  const Mat& gy) const {
  switch (kind) {
    case S2sKind::gru: return bistack_backward(gru, store, grads, cache.gru, gy);
    case S2sKind::lstm: return bistack_backward(lstm, store, grads, cache.lstm, gy);
    case S2sKind::transformer: return tf.backward(store, grads, cache.tf, gy);
  }
  throw std::invalid_argument("unknown s2s encoder kind");
}

}  // namespace hico
