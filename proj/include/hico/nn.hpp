#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hico/mat.hpp"
#include "hico/rng.hpp"

namespace hico {

// ---------------------------------------------------------------------------
// Parameter storage: named tensors in a stable enumeration order. Gradient
// and optimizer-state stores are zero-filled copies with identical layout, so
// a tensor id is valid across all stores created from the same wiring.
// ---------------------------------------------------------------------------

struct InitSpec {
  enum class Kind { uniform_fanin, zero, one, constant };
  Kind kind = Kind::uniform_fanin;
  std::size_t fan_in = 1;
  double value = 0.0;

  static InitSpec uniform(std::size_t fan_in) { return {Kind::uniform_fanin, fan_in, 0.0}; }
  static InitSpec zeros() { return {Kind::zero, 1, 0.0}; }
  static InitSpec ones() { return {Kind::one, 1, 0.0}; }
  static InitSpec constant(double v) { return {Kind::constant, 1, v}; }
};

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  Vec v;
  InitSpec init;

  std::size_t size() const { return v.size(); }
};

class ParamStore {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t add(std::string name, std::vector<std::size_t> shape, InitSpec init);
  ParamTensor& operator[](std::size_t id) { return tensors_[id]; }
  const ParamTensor& operator[](std::size_t id) const { return tensors_[id]; }
  std::size_t find(const std::string& name) const;
  std::size_t count() const { return tensors_.size(); }
  std::size_t total_values() const;

  ParamStore zeros_like() const;
  void zero_all();
  // draws every tensor in enumeration order; uniform tensors get
  // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  void init_all(Rng& rng);
  void require_all_finite(const std::string& what) const;

  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

 private:
  std::vector<ParamTensor> tensors_;
};

// ---------------------------------------------------------------------------
// Spec-level primitive operations on plain data (used directly and by layers).
// ---------------------------------------------------------------------------

Vec linear_map(const Mat& w, const Vec& b, const Vec& x);  // W x + b
Vec layer_norm_op(const Vec& x, const Vec& gain, const Vec& shift, double eps = 1e-5);

struct PoolCache {
  std::size_t in_rows = 0;
  std::vector<std::uint32_t> argmax;  // input row index per (out position, channel)
};

// non-overlapping windows of 2, stride 2; trailing odd row dropped; length >= 2
Mat maxpool1d(const Mat& seq, PoolCache* cache = nullptr);
Mat maxpool1d_backward(const PoolCache& cache, const Mat& gy, std::size_t width);
Mat meanpool1d(const Mat& seq);
Mat meanpool1d_backward(std::size_t in_rows, const Mat& gy);

// elementwise max over positions (temporal/spatial max pooling over the
// whole sequence)
Vec pool_max_over_rows(const Mat& seq, std::vector<std::uint32_t>* argmax = nullptr);
Mat pool_max_over_rows_backward(std::size_t rows, const std::vector<std::uint32_t>& argmax,
                                const Vec& g);

// ---------------------------------------------------------------------------
// Layers. Each wires tensors into a ParamStore once; forward/backward then
// run against any store with that wiring (query, key, gradients).
// ---------------------------------------------------------------------------

struct Linear {
  std::size_t w = 0, b = 0;
  std::size_t in = 0, out = 0;

  static Linear create(ParamStore& store, const std::string& prefix, std::size_t in,
                       std::size_t out);
  Mat forward(const ParamStore& store, const Mat& x) const;
  Mat backward(const ParamStore& store, ParamStore& grads, const Mat& x, const Mat& gy) const;
  Vec forward_vec(const ParamStore& store, const Vec& x) const;
  Vec backward_vec(const ParamStore& store, ParamStore& grads, const Vec& x, const Vec& gy) const;
};

struct LayerNormLayer {
  std::size_t gain = 0, shift = 0;
  std::size_t width = 0;
  double eps = 1e-5;

  struct Cache {
    Mat xhat;
    Vec inv_std;
  };

  static LayerNormLayer create(ParamStore& store, const std::string& prefix, std::size_t width);
  Mat forward(const ParamStore& store, const Mat& x, Cache* cache) const;
  Mat backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
               const Mat& gy) const;
};

struct Conv1dLayer {
  static constexpr std::size_t taps = 5;  // stride 1, symmetric zero padding 2
  std::size_t k = 0, b = 0;               // kernel stored (taps, out, in)
  std::size_t width_in = 0, width_out = 0;

  static Conv1dLayer create(ParamStore& store, const std::string& prefix, std::size_t width_in,
                            std::size_t width_out);
  Mat forward(const ParamStore& store, const Mat& x) const;
  Mat backward(const ParamStore& store, ParamStore& grads, const Mat& x, const Mat& gy) const;
};

// free-standing conv1d with the same semantics, kernel laid out (taps, out, in)
Mat conv1d(const Mat& seq, std::size_t width_out, std::size_t width_in, const Vec& kernel,
           const Vec& bias);

// two fully connected layers with ReLU between: W2(relu(W1 x + b1)) + b2
struct EmbedMlp {
  Linear fc1, fc2;

  struct Cache {
    Mat x;
    Mat pre;  // fc1 output before ReLU
    Mat act;
  };

  static EmbedMlp create(ParamStore& store, const std::string& prefix, std::size_t in,
                         std::size_t width);
  Mat forward(const ParamStore& store, const Mat& x, Cache* cache) const;
  Mat backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
               const Mat& gy) const;
};

// ---------------------------------------------------------------------------
// Sequence-to-sequence encoders: same-length output of width C.
// GRU/LSTM: two stacked bidirectional layers, C/2 hidden units per direction,
// top-layer outputs. Transformer: one pre-norm block (8 heads, inner width
// 2*C, fixed sinusoidal positions, final layer norm), dropout-free.
// ---------------------------------------------------------------------------

enum class S2sKind { gru, lstm, transformer };
S2sKind parse_s2s_kind(const std::string& name);
const char* to_string(S2sKind kind);

struct GruDir {
  std::size_t wz = 0, wr = 0, wc = 0;  // input weights (hidden x in)
  std::size_t uz = 0, ur = 0, uc = 0;  // recurrent weights (hidden x hidden)
  std::size_t bz = 0, br = 0, bc = 0;
  std::size_t in = 0, hidden = 0;

  struct Cache {
    Mat x, z, r, c, h;
  };

  static GruDir create(ParamStore& store, const std::string& prefix, std::size_t in,
                       std::size_t hidden);
  Mat forward(const ParamStore& store, const Mat& x, Cache* cache) const;
  Mat backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
               const Mat& gh) const;
};

struct LstmDir {
  std::size_t wi = 0, wf = 0, wo = 0, wg = 0;
  std::size_t ui = 0, uf = 0, uo = 0, ug = 0;
  std::size_t bi = 0, bf = 0, bo = 0, bg = 0;
  std::size_t in = 0, hidden = 0;

  struct Cache {
    Mat x, i, f, o, g, c, tc, h;
  };

  static LstmDir create(ParamStore& store, const std::string& prefix, std::size_t in,
                        std::size_t hidden);
  Mat forward(const ParamStore& store, const Mat& x, Cache* cache) const;
  Mat backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
               const Mat& gh) const;
};

template <typename Dir>
struct BiStack {
  std::array<std::array<Dir, 2>, 2> dirs;  // [layer][0 fwd, 1 bwd]
  std::size_t width = 0;

  struct Cache {
    std::array<std::array<typename Dir::Cache, 2>, 2> cell;
  };
};

using GruStack = BiStack<GruDir>;
using LstmStack = BiStack<LstmDir>;

GruStack make_gru_stack(ParamStore& store, const std::string& prefix, std::size_t width);
LstmStack make_lstm_stack(ParamStore& store, const std::string& prefix, std::size_t width);

Mat sinusoidal_positions(std::size_t n, std::size_t width);

struct TransformerBlock {
  std::size_t width = 0, heads = 8, head_dim = 0, ff_width = 0;
  LayerNormLayer ln1, ln2, lnf;
  Linear q, k, v, o, ff1, ff2;

  struct Cache {
    Mat u;  // input + positions
    LayerNormLayer::Cache ln1c;
    Mat n1, qm, km, vm;
    std::vector<Mat> attn;  // per head, rows softmaxed
    Mat concat;
    Mat u2;
    LayerNormLayer::Cache ln2c;
    Mat n2, ff_pre, ff_act;
    LayerNormLayer::Cache lnfc;
  };

  static TransformerBlock create(ParamStore& store, const std::string& prefix, std::size_t width);
  Mat forward(const ParamStore& store, const Mat& x, Cache* cache) const;
  Mat backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
               const Mat& gy) const;
};

struct S2s {
  S2sKind kind = S2sKind::gru;
  GruStack gru;
  LstmStack lstm;
  TransformerBlock tf;

  struct Cache {
    GruStack::Cache gru;
    LstmStack::Cache lstm;
    TransformerBlock::Cache tf;
  };

  static S2s create(ParamStore& store, const std::string& prefix, S2sKind kind,
                    std::size_t width);
  Mat forward(const ParamStore& store, const Mat& x, Cache* cache) const;
  Mat backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
               const Mat& gy) const;
};

inline Mat s2s_encode(const Mat& seq, const S2s& encoder, const ParamStore& params) {
  return encoder.forward(params, seq, nullptr);
}

Mat reverse_rows(const Mat& m);

}  // namespace hico
