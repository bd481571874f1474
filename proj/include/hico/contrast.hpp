#pragma once

#include <utility>
#include <vector>

#include "hico/encoder.hpp"

namespace hico {

// Two-layer MLP projector onto the L2 unit sphere in 128 dimensions.
struct ProjectionHead {
  static constexpr std::size_t out_dim = 128;
  Linear fc1, fc2;
  std::size_t in = 0, hidden = 0;

  struct Cache {
    Vec x, pre, act, raw;
    double inv_norm = 0.0;
  };

  static ProjectionHead create(ParamStore& store, const std::string& prefix, std::size_t in,
                               std::size_t hidden);
  // throws std::runtime_error when the MLP output has zero norm
  Vec forward(const ParamStore& store, const Vec& x, Cache* cache) const;
  Vec backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
               const Vec& gy) const;
};

// Fixed-capacity FIFO of unit-norm vectors backed by a ring buffer.
struct ContrastQueue {
  std::size_t dim = ProjectionHead::out_dim;
  std::size_t capacity = 2048;
  std::vector<double> buf;
  std::size_t head = 0;   // slot of the oldest entry
  std::size_t count = 0;

  ContrastQueue() = default;
  ContrastQueue(std::size_t dim_, std::size_t capacity_)
      : dim(dim_), capacity(capacity_), buf(dim_ * capacity_, 0.0) {}

  std::size_t size() const { return count; }
  const double* entry(std::size_t i) const {  // i-th oldest
    return buf.data() + ((head + i) % capacity) * dim;
  }
  void enqueue(const Vec& v);  // validates dim and unit norm (1 +- 1e-5)
  void enqueue_batch(const std::vector<Vec>& batch);  // batch size <= capacity
  void fill_random_unit(Rng& rng);
};

// -log( sum_p exp(a.p/tau) / (sum_p exp(a.p/tau) + sum_m exp(a.m/tau)) ),
// computed with a max shift. Gradient w.r.t. the anchor is accumulated into
// grad_anchor when non-null; positives and queue entries are constants.
double info_nce_multi(const Vec& anchor, const std::vector<const Vec*>& positives,
                      const ContrastQueue& queue, double tau, Vec* grad_anchor = nullptr);

// symmetric cross-domain pair of InfoNCE terms
double domain_loss(const Vec& v_t, const Vec& v_s, const Vec& v_t_hat, const Vec& v_s_hat,
                   const ContrastQueue& queue_t, const ContrastQueue& queue_s, double tau,
                   Vec* g_vt = nullptr, Vec* g_vs = nullptr);

struct MoCoLossToggles {
  bool instance = true;
  bool domain = true;
  bool clip_part = true;
};

// Projectors for the five contrast levels; domain heads share one 128-d space.
struct HicoHeads {
  ProjectionHead instance, dom_t, dom_s, clip, part;
  bool has_domain = false, has_clip = false, has_part = false;

  static HicoHeads create(ParamStore& store, const EncoderConfig& cfg);
};

struct MoCoConfig {
  EncoderConfig enc;
  std::size_t queue_capacity = 2048;
  double tau = 0.2;
  double key_momentum = 0.999;
  std::uint64_t seed = 1;
};

// Query/key parameter stores over one wiring plus the five FIFO dictionaries.
// Queues start pre-filled with seeded random unit vectors.
struct MoCoState {
  MoCoConfig cfg;
  HicoModel model;
  HicoHeads heads;
  ParamStore query, key;
  ContrastQueue q_instance, q_temporal, q_spatial, q_clip, q_part;

  static MoCoState create(const MoCoConfig& cfg, const SkeletonTopology& topo);
};

// key <- m*key + (1-m)*query, elementwise over every tensor
void momentum_update(MoCoState& state);

// projected unit vectors from the key network for one item
struct KeyFeatures {
  Vec instance, temporal, spatial;
  std::vector<Vec> clip, part;
};

struct LossBreakdown {
  double total = 0.0, instance = 0.0, domain = 0.0, clip = 0.0, part = 0.0;
};

// Batch-mean hierarchical loss. Gradients (query side only) are accumulated
// into `grads` when non-null; key projections are returned through `keys` for
// a later enqueue_key_features call. Queues are read, never written.
LossBreakdown hico_total_loss(
    const MoCoState& state,
    const std::vector<std::pair<SkeletonSequence, SkeletonSequence>>& batch,
    const MoCoLossToggles& toggles, ParamStore* grads = nullptr,
    std::vector<KeyFeatures>* keys = nullptr);

// instance -> M^i, temporal -> M^t, spatial -> M^s, all granularities of
// clip/part -> M^c/M^p, in batch order
void enqueue_key_features(MoCoState& state, const std::vector<KeyFeatures>& keys);

}  // namespace hico
