#pragma once

#include <string>
#include <vector>

#include "hico/data.hpp"
#include "hico/nn.hpp"

namespace hico {

enum class Branches { both, temporal, spatial };
enum class Fusion { concat, sum, product, weighted };
enum class UdmKind { conv_max, conv_mean, max_only, mean_only };

Branches parse_branches(const std::string& s);
Fusion parse_fusion(const std::string& s);
UdmKind parse_udm_kind(const std::string& s);
const char* to_string(Branches b);
const char* to_string(Fusion f);
const char* to_string(UdmKind u);

struct EncoderConfig {
  std::size_t C = 512;          // embedding and encoder width
  std::size_t L = 4;            // granularities per branch
  S2sKind kind = S2sKind::transformer;
  std::size_t out_frames = 64;  // frames after augmentation
  std::size_t joints = 25;
  Branches branches = Branches::both;
  Fusion fusion = Fusion::concat;
  UdmKind udm = UdmKind::conv_max;

  bool has_temporal() const { return branches != Branches::spatial; }
  bool has_spatial() const { return branches != Branches::temporal; }
  std::size_t domain_width() const { return fusion == Fusion::concat ? L * C : C; }
  std::size_t instance_width() const {
    if (branches != Branches::both) return domain_width();
    return fusion == Fusion::concat ? 2 * domain_width() : domain_width();
  }
  void validate() const;
};

// Unified downsampling module: halves the sequence length.
// conv_* variants run Conv1D(k=5,s=1) -> ReLU -> LayerNorm before the pool.
struct UdmModule {
  UdmKind kind = UdmKind::conv_max;
  bool has_conv = true;
  Conv1dLayer conv;
  LayerNormLayer ln;
  std::size_t width = 0;

  struct Cache {
    Mat in, conv_out, relu_out, ln_out;
    LayerNormLayer::Cache lnc;
    PoolCache pool;
    std::size_t pooled_from_rows = 0;
  };

  static UdmModule create(ParamStore& store, const std::string& prefix, std::size_t width,
                          UdmKind kind);
  Mat forward(const ParamStore& store, const Mat& x, Cache* cache) const;
  Mat backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
               const Mat& gy) const;
};

// One branch: token embedding, a shared UDM applied L-1 times, a shared S2S
// encoder per granularity, max pooling over positions per granularity.
struct BranchModule {
  std::size_t in_width = 0, C = 0, L = 1;
  EmbedMlp embed;
  UdmModule udm;
  S2s s2s;

  struct Cache {
    EmbedMlp::Cache emb;
    std::vector<Mat> levels;  // X_1..X_L
    std::vector<UdmModule::Cache> udmc;
    std::vector<S2s::Cache> s2sc;
    std::vector<Mat> s2s_out;
    std::vector<std::vector<std::uint32_t>> tmp_argmax;
  };

  static BranchModule create(ParamStore& store, const std::string& prefix, std::size_t in_width,
                             std::size_t C, std::size_t L, S2sKind kind, UdmKind udm);
  std::vector<Vec> forward(const ParamStore& store, const Mat& rows, Cache* cache) const;
  // g_levels[l] may be empty (treated as zero); input gradients are discarded
  void backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
                const std::vector<Vec>& g_levels) const;
};

struct MultiLevelEmbedding {
  std::vector<Vec> clip;  // per-granularity vectors of the temporal branch
  std::vector<Vec> part;  // per-granularity vectors of the spatial branch
  Vec temporal;           // fused clip vectors
  Vec spatial;            // fused part vectors
  Vec instance;           // fused domain vectors; the downstream representation
};

struct HicoModel {
  EncoderConfig cfg;
  SkeletonTopology topo;
  BranchModule tbr, sbr;
  // weighted-fusion coefficients (only wired for Fusion::weighted)
  std::size_t wt = ParamStore::npos, ws = ParamStore::npos, wi = ParamStore::npos;

  struct Cache {
    BranchModule::Cache t, s;
    MultiLevelEmbedding emb;
  };

  struct EmbeddingGrads {
    Vec instance, temporal, spatial, clip1, part1;  // empty = zero
  };

  static HicoModel create(ParamStore& store, const EncoderConfig& cfg,
                          const SkeletonTopology& topo);
  MultiLevelEmbedding forward(const ParamStore& store, const SkeletonSequence& seq,
                              Cache* cache) const;
  void backward(const ParamStore& store, ParamStore& grads, const Cache& cache,
                const EmbeddingGrads& g) const;
};

inline MultiLevelEmbedding hico_forward(const SkeletonSequence& seq, const ParamStore& params,
                                        const HicoModel& model) {
  return model.forward(params, seq, nullptr);
}

// Fusion over K vectors of equal width (concat widens instead). Weighted
// fusion takes K coefficients; grad_weights may be null when not learned.
Vec fuse_vectors(Fusion fusion, const std::vector<const Vec*>& inputs, const double* weights);
void fuse_vectors_backward(Fusion fusion, const std::vector<const Vec*>& inputs,
                           const double* weights, const Vec& g, std::vector<Vec>& g_inputs,
                           double* g_weights);

}  // namespace hico
