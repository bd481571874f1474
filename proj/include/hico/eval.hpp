#pragma once

#include <string>
#include <vector>

#include "hico/encoder.hpp"

namespace hico {

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<int> labels;
  std::vector<double> data;  // count x dim, row-major

  std::size_t count() const { return labels.size(); }
  const double* row(std::size_t i) const { return data.data() + i * dim; }
  double* row(std::size_t i) { return data.data() + i * dim; }
  void append(int label, const Vec& v);
};

// Instance-level features (pre-projection), deterministic: view transform
// then full-length resample to the encoder's out_frames, no augmentation.
EmbeddingTable extract_embeddings(const HicoModel& model, const ParamStore& params,
                                  const DatasetManifest& manifest, const std::string& split,
                                  SkeletonView view, const SkeletonTopology& topo);

// CSV "label,d0,d1,..." and the EMB1 binary twin
// (magic "EMB1", u32 N, u32 D, i32 labels[N], f32 data[N*D], little-endian).
void save_embeddings_csv(const EmbeddingTable& table, const std::string& path);
void save_embeddings_emb1(const EmbeddingTable& table, const std::string& path);
EmbeddingTable load_embeddings_emb1(const std::string& path);

struct ProbeConfig {
  std::size_t epochs = 80;
  double lr = 2.0;
  std::vector<std::size_t> decay_epochs = {50, 70};
  double decay_factor = 0.1;
  std::size_t batch = 64;
  double sgd_momentum = 0.9;
  std::uint64_t seed = 1;
};

struct ProbeResult {
  double accuracy = 0.0;
  Mat test_logits;  // rows = test items, cols = classes
};

// Single affine layer + softmax cross-entropy over frozen features;
// classifier starts at zero, argmax ties break to the lowest class index.
ProbeResult linear_probe(const EmbeddingTable& train, const EmbeddingTable& test,
                         const ProbeConfig& cfg);

struct RetrievalResult {
  double accuracy = 0.0;
  Mat scores;  // rows = queries, cols = gallery, cosine similarity
};

// Nearest gallery row by cosine similarity; ties break to the lowest gallery
// index; zero-norm rows compare as -inf with a warning.
RetrievalResult retrieve_1nn(const EmbeddingTable& query, const EmbeddingTable& gallery);

// elementwise mean of aligned score tables (similarities or logits)
Mat fuse_view_scores(const std::vector<const Mat*>& tables);

double classification_accuracy(const Mat& logits, const std::vector<int>& labels);
double retrieval_accuracy(const Mat& scores, const std::vector<int>& query_labels,
                          const std::vector<int>& gallery_labels);

struct FinetuneConfig {
  std::size_t epochs = 50;
  double lr = 0.1;
  std::vector<std::size_t> decay_epochs = {50, 70};
  double decay_factor = 0.1;
  std::size_t batch = 64;
  double sgd_momentum = 0.9;
  double label_fraction = 1.0;
  std::uint64_t seed = 1;
};

// seeded class-stratified subset indices into `pool`; falls back to an
// unstratified draw (with a warning) when some class would get zero items
std::vector<std::size_t> stratified_subset(const std::vector<int>& labels, double fraction,
                                           std::uint64_t seed);

// Unfreezes the encoder: trains encoder + linear classifier jointly with SGD
// on the stratified labeled subset; returns top-1 test accuracy.
double finetune(const HicoModel& model, const ParamStore& pretrained,
                const DatasetManifest& manifest, SkeletonView view,
                const SkeletonTopology& topo, const FinetuneConfig& cfg);

// Davies-Bouldin index over labeled embeddings: mean over classes of the
// worst (sigma_i+sigma_j)/dist(c_i,c_j); +inf with a warning when two class
// centroids coincide.
double davies_bouldin(const EmbeddingTable& table);

}  // namespace hico
