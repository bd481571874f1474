#include "hico/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>

#include "hico/common.hpp"
#include "hico/kernels.hpp"
#include "hico/train.hpp"

namespace hico {

void EmbeddingTable::append(int label, const Vec& v) {
  if (count() == 0 && dim == 0) dim = v.size();
  require(v.size() == dim, "embedding width mismatch");
  labels.push_back(label);
  data.insert(data.end(), v.begin(), v.end());
}

EmbeddingTable extract_embeddings(const HicoModel& model, const ParamStore& params,
                                  const DatasetManifest& manifest, const std::string& split,
                                  SkeletonView view, const SkeletonTopology& topo) {
  EmbeddingTable table;
  table.dim = model.cfg.instance_width();
  for (std::size_t i : manifest.indices_of_split(split)) {
    SkeletonSequence seq = load_sequence(manifest.items[i].path);
    seq = apply_view(seq, view, topo);
    seq = resample_time(seq, model.cfg.out_frames);
    MultiLevelEmbedding emb = model.forward(params, seq, nullptr);
    table.append(manifest.items[i].label, emb.instance);
  }
  return table;
}

// --- embedding containers -----------------------------------------------------

void save_embeddings_csv(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "label";
  for (std::size_t d = 0; d < table.dim; ++d) out << ",d" << d;
  out << "\n";
  char buf[40];
  for (std::size_t i = 0; i < table.count(); ++i) {
    out << table.labels[i];
    const double* row = table.row(i);
    for (std::size_t d = 0; d < table.dim; ++d) {
      std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<float>(row[d]));
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

void save_embeddings_emb1(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  auto put = [&](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out) throw IoError("short write: " + path);
  };
  put("EMB1", 4);
  const std::uint32_t n = static_cast<std::uint32_t>(table.count());
  const std::uint32_t d = static_cast<std::uint32_t>(table.dim);
  put(&n, 4);
  put(&d, 4);
  for (int label : table.labels) {
    const std::int32_t l = label;
    put(&l, 4);
  }
  std::vector<float> row(table.dim);
  for (std::size_t i = 0; i < table.count(); ++i) {
    const double* src = table.row(i);
    for (std::size_t k = 0; k < table.dim; ++k) row[k] = static_cast<float>(src[k]);
    put(row.data(), row.size() * sizeof(float));
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

EmbeddingTable load_embeddings_emb1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  auto get = [&](void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw IoError(std::string("truncated file while reading ") + what);
  };
  char magic[4];
  get(magic, 4, "magic");
  if (std::memcmp(magic, "EMB1", 4) != 0) throw FormatError("bad EMB1 magic in " + path);
  std::uint32_t n = 0, d = 0;
  get(&n, 4, "count");
  get(&d, 4, "dim");
  EmbeddingTable table;
  table.dim = d;
  table.labels.resize(n);
  for (auto& l : table.labels) {
    std::int32_t v;
    get(&v, 4, "label");
    l = v;
  }
  std::vector<float> row(d);
  table.data.reserve(static_cast<std::size_t>(n) * d);
  for (std::uint32_t i = 0; i < n; ++i) {
    get(row.data(), row.size() * sizeof(float), "data");
    for (float x : row) table.data.push_back(static_cast<double>(x));
  }
  return table;
}

// --- linear probe ---------------------------------------------------------------

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i-- > 1;)
    std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
  return order;
}

double schedule_lr(double base, double factor, const std::vector<std::size_t>& decays,
                   std::size_t epoch) {
  double lr = base;
  for (std::size_t d : decays)
    if (epoch >= d) lr *= factor;
  return lr;
}

int argmax_lowest(const double* x, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > x[best]) best = i;
  return static_cast<int>(best);
}

// mean softmax cross-entropy gradient for one row: g = softmax(z); g[y] -= 1
double softmax_ce(const double* logits, int label, std::size_t k, double* grad) {
  const double mx = kern::reduce_max(logits, k);
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) sum += std::exp(logits[c] - mx);
  const double log_sum = std::log(sum) + mx;
  if (grad) {
    for (std::size_t c = 0; c < k; ++c) grad[c] = std::exp(logits[c] - log_sum);
    grad[label] -= 1.0;
  }
  return log_sum - logits[label];
}

int table_classes(const EmbeddingTable& t) {
  int k = 0;
  for (int l : t.labels) k = std::max(k, l + 1);
  return k;
}

}  // namespace

ProbeResult linear_probe(const EmbeddingTable& train, const EmbeddingTable& test,
                         const ProbeConfig& cfg) {
  require(train.count() > 0 && test.count() > 0, "probe needs non-empty tables");
  require(train.dim == test.dim, "probe feature widths differ");
  const int k = std::max(table_classes(train), table_classes(test));
  if (k < 2) std::cerr << "warning: linear probe over a single class\n";
  const std::size_t d = train.dim;
  Mat w(static_cast<std::size_t>(k), d);
  Vec b(static_cast<std::size_t>(k), 0.0);
  Mat wbuf(w.rows, w.cols);
  Vec bbuf(b.size(), 0.0);
  Mat gw(w.rows, w.cols);
  Vec gb(b.size(), 0.0);
  Vec logits(static_cast<std::size_t>(k)), glog(static_cast<std::size_t>(k));
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = schedule_lr(cfg.lr, cfg.decay_factor, cfg.decay_epochs, epoch);
    Rng rng(mix_seed(cfg.seed, 0x9b0e, epoch));
    const auto order = shuffled(train.count(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const std::size_t end = std::min(begin + cfg.batch, order.size());
      gw.fill(0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const double* x = train.row(order[i]);
        kern::gemv(w.v.data(), w.rows, d, x, b.data(), logits.data());
        softmax_ce(logits.data(), train.labels[order[i]], logits.size(), glog.data());
        kern::vscale(inv, glog.data(), glog.size());
        kern::outer_accum(gw.v.data(), w.rows, d, glog.data(), x);
        kern::axpy(1.0, glog.data(), gb.data(), gb.size());
      }
      kern::sgd_momentum_step(w.v.data(), gw.v.data(), wbuf.v.data(), w.size(), lr,
                              cfg.sgd_momentum, 0.0);
      kern::sgd_momentum_step(b.data(), gb.data(), bbuf.data(), b.size(), lr, cfg.sgd_momentum,
                              0.0);
    }
  }
  ProbeResult result;
  result.test_logits = Mat(test.count(), static_cast<std::size_t>(k));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.count(); ++i) {
    kern::gemv(w.v.data(), w.rows, d, test.row(i), b.data(), result.test_logits.row(i));
    if (argmax_lowest(result.test_logits.row(i), w.rows) == test.labels[i]) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(test.count());
  return result;
}

// --- retrieval ------------------------------------------------------------------

RetrievalResult retrieve_1nn(const EmbeddingTable& query, const EmbeddingTable& gallery) {
  require(gallery.count() > 0, "retrieval needs a non-empty gallery");
  require(query.dim == gallery.dim, "retrieval feature widths differ");
  const std::size_t d = query.dim;
  bool warned = false;
  auto norm_of = [&](const double* x) {
    const double n = std::sqrt(kern::squared_norm(x, d));
    if (n == 0.0 && !warned) {
      std::cerr << "warning: zero-norm embedding row, similarity treated as -inf\n";
      warned = true;
    }
    return n;
  };
  std::vector<double> gnorm(gallery.count());
  for (std::size_t g = 0; g < gallery.count(); ++g) gnorm[g] = norm_of(gallery.row(g));
  RetrievalResult result;
  result.scores = Mat(query.count(), gallery.count());
  std::size_t correct = 0;
  for (std::size_t q = 0; q < query.count(); ++q) {
    const double qn = norm_of(query.row(q));
    double* row = result.scores.row(q);
    for (std::size_t g = 0; g < gallery.count(); ++g) {
      if (qn == 0.0 || gnorm[g] == 0.0) {
        row[g] = -std::numeric_limits<double>::infinity();
      } else {
        row[g] = kern::dot(query.row(q), gallery.row(g), d) / (qn * gnorm[g]);
      }
    }
    const int best = argmax_lowest(row, gallery.count());
    if (gallery.labels[static_cast<std::size_t>(best)] == query.labels[q]) ++correct;
  }
  result.accuracy =
      query.count() ? static_cast<double>(correct) / static_cast<double>(query.count()) : 0.0;
  return result;
}

Mat fuse_view_scores(const std::vector<const Mat*>& tables) {
  require(!tables.empty(), "fusion over zero score tables");
  const std::size_t rows = tables[0]->rows, cols = tables[0]->cols;
  for (const Mat* t : tables)
    require(t->rows == rows && t->cols == cols, "score tables are misaligned");
  Mat out(rows, cols);
  for (const Mat* t : tables) kern::axpy(1.0, t->v.data(), out.v.data(), out.size());
  kern::vscale(1.0 / static_cast<double>(tables.size()), out.v.data(), out.size());
  return out;
}

double classification_accuracy(const Mat& logits, const std::vector<int>& labels) {
  require(logits.rows == labels.size(), "logit/label count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows; ++i)
    if (argmax_lowest(logits.row(i), logits.cols) == labels[i]) ++correct;
  return logits.rows ? static_cast<double>(correct) / static_cast<double>(logits.rows) : 0.0;
}

double retrieval_accuracy(const Mat& scores, const std::vector<int>& query_labels,
                          const std::vector<int>& gallery_labels) {
  require(scores.rows == query_labels.size() && scores.cols == gallery_labels.size(),
          "score table does not match label counts");
  std::size_t correct = 0;
  for (std::size_t q = 0; q < scores.rows; ++q) {
    const int best = argmax_lowest(scores.row(q), scores.cols);
    if (gallery_labels[static_cast<std::size_t>(best)] == query_labels[q]) ++correct;
  }
  return scores.rows ? static_cast<double>(correct) / static_cast<double>(scores.rows) : 0.0;
}

// --- fine-tuning -------------------------------------------------------------------

std::vector<std::size_t> stratified_subset(const std::vector<int>& labels, double fraction,
                                           std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 1.0, "label fraction must be in (0,1]");
  const std::size_t n = labels.size();
  require(fraction * static_cast<double>(n) >= 1.0, "labeled subset would be empty");
  std::map<int, std::vector<std::size_t>> per_class;
  for (std::size_t i = 0; i < n; ++i) per_class[labels[i]].push_back(i);
  bool stratifiable = true;
  for (const auto& [label, idx] : per_class)
    if (std::lround(fraction * static_cast<double>(idx.size())) < 1) stratifiable = false;
  std::vector<std::size_t> out;
  if (!stratifiable) {
    std::cerr << "warning: label fraction too small for stratification; sampling unstratified\n";
    Rng rng(mix_seed(seed, 0x5e1ec7));
    auto order = shuffled(n, rng);
    const std::size_t take =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * n)));
    out.assign(order.begin(), order.begin() + take);
  } else {
    for (auto& [label, idx] : per_class) {
      Rng rng(mix_seed(seed, 0x5e1ec7, static_cast<std::uint64_t>(label)));
      // shuffle within the class, then take the stratum
      for (std::size_t i = idx.size(); i-- > 1;)
        std::swap(idx[i], idx[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
      const std::size_t take =
          static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
      out.insert(out.end(), idx.begin(), idx.begin() + take);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double finetune(const HicoModel& model, const ParamStore& pretrained,
                const DatasetManifest& manifest, SkeletonView view,
                const SkeletonTopology& topo, const FinetuneConfig& cfg) {
  const auto train_idx = manifest.indices_of_split("train");
  const auto test_idx = manifest.indices_of_split("test");
  require(!train_idx.empty() && !test_idx.empty(), "finetune needs train and test splits");

  auto prepare = [&](std::size_t item) {
    SkeletonSequence seq = load_sequence(manifest.items[item].path);
    seq = apply_view(seq, view, topo);
    return resample_time(seq, model.cfg.out_frames);
  };
  std::vector<SkeletonSequence> train_data;
  std::vector<int> train_labels;
  for (std::size_t i : train_idx) {
    train_data.push_back(prepare(i));
    train_labels.push_back(manifest.items[i].label);
  }
  const auto subset = stratified_subset(train_labels, cfg.label_fraction, cfg.seed);

  int k = 0;
  for (int l : train_labels) k = std::max(k, l + 1);
  for (std::size_t i : test_idx) k = std::max(k, manifest.items[i].label + 1);

  ParamStore params = pretrained;  // working copy; the checkpoint stays frozen
  ParamStore enc_buf = params.zeros_like();
  ParamStore enc_grads = params.zeros_like();
  const std::size_t d = model.cfg.instance_width();
  Mat w(static_cast<std::size_t>(k), d);
  Vec b(static_cast<std::size_t>(k), 0.0);
  Mat wbuf(w.rows, w.cols);
  Vec bbuf(b.size(), 0.0);
  Mat gw(w.rows, w.cols);
  Vec gb(b.size(), 0.0);
  Vec logits(static_cast<std::size_t>(k)), glog(static_cast<std::size_t>(k));

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = schedule_lr(cfg.lr, cfg.decay_factor, cfg.decay_epochs, epoch);
    Rng rng(mix_seed(cfg.seed, 0xf17e, epoch));
    auto order = shuffled(subset.size(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const std::size_t end = std::min(begin + cfg.batch, order.size());
      gw.fill(0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      enc_grads.zero_all();
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t item = subset[order[i]];
        HicoModel::Cache cache;
        MultiLevelEmbedding emb = model.forward(params, train_data[item], &cache);
        kern::gemv(w.v.data(), w.rows, d, emb.instance.data(), b.data(), logits.data());
        softmax_ce(logits.data(), train_labels[item], logits.size(), glog.data());
        kern::vscale(inv, glog.data(), glog.size());
        Vec g_feat(d, 0.0);
        kern::gemv_transposed_accum(w.v.data(), w.rows, d, glog.data(), g_feat.data());
        kern::outer_accum(gw.v.data(), w.rows, d, glog.data(), emb.instance.data());
        kern::axpy(1.0, glog.data(), gb.data(), gb.size());
        HicoModel::EmbeddingGrads eg;
        eg.instance = std::move(g_feat);
        model.backward(params, enc_grads, cache, eg);
      }
      sgd_update(params, enc_grads, enc_buf, lr, cfg.sgd_momentum, 0.0);
      kern::sgd_momentum_step(w.v.data(), gw.v.data(), wbuf.v.data(), w.size(), lr,
                              cfg.sgd_momentum, 0.0);
      kern::sgd_momentum_step(b.data(), gb.data(), bbuf.data(), b.size(), lr, cfg.sgd_momentum,
                              0.0);
    }
  }

  std::size_t correct = 0;
  for (std::size_t i : test_idx) {
    SkeletonSequence seq = prepare(i);
    MultiLevelEmbedding emb = model.forward(params, seq, nullptr);
    kern::gemv(w.v.data(), w.rows, d, emb.instance.data(), b.data(), logits.data());
    if (argmax_lowest(logits.data(), logits.size()) == manifest.items[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_idx.size());
}

// --- Davies-Bouldin ------------------------------------------------------------------

double davies_bouldin(const EmbeddingTable& table) {
  require(table.count() >= 2, "DBI needs at least two points");
  std::map<int, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < table.count(); ++i) clusters[table.labels[i]].push_back(i);
  require(clusters.size() >= 2, "DBI needs at least two classes");
  const std::size_t d = table.dim;
  std::vector<Vec> centroid;
  std::vector<double> scatter;
  for (const auto& [label, idx] : clusters) {
    Vec c(d, 0.0);
    for (std::size_t i : idx) kern::axpy(1.0, table.row(i), c.data(), d);
    kern::vscale(1.0 / static_cast<double>(idx.size()), c.data(), d);
    double s = 0.0;
    Vec diff(d);
    for (std::size_t i : idx) {
      kern::vsub(table.row(i), c.data(), diff.data(), d);
      s += std::sqrt(kern::squared_norm(diff.data(), d));
    }
    centroid.push_back(std::move(c));
    scatter.push_back(s / static_cast<double>(idx.size()));
  }
  const std::size_t k = centroid.size();
  double total = 0.0;
  Vec diff(d);
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      kern::vsub(centroid[i].data(), centroid[j].data(), diff.data(), d);
      const double dist = std::sqrt(kern::squared_norm(diff.data(), d));
      if (dist == 0.0) {
        std::cerr << "warning: coincident class centroids; DBI is infinite\n";
        return std::numeric_limits<double>::infinity();
      }
      worst = std::max(worst, (scatter[i] + scatter[j]) / dist);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

}  // namespace hico
