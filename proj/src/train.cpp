#include "hico/train.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <future>

#include "hico/common.hpp"
#include "hico/kernels.hpp"

namespace hico {

void TrainConfig::validate() const {
  require(epochs >= 1 && batch_size >= 1, "epochs and batch size must be >= 1");
  require(lr > 0.0 && lr_decay_factor > 0.0, "learning rates must be positive");
  require(sgd_momentum >= 0.0 && weight_decay >= 0.0, "momentum/decay must be >= 0");
  require(queue_capacity >= 1, "queue capacity must be >= 1");
  require(tau > 0.0, "tau must be positive");
  require(key_momentum >= 0.0 && key_momentum <= 1.0, "key momentum must be in [0,1]");
  require(workers >= 1, "workers must be >= 1");
  require(std::is_sorted(lr_decay_epochs.begin(), lr_decay_epochs.end()),
          "decay epochs must be sorted");
  for (std::size_t e : lr_decay_epochs)
    require(e < epochs, "decay epochs must be < total epochs");
  enc.validate();
  aug.validate();
  require(aug.out_frames == enc.out_frames,
          "augment.out_frames must equal encoder.out_frames");
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr;
  for (std::size_t d : cfg.lr_decay_epochs)
    if (epoch >= d) lr *= cfg.lr_decay_factor;
  return lr;
}

void sgd_update(ParamStore& params, const ParamStore& grads, ParamStore& buffers, double lr,
                double momentum, double weight_decay) {
  require(params.count() == grads.count() && params.count() == buffers.count(),
          "sgd_update: store layout mismatch");
  for (std::size_t id = 0; id < params.count(); ++id) {
    const auto& g = grads[id].v;
    if (!all_finite(g.data(), g.size()))
      throw std::runtime_error("non-finite gradient in " + grads[id].name + "; step aborted");
    kern::sgd_momentum_step(params[id].v.data(), g.data(), buffers[id].v.data(), g.size(), lr,
                            momentum, weight_decay);
  }
}

// --- checkpoint container -----------------------------------------------------
// magic "HCKP", u32 version, then length-prefixed config text, u32 epochs,
// three parameter stores, five queues. All integers u32/u64 little-endian,
// tensor data raw f64.

namespace {

void put_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write to checkpoint");
}

template <typename T>
void put(std::ofstream& out, T v) {
  put_bytes(out, &v, sizeof(T));
}

void put_string(std::ofstream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  put_bytes(out, s.data(), s.size());
}

void get_bytes(std::ifstream& in, void* p, std::size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw IoError(std::string("truncated checkpoint while reading ") + what);
}

template <typename T>
T get(std::ifstream& in, const char* what) {
  T v;
  get_bytes(in, &v, sizeof(T), what);
  return v;
}

std::string get_string(std::ifstream& in, const char* what) {
  const auto n = get<std::uint64_t>(in, what);
  std::string s(n, '\0');
  get_bytes(in, s.data(), n, what);
  return s;
}

void put_store(std::ofstream& out, const ParamStore& store) {
  put<std::uint64_t>(out, store.count());
  for (std::size_t id = 0; id < store.count(); ++id) {
    const ParamTensor& t = store[id];
    put_string(out, t.name);
    put<std::uint64_t>(out, t.shape.size());
    for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
    put_bytes(out, t.v.data(), t.v.size() * sizeof(double));
  }
}

ParamStore get_store(std::ifstream& in) {
  ParamStore store;
  const auto n = get<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string name = get_string(in, "tensor name");
    const auto ndim = get<std::uint64_t>(in, "tensor rank");
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = get<std::uint64_t>(in, "tensor shape");
    const std::size_t id = store.add(name, shape, InitSpec::zeros());
    get_bytes(in, store[id].v.data(), store[id].v.size() * sizeof(double), "tensor data");
  }
  return store;
}

void put_queue(std::ofstream& out, const ContrastQueue& q) {
  put<std::uint64_t>(out, q.dim);
  put<std::uint64_t>(out, q.capacity);
  put<std::uint64_t>(out, q.head);
  put<std::uint64_t>(out, q.count);
  put_bytes(out, q.buf.data(), q.buf.size() * sizeof(double));
}

ContrastQueue get_queue(std::ifstream& in) {
  const auto dim = get<std::uint64_t>(in, "queue dim");
  const auto cap = get<std::uint64_t>(in, "queue capacity");
  ContrastQueue q(dim, cap);
  q.head = get<std::uint64_t>(in, "queue head");
  q.count = get<std::uint64_t>(in, "queue count");
  get_bytes(in, q.buf.data(), q.buf.size() * sizeof(double), "queue data");
  return q;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  put_bytes(out, "HCKP", 4);
  put<std::uint32_t>(out, ckpt.version);
  put_string(out, ckpt.config_text);
  put<std::uint32_t>(out, ckpt.epochs_done);
  put_store(out, ckpt.query);
  put_store(out, ckpt.key);
  put_store(out, ckpt.opt_momentum);
  put<std::uint64_t>(out, ckpt.queues.size());
  for (const auto& q : ckpt.queues) put_queue(out, q);
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  char magic[4];
  get_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, "HCKP", 4) != 0) throw FormatError("bad checkpoint magic in " + path);
  Checkpoint ckpt;
  ckpt.version = get<std::uint32_t>(in, "version");
  if (ckpt.version != Checkpoint::current_version)
    throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.version) +
                      " (expected " + std::to_string(Checkpoint::current_version) + ")");
  ckpt.config_text = get_string(in, "config text");
  ckpt.epochs_done = get<std::uint32_t>(in, "epoch counter");
  ckpt.query = get_store(in);
  ckpt.key = get_store(in);
  ckpt.opt_momentum = get_store(in);
  const auto nq = get<std::uint64_t>(in, "queue count");
  for (std::uint64_t i = 0; i < nq; ++i) ckpt.queues.push_back(get_queue(in));
  return ckpt;
}

// --- training loop --------------------------------------------------------------

void write_trace_csv(std::ostream& out, const std::vector<StepLog>& trace, bool header) {
  char line[256];
  if (header) out << "step,epoch,lr,total,instance,domain,clip,part\n";
  for (const StepLog& s : trace) {
    std::snprintf(line, sizeof(line), "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.step,
                  s.epoch, s.lr, s.loss.total, s.loss.instance, s.loss.domain, s.loss.clip,
                  s.loss.part);
    out << line;
  }
}

MoCoState state_from_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg) {
  MoCoConfig mc{cfg.enc, cfg.queue_capacity, cfg.tau, cfg.key_momentum, cfg.seed};
  MoCoState st = MoCoState::create(mc, SkeletonTopology::default_for(cfg.enc.joints));
  require(st.query.count() == ckpt.query.count(),
          "checkpoint does not match the configured model");
  for (std::size_t id = 0; id < st.query.count(); ++id) {
    require(st.query[id].name == ckpt.query[id].name &&
                st.query[id].size() == ckpt.query[id].size(),
            "checkpoint tensor mismatch: " + ckpt.query[id].name);
  }
  st.query = ckpt.query;
  st.key = ckpt.key;
  require(ckpt.queues.size() == 5, "checkpoint must carry five queues");
  st.q_instance = ckpt.queues[0];
  st.q_temporal = ckpt.queues[1];
  st.q_spatial = ckpt.queues[2];
  st.q_clip = ckpt.queues[3];
  st.q_part = ckpt.queues[4];
  return st;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

}  // namespace

PretrainResult pretrain(const DatasetManifest& manifest, const TrainConfig& cfg,
                        const std::string& config_text, std::ostream* trace_csv,
                        const Checkpoint* resume) {
  cfg.validate();
  const auto train_idx = manifest.indices_of_split("train");
  require(!train_idx.empty(), "manifest has no train items");

  std::vector<SkeletonSequence> train_data;
  train_data.reserve(train_idx.size());
  for (std::size_t i : train_idx) train_data.push_back(load_sequence(manifest.items[i].path));

  MoCoConfig mc{cfg.enc, cfg.queue_capacity, cfg.tau, cfg.key_momentum, cfg.seed};
  MoCoState state = resume ? state_from_checkpoint(*resume, cfg)
                           : MoCoState::create(mc, SkeletonTopology::default_for(cfg.enc.joints));
  ParamStore buffers = resume ? resume->opt_momentum : state.query.zeros_like();
  ParamStore grads = state.query.zeros_like();

  const std::size_t n = train_data.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t epoch_start = resume ? resume->epochs_done : 0;
  require(epoch_start <= cfg.epochs, "checkpoint already trained past the configured epochs");

  PretrainResult result;
  if (trace_csv) *trace_csv << "step,epoch,lr,total,instance,domain,clip,part\n";

  std::vector<std::pair<SkeletonSequence, SkeletonSequence>> views(0);
  for (std::size_t epoch = epoch_start; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    Rng shuffle_rng(cfg.seed + epoch);
    const auto order = shuffled_indices(n, shuffle_rng);
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t begin = step * cfg.batch_size;
      const std::size_t end = std::min(begin + cfg.batch_size, n);
      views.assign(end - begin, {});
      auto make_item = [&](std::size_t slot) {
        Rng rng(mix_seed(cfg.seed, epoch, step, slot));
        views[slot] = make_views(train_data[order[begin + slot]], cfg.aug, rng);
      };
      if (cfg.workers > 1) {
        std::vector<std::future<void>> futs;
        const std::size_t w = std::min<std::size_t>(cfg.workers, views.size());
        for (std::size_t t = 0; t < w; ++t)
          futs.push_back(std::async(std::launch::async, [&, t]() {
            for (std::size_t s = t; s < views.size(); s += w) make_item(s);
          }));
        for (auto& f : futs) f.get();
      } else {
        for (std::size_t s = 0; s < views.size(); ++s) make_item(s);
      }

      grads.zero_all();
      std::vector<KeyFeatures> keys;
      const LossBreakdown loss = hico_total_loss(state, views, cfg.toggles, &grads, &keys);
      if (!std::isfinite(loss.total))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(step));
      sgd_update(state.query, grads, buffers, lr, cfg.sgd_momentum, cfg.weight_decay);
      momentum_update(state);
      enqueue_key_features(state, keys);

      StepLog log{epoch * steps_per_epoch + step, epoch, lr, loss};
      if (trace_csv) write_trace_csv(*trace_csv, {log}, false);
      result.trace.push_back(log);
    }
  }

  Checkpoint& ckpt = result.checkpoint;
  ckpt.config_text = config_text;
  ckpt.epochs_done = static_cast<std::uint32_t>(cfg.epochs);
  ckpt.query = std::move(state.query);
  ckpt.key = std::move(state.key);
  ckpt.opt_momentum = std::move(buffers);
  ckpt.queues = {state.q_instance, state.q_temporal, state.q_spatial, state.q_clip,
                 state.q_part};
  return result;
}

}  // namespace hico
