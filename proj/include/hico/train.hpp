#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hico/augment.hpp"
#include "hico/contrast.hpp"

namespace hico {

struct TrainConfig {
  std::size_t epochs = 450;
  std::size_t batch_size = 64;
  double lr = 0.01;
  std::vector<std::size_t> lr_decay_epochs = {350};
  double lr_decay_factor = 0.1;
  double sgd_momentum = 0.9;
  double weight_decay = 0.0001;
  std::size_t queue_capacity = 2048;
  double tau = 0.2;
  double key_momentum = 0.999;
  std::uint64_t seed = 1;
  std::size_t workers = 1;  // data loading/augmentation parallelism only
  EncoderConfig enc;
  AugmentConfig aug;
  MoCoLossToggles toggles;

  void validate() const;
};

// lr * factor^(number of decay epochs already reached)
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

// For each tensor: g = grad + weight_decay*theta; buf = momentum*buf + g;
// theta -= lr*buf. Throws std::runtime_error (naming the tensor) on
// non-finite gradients.
void sgd_update(ParamStore& params, const ParamStore& grads, ParamStore& buffers, double lr,
                double momentum, double weight_decay);

struct Checkpoint {
  static constexpr std::uint32_t current_version = 1;
  std::uint32_t version = current_version;
  std::string config_text;  // effective configuration snapshot
  std::uint32_t epochs_done = 0;
  ParamStore query, key, opt_momentum;
  std::vector<ContrastQueue> queues;  // instance, temporal, spatial, clip, part
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> trace;
};

// writes "step,epoch,lr,total,instance,domain,clip,part" rows when trace_csv
// is non-null (doubles printed with round-trip precision)
void write_trace_csv(std::ostream& out, const std::vector<StepLog>& trace, bool header);

// One training step is forward -> loss -> backward -> SGD step -> momentum
// update -> enqueue. Items are shuffled per epoch with seed base_seed+epoch;
// augmentation streams derive from (seed, epoch, step, slot, view). Resuming
// from a checkpoint continues at its stored epoch counter.
PretrainResult pretrain(const DatasetManifest& manifest, const TrainConfig& cfg,
                        const std::string& config_text = "", std::ostream* trace_csv = nullptr,
                        const Checkpoint* resume = nullptr);

// rebuilds wiring for a checkpoint produced with the given encoder config
MoCoState state_from_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg);

}  // namespace hico
