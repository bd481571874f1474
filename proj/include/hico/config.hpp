#pragma once

#include <string>
#include <vector>

#include "hico/eval.hpp"
#include "hico/train.hpp"

namespace hico {

struct DataConfig {
  int classes = 4;
  int per_class = 100;
  int test_per_class = 0;
  std::size_t frames = 64;
  std::size_t joints = 25;
  double sigma = 0.1;
  std::uint64_t seed = 12345;
};

// Every tunable of the pipeline, addressable as "section.key" in the flat
// key = value configuration format (UTF-8, one key per line, '#' comments).
struct FullConfig {
  DataConfig data;
  TrainConfig train;  // carries encoder/augment/loss sections
  ProbeConfig probe;
  FinetuneConfig finetune;
  std::string eval_view = "joint";
};

FullConfig default_config();
std::vector<std::string> known_config_keys();

// throws std::invalid_argument listing valid keys for unknown keys or
// unparsable values
void set_config_value(FullConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const FullConfig& cfg, const std::string& key);

// file values layered over defaults
FullConfig parse_config_file(const std::string& path);
void apply_config_text(FullConfig& cfg, const std::string& text);
// repeatable "section.key=value" override strings
void apply_overrides(FullConfig& cfg, const std::vector<std::string>& sets);
// canonical echo of every key; parse(serialize(c)) == c
std::string serialize_config(const FullConfig& cfg);

SynthSpec synth_spec_from(const DataConfig& data);

}  // namespace hico
