#include "hico/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "hico/common.hpp"

namespace hico {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long parse_ll(const std::string& v) {
  std::size_t used = 0;
  long long out = std::stoll(v, &used);
  require(used == v.size(), "not an integer: " + v);
  return out;
}

std::size_t parse_size(const std::string& v) {
  long long x = parse_ll(v);
  require(x >= 0, "must be non-negative: " + v);
  return static_cast<std::size_t>(x);
}

std::uint64_t parse_u64(const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = std::stoull(v, &used);
  require(used == v.size(), "not an integer: " + v);
  return out;
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double out = std::stod(v, &used);
  require(used == v.size(), "not a number: " + v);
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw std::invalid_argument("expected on/off: " + v);
}

std::vector<std::size_t> parse_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_size(trim(tok)));
  return out;
}

std::string format_double(double x) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) return buf;
  }
  return buf;
}

std::string format_bool(bool b) { return b ? "on" : "off"; }

std::string format_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

struct KeyDef {
  std::string name;
  std::function<void(FullConfig&, const std::string&)> set;
  std::function<std::string(const FullConfig&)> get;
};

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> defs = [] {
    std::vector<KeyDef> r;
    auto add = [&](std::string name, auto set, auto get) {
      r.push_back({std::move(name), set, get});
    };
    // data
    add("data.classes",
        [](FullConfig& c, const std::string& v) { c.data.classes = static_cast<int>(parse_ll(v)); },
        [](const FullConfig& c) { return std::to_string(c.data.classes); });
    add("data.per_class",
        [](FullConfig& c, const std::string& v) { c.data.per_class = static_cast<int>(parse_ll(v)); },
        [](const FullConfig& c) { return std::to_string(c.data.per_class); });
    add("data.test_per_class",
        [](FullConfig& c, const std::string& v) {
          c.data.test_per_class = static_cast<int>(parse_ll(v));
        },
        [](const FullConfig& c) { return std::to_string(c.data.test_per_class); });
    add("data.frames",
        [](FullConfig& c, const std::string& v) { c.data.frames = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.data.frames); });
    add("data.joints",
        [](FullConfig& c, const std::string& v) { c.data.joints = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.data.joints); });
    add("data.sigma",
        [](FullConfig& c, const std::string& v) { c.data.sigma = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.data.sigma); });
    add("data.seed", [](FullConfig& c, const std::string& v) { c.data.seed = parse_u64(v); },
        [](const FullConfig& c) { return std::to_string(c.data.seed); });
    // encoder
    add("encoder.C",
        [](FullConfig& c, const std::string& v) { c.train.enc.C = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.train.enc.C); });
    add("encoder.L",
        [](FullConfig& c, const std::string& v) { c.train.enc.L = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.train.enc.L); });
    add("encoder.kind",
        [](FullConfig& c, const std::string& v) { c.train.enc.kind = parse_s2s_kind(v); },
        [](const FullConfig& c) { return std::string(to_string(c.train.enc.kind)); });
    add("encoder.out_frames",
        [](FullConfig& c, const std::string& v) { c.train.enc.out_frames = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.train.enc.out_frames); });
    add("encoder.joints",
        [](FullConfig& c, const std::string& v) { c.train.enc.joints = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.train.enc.joints); });
    add("encoder.branches",
        [](FullConfig& c, const std::string& v) { c.train.enc.branches = parse_branches(v); },
        [](const FullConfig& c) { return std::string(to_string(c.train.enc.branches)); });
    add("encoder.fusion",
        [](FullConfig& c, const std::string& v) { c.train.enc.fusion = parse_fusion(v); },
        [](const FullConfig& c) { return std::string(to_string(c.train.enc.fusion)); });
    add("encoder.udm",
        [](FullConfig& c, const std::string& v) { c.train.enc.udm = parse_udm_kind(v); },
        [](const FullConfig& c) { return std::string(to_string(c.train.enc.udm)); });
    // augment
    add("augment.shear_amplitude",
        [](FullConfig& c, const std::string& v) { c.train.aug.shear_amplitude = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.train.aug.shear_amplitude); });
    add("augment.jitter_joint_fraction",
        [](FullConfig& c, const std::string& v) {
          c.train.aug.jitter_joint_fraction = parse_double(v);
        },
        [](const FullConfig& c) { return format_double(c.train.aug.jitter_joint_fraction); });
    add("augment.jitter_magnitude",
        [](FullConfig& c, const std::string& v) { c.train.aug.jitter_magnitude = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.train.aug.jitter_magnitude); });
    add("augment.crop_ratio_min",
        [](FullConfig& c, const std::string& v) { c.train.aug.crop_ratio_min = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.train.aug.crop_ratio_min); });
    add("augment.out_frames",
        [](FullConfig& c, const std::string& v) { c.train.aug.out_frames = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.train.aug.out_frames); });
    // train
    add("train.epochs",
        [](FullConfig& c, const std::string& v) { c.train.epochs = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.train.epochs); });
    add("train.batch_size",
        [](FullConfig& c, const std::string& v) { c.train.batch_size = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.train.batch_size); });
    add("train.lr", [](FullConfig& c, const std::string& v) { c.train.lr = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.train.lr); });
    add("train.lr_decay_epochs",
        [](FullConfig& c, const std::string& v) { c.train.lr_decay_epochs = parse_size_list(v); },
        [](const FullConfig& c) { return format_size_list(c.train.lr_decay_epochs); });
    add("train.lr_decay_factor",
        [](FullConfig& c, const std::string& v) { c.train.lr_decay_factor = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.train.lr_decay_factor); });
    add("train.sgd_momentum",
        [](FullConfig& c, const std::string& v) { c.train.sgd_momentum = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.train.sgd_momentum); });
    add("train.weight_decay",
        [](FullConfig& c, const std::string& v) { c.train.weight_decay = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.train.weight_decay); });
    add("train.queue_capacity",
        [](FullConfig& c, const std::string& v) { c.train.queue_capacity = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.train.queue_capacity); });
    add("train.tau", [](FullConfig& c, const std::string& v) { c.train.tau = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.train.tau); });
    add("train.key_momentum",
        [](FullConfig& c, const std::string& v) { c.train.key_momentum = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.train.key_momentum); });
    add("train.seed", [](FullConfig& c, const std::string& v) { c.train.seed = parse_u64(v); },
        [](const FullConfig& c) { return std::to_string(c.train.seed); });
    add("train.workers",
        [](FullConfig& c, const std::string& v) { c.train.workers = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.train.workers); });
    // loss toggles
    add("loss.instance",
        [](FullConfig& c, const std::string& v) { c.train.toggles.instance = parse_bool(v); },
        [](const FullConfig& c) { return format_bool(c.train.toggles.instance); });
    add("loss.domain",
        [](FullConfig& c, const std::string& v) { c.train.toggles.domain = parse_bool(v); },
        [](const FullConfig& c) { return format_bool(c.train.toggles.domain); });
    add("loss.clip_part",
        [](FullConfig& c, const std::string& v) { c.train.toggles.clip_part = parse_bool(v); },
        [](const FullConfig& c) { return format_bool(c.train.toggles.clip_part); });
    // probe
    add("probe.epochs",
        [](FullConfig& c, const std::string& v) { c.probe.epochs = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.probe.epochs); });
    add("probe.lr", [](FullConfig& c, const std::string& v) { c.probe.lr = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.probe.lr); });
    add("probe.decay_epochs",
        [](FullConfig& c, const std::string& v) { c.probe.decay_epochs = parse_size_list(v); },
        [](const FullConfig& c) { return format_size_list(c.probe.decay_epochs); });
    add("probe.decay_factor",
        [](FullConfig& c, const std::string& v) { c.probe.decay_factor = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.probe.decay_factor); });
    add("probe.batch",
        [](FullConfig& c, const std::string& v) { c.probe.batch = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.probe.batch); });
    add("probe.seed", [](FullConfig& c, const std::string& v) { c.probe.seed = parse_u64(v); },
        [](const FullConfig& c) { return std::to_string(c.probe.seed); });
    // finetune
    add("finetune.epochs",
        [](FullConfig& c, const std::string& v) { c.finetune.epochs = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.finetune.epochs); });
    add("finetune.lr",
        [](FullConfig& c, const std::string& v) { c.finetune.lr = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.finetune.lr); });
    add("finetune.decay_epochs",
        [](FullConfig& c, const std::string& v) { c.finetune.decay_epochs = parse_size_list(v); },
        [](const FullConfig& c) { return format_size_list(c.finetune.decay_epochs); });
    add("finetune.decay_factor",
        [](FullConfig& c, const std::string& v) { c.finetune.decay_factor = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.finetune.decay_factor); });
    add("finetune.batch",
        [](FullConfig& c, const std::string& v) { c.finetune.batch = parse_size(v); },
        [](const FullConfig& c) { return std::to_string(c.finetune.batch); });
    add("finetune.label_fraction",
        [](FullConfig& c, const std::string& v) { c.finetune.label_fraction = parse_double(v); },
        [](const FullConfig& c) { return format_double(c.finetune.label_fraction); });
    add("finetune.seed",
        [](FullConfig& c, const std::string& v) { c.finetune.seed = parse_u64(v); },
        [](const FullConfig& c) { return std::to_string(c.finetune.seed); });
    // eval
    add("eval.view",
        [](FullConfig& c, const std::string& v) {
          require(v == "joint" || v == "bone" || v == "motion", "unknown view: " + v);
          c.eval_view = v;
        },
        [](const FullConfig& c) { return c.eval_view; });
    return r;
  }();
  return defs;
}

std::string keys_help() {
  std::string out = "valid keys:";
  for (const auto& def : registry()) out += "\n  " + def.name;
  return out;
}

}  // namespace

FullConfig default_config() { return FullConfig{}; }

std::vector<std::string> known_config_keys() {
  std::vector<std::string> out;
  for (const auto& def : registry()) out.push_back(def.name);
  return out;
}

void set_config_value(FullConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& def : registry())
    if (def.name == key) {
      try {
        def.set(cfg, value);
      } catch (const std::exception& e) {
        throw std::invalid_argument("bad value for " + key + ": " + e.what());
      }
      return;
    }
  throw std::invalid_argument("unknown configuration key: " + key + "\n" + keys_help());
}

std::string get_config_value(const FullConfig& cfg, const std::string& key) {
  for (const auto& def : registry())
    if (def.name == key) return def.get(cfg);
  throw std::invalid_argument("unknown configuration key: " + key + "\n" + keys_help());
}

void apply_config_text(FullConfig& cfg, const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos,
            "config line " + std::to_string(lineno) + " is not key = value");
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

FullConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  FullConfig cfg = default_config();
  apply_config_text(cfg, ss.str());
  return cfg;
}

void apply_overrides(FullConfig& cfg, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const std::size_t eq = kv.find('=');
    require(eq != std::string::npos, "override is not key=value: " + kv);
    set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

std::string serialize_config(const FullConfig& cfg) {
  std::string out;
  for (const auto& def : registry()) out += def.name + " = " + def.get(cfg) + "\n";
  return out;
}

SynthSpec synth_spec_from(const DataConfig& data) {
  SynthSpec spec;
  spec.classes = data.classes;
  spec.per_class_train = data.per_class;
  spec.per_class_test = data.test_per_class;
  spec.frames = data.frames;
  spec.joints = data.joints;
  spec.sigma = data.sigma;
  spec.seed = data.seed;
  return spec;
}

}  // namespace hico
