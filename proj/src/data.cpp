#include "hico/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "hico/common.hpp"
#include "hico/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "SKL1/EMB1 containers assume a little-endian host");

namespace hico {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'L', '1'};

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write");
}

void read_bytes(std::ifstream& in, void* p, std::size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw IoError(std::string("truncated file while reading ") + what);
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const char* what) {
  T v;
  read_bytes(in, &v, sizeof(T), what);
  return v;
}

}  // namespace

void SkeletonSequence::validate() const {
  require(frames >= 1 && joints >= 1, "sequence needs T >= 1 and J >= 1");
  require(xyz.size() == frames * joints * 3, "coordinate buffer size mismatch");
  require(all_finite(xyz.data(), xyz.size()), "sequence has non-finite coordinates");
  require(label >= -1, "label must be -1 (none) or a non-negative class id");
}

void SkeletonTopology::validate() const {
  const std::size_t j = joints();
  require(j >= 1, "topology needs at least one joint");
  require(edges.size() == j - 1, "tree over J joints needs J-1 edges");
  std::vector<int> seen(j, 0);
  for (int idx : joint_order) {
    require(idx >= 0 && static_cast<std::size_t>(idx) < j, "joint_order index out of range");
    require(!seen[idx]++, "joint_order is not a permutation");
  }
  std::vector<int> parent(j, -1);
  std::vector<int> indeg(j, 0);
  for (auto [p, c] : edges) {
    require(p >= 0 && c >= 0 && static_cast<std::size_t>(p) < j &&
                static_cast<std::size_t>(c) < j,
            "edge index out of range");
    require(p != c, "self edge");
    require(indeg[c]++ == 0, "joint has two parents");
    parent[c] = p;
  }
  // exactly one root and no cycles
  int roots = 0;
  for (std::size_t i = 0; i < j; ++i)
    if (parent[i] < 0) ++roots;
  require(roots == 1, "tree must have exactly one root");
  for (std::size_t i = 0; i < j; ++i) {
    std::size_t hops = 0;
    for (int a = static_cast<int>(i); parent[a] >= 0; a = parent[a])
      require(++hops <= j, "cycle in topology edges");
  }
}

SkeletonTopology SkeletonTopology::body25() {
  SkeletonTopology topo;
  // (parent, child); 0 = spine base
  topo.edges = {
      {0, 1},  {1, 20},  {20, 2},  {2, 3},            // spine, neck, head
      {20, 4}, {4, 5},   {5, 6},   {6, 7},  {7, 21},  {7, 22},   // left arm
      {20, 8}, {8, 9},   {9, 10},  {10, 11}, {11, 23}, {11, 24},  // right arm
      {0, 12}, {12, 13}, {13, 14}, {14, 15},           // left leg
      {0, 16}, {16, 17}, {17, 18}, {18, 19},           // right leg
  };
  topo.joint_order = {0, 1,  20, 2,  3,  4,  5,  6,  7,  21, 22, 8, 9,
                      10, 11, 23, 24, 12, 13, 14, 15, 16, 17, 18, 19};
  return topo;
}

SkeletonTopology SkeletonTopology::chain(std::size_t joints) {
  SkeletonTopology topo;
  for (std::size_t j = 1; j < joints; ++j)
    topo.edges.emplace_back(static_cast<int>(j - 1), static_cast<int>(j));
  topo.joint_order.resize(joints);
  for (std::size_t j = 0; j < joints; ++j) topo.joint_order[j] = static_cast<int>(j);
  return topo;
}

SkeletonTopology SkeletonTopology::default_for(std::size_t joints) {
  return joints == 25 ? body25() : chain(joints);
}

std::vector<std::size_t> DatasetManifest::indices_of_split(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].split == split) out.push_back(i);
  return out;
}

int DatasetManifest::num_classes() const {
  int k = 0;
  for (const auto& it : items) k = std::max(k, it.label + 1);
  return k;
}

void DatasetManifest::validate() const {
  require(!items.empty(), "manifest has no items");
  std::set<int> labels;
  for (const auto& it : items) {
    require(it.label >= 0, "manifest labels must be non-negative");
    require(it.split == "train" || it.split == "test", "unknown split tag: " + it.split);
    labels.insert(it.label);
  }
  int expect = 0;
  for (int l : labels)
    if (l != expect++) throw FormatError("manifest labels are not dense from 0");
}

void save_sequence(const SkeletonSequence& seq, const std::string& path) {
  seq.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_bytes(out, kMagic, 4);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(seq.frames));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(seq.joints));
  write_pod<std::int32_t>(out, seq.label);
  std::string meta;
  for (const auto& [k, v] : seq.meta) meta += k + "=" + v + "\n";
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  write_bytes(out, meta.data(), meta.size());
  write_bytes(out, seq.xyz.data(), seq.xyz.size() * sizeof(float));
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

SkeletonSequence load_sequence(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  char magic[4];
  read_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad SKL1 magic in " + path);
  SkeletonSequence seq;
  seq.frames = read_pod<std::uint32_t>(in, "frame count");
  seq.joints = read_pod<std::uint32_t>(in, "joint count");
  if (seq.frames < 1 || seq.joints < 1) throw FormatError("bad SKL1 header in " + path);
  seq.label = read_pod<std::int32_t>(in, "label");
  const auto meta_len = read_pod<std::uint32_t>(in, "meta length");
  std::string meta(meta_len, '\0');
  read_bytes(in, meta.data(), meta_len, "meta");
  std::size_t pos = 0;
  while (pos < meta.size()) {
    std::size_t eol = meta.find('\n', pos);
    if (eol == std::string::npos) eol = meta.size();
    std::string line = meta.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad meta line in " + path);
    seq.meta.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  seq.xyz.resize(seq.frames * seq.joints * 3);
  read_bytes(in, seq.xyz.data(), seq.xyz.size() * sizeof(float), "coordinates");
  if (!all_finite(seq.xyz.data(), seq.xyz.size()))
    throw FormatError("non-finite coordinates in " + path);
  return seq;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& it : manifest.items)
    out << it.path << '\t' << it.label << '\t' << it.split << '\n';
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  DatasetManifest manifest;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw FormatError("manifest line " + std::to_string(lineno) + " is not path\\tlabel\\tsplit");
    ManifestItem item;
    item.path = line.substr(0, t1);
    try {
      item.label = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
    } catch (const std::exception&) {
      throw FormatError("bad label on manifest line " + std::to_string(lineno));
    }
    item.split = line.substr(t2 + 1);
    if (!item.split.empty() && item.split.back() == '\r') item.split.pop_back();
    std::filesystem::path p(item.path);
    if (p.is_relative()) item.path = (base / p).string();
    manifest.items.push_back(std::move(item));
  }
  manifest.validate();
  for (const auto& it : manifest.items)
    if (!std::filesystem::exists(it.path)) throw FormatError("manifest path missing: " + it.path);
  return manifest;
}

SkeletonSequence resample_time(const SkeletonSequence& seq, std::size_t t_out) {
  require(seq.frames >= 1, "resample_time needs T >= 1");
  require(t_out >= 1, "resample_time needs T_out >= 1");
  SkeletonSequence out(t_out, seq.joints);
  out.label = seq.label;
  out.meta = seq.meta;
  const std::size_t stride = seq.joints * 3;
  for (std::size_t i = 0; i < t_out; ++i) {
    double pos = 0.0;
    if (t_out > 1 && seq.frames > 1)
      pos = static_cast<double>(i * (seq.frames - 1)) / static_cast<double>(t_out - 1);
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 >= seq.frames - 1) i0 = seq.frames - 1;
    const double frac = pos - static_cast<double>(i0);
    const std::size_t i1 = i0 + 1 < seq.frames ? i0 + 1 : i0;
    const float* f0 = seq.xyz.data() + i0 * stride;
    const float* f1 = seq.xyz.data() + i1 * stride;
    float* dst = out.xyz.data() + i * stride;
    for (std::size_t k = 0; k < stride; ++k)
      dst[k] = static_cast<float>((1.0 - frac) * f0[k] + frac * f1[k]);
  }
  return out;
}

SkeletonSequence to_bone(const SkeletonSequence& seq, const SkeletonTopology& topo) {
  topo.validate();
  require(topo.joints() == seq.joints, "topology joint count does not match sequence");
  SkeletonSequence out(seq.frames, seq.joints);
  out.label = seq.label;
  out.meta = seq.meta;
  for (std::size_t t = 0; t < seq.frames; ++t)
    for (auto [p, c] : topo.edges)
      for (std::size_t k = 0; k < 3; ++k)
        out.at(t, c, k) = seq.at(t, c, k) - seq.at(t, p, k);
  return out;
}

SkeletonSequence to_motion(const SkeletonSequence& seq) {
  require(seq.frames >= 1, "to_motion needs T >= 1");
  SkeletonSequence out(seq.frames, seq.joints);
  out.label = seq.label;
  out.meta = seq.meta;
  const std::size_t stride = seq.joints * 3;
  for (std::size_t t = 0; t + 1 < seq.frames; ++t)
    for (std::size_t k = 0; k < stride; ++k)
      out.xyz[t * stride + k] = seq.xyz[(t + 1) * stride + k] - seq.xyz[t * stride + k];
  return out;
}

SkeletonSequence apply_view(const SkeletonSequence& seq, SkeletonView view,
                            const SkeletonTopology& topo) {
  switch (view) {
    case SkeletonView::joint: return seq;
    case SkeletonView::bone: return to_bone(seq, topo);
    case SkeletonView::motion: return to_motion(seq);
  }
  throw std::invalid_argument("unknown skeleton view");
}

namespace {

double unit_hash(std::uint64_t x) {  // [0,1)
  return static_cast<double>(splitmix64(x) >> 11) * 0x1.0p-53;
}

}  // namespace

SkeletonSequence synth_sequence(const SynthSpec& spec, int klass, int index, bool test_split) {
  require(spec.classes >= 1 && spec.frames >= 1 && spec.joints >= 1, "synth counts must be >= 1");
  require(klass >= 0 && klass < spec.classes, "class id out of range");
  SkeletonSequence seq(spec.frames, spec.joints);
  seq.label = klass;
  Rng noise(mix_seed(spec.seed, static_cast<std::uint64_t>(klass),
                     static_cast<std::uint64_t>(index), test_split ? 1 : 0));
  const double two_pi = 6.283185307179586476925286766559;
  const double omega = two_pi * static_cast<double>(klass + 1) / static_cast<double>(spec.frames);
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t j = 0; j < spec.joints; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        const std::uint64_t jc = j * 3 + c;
        const double phase = two_pi * unit_hash(mix_seed(0x9e11, jc));
        const double base = 2.0 * unit_hash(mix_seed(0xba5e, jc)) - 1.0;
        const double eps = spec.sigma == 0.0 ? 0.0 : spec.sigma * noise.normal();
        seq.at(t, j, c) =
            static_cast<float>(0.5 * std::sin(omega * static_cast<double>(t) + phase) + base + eps);
      }
  return seq;
}

DatasetManifest synth_dataset(const SynthSpec& spec, const std::string& out_dir) {
  require(spec.classes >= 1 && spec.per_class_train >= 1, "synth counts must be >= 1");
  require(spec.per_class_test >= 0, "per-class test count must be >= 0");
  std::filesystem::create_directories(out_dir);
  DatasetManifest manifest;
  char name[64];
  auto emit = [&](int klass, int index, bool test_split) {
    SkeletonSequence seq = synth_sequence(spec, klass, index, test_split);
    std::snprintf(name, sizeof(name), "%s_c%02d_i%05d.skl", test_split ? "test" : "train", klass,
                  index);
    save_sequence(seq, (std::filesystem::path(out_dir) / name).string());
    manifest.items.push_back({name, klass, test_split ? "test" : "train"});
  };
  for (int k = 0; k < spec.classes; ++k)
    for (int i = 0; i < spec.per_class_train; ++i) emit(k, i, false);
  for (int k = 0; k < spec.classes; ++k)
    for (int i = 0; i < spec.per_class_test; ++i) emit(k, i, true);
  save_manifest(manifest, (std::filesystem::path(out_dir) / "manifest.tsv").string());
  // return with resolvable absolute-ish paths
  return load_manifest((std::filesystem::path(out_dir) / "manifest.tsv").string());
}

Mat time_major_rows(const SkeletonSequence& seq) {
  Mat rows(seq.frames, seq.joints * 3);
  for (std::size_t t = 0; t < seq.frames; ++t) {
    double* dst = rows.row(t);
    const float* src = seq.xyz.data() + t * seq.joints * 3;
    for (std::size_t k = 0; k < seq.joints * 3; ++k) dst[k] = static_cast<double>(src[k]);
  }
  return rows;
}

Mat space_major_rows(const SkeletonSequence& seq, const std::vector<int>& joint_order) {
  require(joint_order.size() == seq.joints, "joint_order size does not match sequence");
  Mat rows(seq.joints, seq.frames * 3);
  for (std::size_t r = 0; r < seq.joints; ++r) {
    const std::size_t j = static_cast<std::size_t>(joint_order[r]);
    require(j < seq.joints, "joint_order index out of range");
    double* dst = rows.row(r);
    for (std::size_t t = 0; t < seq.frames; ++t)
      for (std::size_t c = 0; c < 3; ++c)
        dst[t * 3 + c] = static_cast<double>(seq.at(t, j, c));
  }
  return rows;
}

}  // namespace hico
