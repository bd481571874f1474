#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hico/common.hpp"
#include "hico/mat.hpp"

namespace hico {

// One skeleton sequence: T frames x J joints x 3 coordinates, stored float32
// in (frame, joint, coordinate) order. label -1 means unlabeled.
struct SkeletonSequence {
  std::size_t frames = 0;  // T
  std::size_t joints = 0;  // J
  std::vector<float> xyz;  // frames * joints * 3
  int label = -1;
  std::vector<std::pair<std::string, std::string>> meta;

  SkeletonSequence() = default;
  SkeletonSequence(std::size_t t, std::size_t j)
      : frames(t), joints(j), xyz(t * j * 3, 0.0f) {}

  float& at(std::size_t t, std::size_t j, std::size_t c) {
    return xyz[(t * joints + j) * 3 + c];
  }
  float at(std::size_t t, std::size_t j, std::size_t c) const {
    return xyz[(t * joints + j) * 3 + c];
  }

  // throws std::invalid_argument on violated invariants (T,J >= 1, finite)
  void validate() const;
};

// Kinematic tree over J joints plus the joint traversal order used for
// spatial adjacency (nearby rows = nearby joints).
struct SkeletonTopology {
  std::vector<std::pair<int, int>> edges;  // (parent, child)
  std::vector<int> joint_order;            // permutation of 0..J-1

  std::size_t joints() const { return joint_order.size(); }
  void validate() const;  // edges form a tree, joint_order is a permutation

  // 25-joint body tree (spine/head/arms/hands/legs); joint_order is a
  // depth-first traversal so anatomically adjacent joints sit in adjacent rows
  static SkeletonTopology body25();
  // path 0-1-...-J-1 for joint counts without a canonical body layout
  static SkeletonTopology chain(std::size_t joints);
  static SkeletonTopology default_for(std::size_t joints);  // body25 at J=25, else chain
};

struct ManifestItem {
  std::string path;
  int label = 0;
  std::string split;  // "train" or "test"
};

struct DatasetManifest {
  std::vector<ManifestItem> items;

  std::vector<std::size_t> indices_of_split(const std::string& split) const;
  int num_classes() const;
  void validate() const;  // labels dense 0..K-1, splits known
};

// --- SKL1 container ---------------------------------------------------------
// magic "SKL1", u32 T, u32 J, i32 label, u32 meta byte length, meta text
// ("key=value\n" lines), then T*J*3 float32, all little-endian.
void save_sequence(const SkeletonSequence& seq, const std::string& path);
SkeletonSequence load_sequence(const std::string& path);

// --- manifest ----------------------------------------------------------------
// UTF-8 text, one "path<TAB>label<TAB>split" record per line. Relative paths
// are resolved against the manifest's directory on load.
void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Linear temporal resampling to t_out frames; frame i samples input position
// i*(T-1)/(t_out-1); degenerate T=1 or t_out=1 replicate frame 0.
SkeletonSequence resample_time(const SkeletonSequence& seq, std::size_t t_out);

// bone[t][child] = frames[t][child] - frames[t][parent], zero at the root
SkeletonSequence to_bone(const SkeletonSequence& seq, const SkeletonTopology& topo);

// motion[t] = frames[t+1] - frames[t]; last frame zero
SkeletonSequence to_motion(const SkeletonSequence& seq);

enum class SkeletonView { joint, bone, motion };
SkeletonSequence apply_view(const SkeletonSequence& seq, SkeletonView view,
                            const SkeletonTopology& topo);

// --- synthetic benchmark dataset ---------------------------------------------
// Class k draws coordinate c of joint j at frame t from
//   0.5 * sin(2*pi*(k+1)*t/T + phase(j,c)) + base(j,c) + eps
// with phase/base deterministic hashes of (j,c) and eps ~ N(0, sigma^2) from
// the item's seeded stream. Pure function of its arguments.
struct SynthSpec {
  int classes = 4;
  int per_class_train = 100;
  int per_class_test = 0;
  std::size_t frames = 64;
  std::size_t joints = 25;
  double sigma = 0.1;
  std::uint64_t seed = 12345;
};

SkeletonSequence synth_sequence(const SynthSpec& spec, int klass, int index, bool test_split);
// writes sequences plus manifest.tsv under out_dir and returns the manifest
DatasetManifest synth_dataset(const SynthSpec& spec, const std::string& out_dir);

// --- reshapes feeding the two encoder branches -------------------------------
// time-majored: T rows of 3J (whole pose per row)
Mat time_major_rows(const SkeletonSequence& seq);
// space-majored: J rows of 3T (one joint trajectory per row), rows ordered by
// joint_order
Mat space_major_rows(const SkeletonSequence& seq, const std::vector<int>& joint_order);

}  // namespace hico
