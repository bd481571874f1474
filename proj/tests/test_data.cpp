#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hico/data.hpp"
#include "hico/rng.hpp"

using namespace hico;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / (std::string("hico_data_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SkeletonSequence random_sequence(Rng& rng, std::size_t max_t = 20, std::size_t max_j = 10) {
  SkeletonSequence seq(1 + rng.uniform_int(max_t), 1 + rng.uniform_int(max_j));
  for (float& x : seq.xyz) x = static_cast<float>(rng.uniform(-3.0, 3.0));
  if (rng.uniform() < 0.7) seq.label = static_cast<int>(rng.uniform_int(12));
  if (rng.uniform() < 0.5) seq.meta.emplace_back("subject", std::to_string(rng.uniform_int(40)));
  if (rng.uniform() < 0.5) seq.meta.emplace_back("view", std::to_string(rng.uniform_int(3)));
  return seq;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool equal_sequences(const SkeletonSequence& a, const SkeletonSequence& b) {
  return a.frames == b.frames && a.joints == b.joints && a.label == b.label && a.meta == b.meta &&
         std::memcmp(a.xyz.data(), b.xyz.data(), a.xyz.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("skl1 round trip is bit exact") {
  auto dir = temp_dir("roundtrip");
  SkeletonSequence seq(2, 3);
  seq.label = 5;
  save_sequence(seq, (dir / "zero.skl").string());
  SkeletonSequence back = load_sequence((dir / "zero.skl").string());
  CHECK(equal_sequences(seq, back));

  Rng rng(42);
  for (int i = 0; i < 1000; ++i) {
    SkeletonSequence s = random_sequence(rng);
    const auto p1 = dir / "a.skl";
    const auto p2 = dir / "b.skl";
    save_sequence(s, p1.string());
    SkeletonSequence loaded = load_sequence(p1.string());
    save_sequence(loaded, p2.string());
    REQUIRE(equal_sequences(s, loaded));
    REQUIRE(file_bytes(p1) == file_bytes(p2));
  }
}

TEST_CASE("skl1 rejects bad magic and truncation") {
  auto dir = temp_dir("badfiles");
  SkeletonSequence seq(4, 2);
  const auto good = dir / "good.skl";
  save_sequence(seq, good.string());

  std::string bytes = file_bytes(good);
  bytes[0] = 'X';
  std::ofstream(dir / "badmagic.skl", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_sequence((dir / "badmagic.skl").string()), FormatError);

  std::string cut = file_bytes(good).substr(0, file_bytes(good).size() - 5);
  std::ofstream(dir / "cut.skl", std::ios::binary) << cut;
  CHECK_THROWS_AS(load_sequence((dir / "cut.skl").string()), IoError);

  CHECK_THROWS_AS(load_sequence((dir / "missing.skl").string()), IoError);
}

TEST_CASE("sequence invariants are enforced") {
  SkeletonSequence seq(2, 2);
  seq.xyz[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(seq.validate(), std::invalid_argument);
  auto dir = temp_dir("invalid");
  CHECK_THROWS_AS(save_sequence(seq, (dir / "nan.skl").string()), std::invalid_argument);
}

TEST_CASE("resample_time identity and midpoint") {
  Rng rng(7);
  SkeletonSequence seq = random_sequence(rng);
  SkeletonSequence same = resample_time(seq, seq.frames);
  CHECK(std::memcmp(same.xyz.data(), seq.xyz.data(), seq.xyz.size() * sizeof(float)) == 0);

  SkeletonSequence two(2, 3);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t c = 0; c < 3; ++c) two.at(1, j, c) = 1.0f;
  SkeletonSequence three = resample_time(two, 3);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(three.at(0, j, c) == 0.0f);
      CHECK(three.at(1, j, c) == 0.5f);
      CHECK(three.at(2, j, c) == 1.0f);
    }
}

TEST_CASE("resample_time matches a per-coordinate interpolation oracle") {
  Rng rng(11);
  SkeletonSequence seq(17, 4);
  for (float& x : seq.xyz) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  SkeletonSequence up = resample_time(seq, 64);
  // independent scalar oracle on one coordinate stream at a time
  for (std::size_t j = 0; j < seq.joints; ++j)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 64; ++i) {
        const double pos = static_cast<double>(i) * (17.0 - 1.0) / (64.0 - 1.0);
        const std::size_t i0 = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i0);
        const double a = seq.at(i0, j, c);
        const double b = seq.at(std::min<std::size_t>(i0 + 1, 16), j, c);
        const float expect = static_cast<float>((1.0 - frac) * a + frac * b);
        CHECK(up.at(i, j, c) == doctest::Approx(expect).epsilon(1e-6));
      }
  // down-up-down stays within interpolation error of the original
  SkeletonSequence down = resample_time(up, 17);
  for (std::size_t k = 0; k < seq.xyz.size(); ++k)
    CHECK(std::abs(down.xyz[k] - seq.xyz[k]) <= 0.5f);
  // T_out=1 and T=1 degenerate cases replicate frame 0
  SkeletonSequence single = resample_time(seq, 1);
  CHECK(single.frames == 1);
  CHECK(std::memcmp(single.xyz.data(), seq.xyz.data(), seq.joints * 3 * sizeof(float)) == 0);
  SkeletonSequence from_single = resample_time(single, 5);
  for (std::size_t t = 0; t < 5; ++t)
    CHECK(std::memcmp(from_single.xyz.data() + t * seq.joints * 3, single.xyz.data(),
                      seq.joints * 3 * sizeof(float)) == 0);
}

TEST_CASE("bone view") {
  SkeletonTopology topo = SkeletonTopology::body25();
  topo.validate();

  // constant pose, all joints equal -> zero bones
  SkeletonSequence seq(3, 25);
  for (float& x : seq.xyz) x = 1.5f;
  SkeletonSequence bones = to_bone(seq, topo);
  for (float x : bones.xyz) CHECK(x == 0.0f);

  // two-joint chain with fixed offset
  SkeletonTopology chain = SkeletonTopology::chain(2);
  SkeletonSequence pair(4, 2);
  for (std::size_t t = 0; t < 4; ++t) {
    pair.at(t, 0, 0) = 2.0f;
    pair.at(t, 1, 0) = 3.0f;  // child = parent + (1,0,0)
  }
  SkeletonSequence pb = to_bone(pair, chain);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(pb.at(t, 1, 0) == 1.0f);
    CHECK(pb.at(t, 0, 0) == 0.0f);  // root
  }

  // random sequence against the per-edge subtraction oracle
  Rng rng(3);
  SkeletonSequence rnd(5, 25);
  for (float& x : rnd.xyz) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  SkeletonSequence rb = to_bone(rnd, topo);
  for (std::size_t t = 0; t < rnd.frames; ++t)
    for (auto [p, c] : topo.edges)
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(rb.at(t, c, k) == rnd.at(t, c, k) - rnd.at(t, p, k));

  SkeletonTopology wrong = SkeletonTopology::chain(7);
  CHECK_THROWS_AS(to_bone(rnd, wrong), std::invalid_argument);
}

TEST_CASE("motion view") {
  SkeletonSequence constant(6, 3);
  for (float& x : constant.xyz) x = 2.0f;
  SkeletonSequence m = to_motion(constant);
  for (float x : m.xyz) CHECK(x == 0.0f);

  SkeletonSequence one(1, 3);
  for (float& x : one.xyz) x = 4.0f;
  SkeletonSequence m1 = to_motion(one);
  CHECK(m1.frames == 1);
  for (float x : m1.xyz) CHECK(x == 0.0f);

  Rng rng(5);
  SkeletonSequence rnd(7, 4);
  for (float& x : rnd.xyz) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  SkeletonSequence mm = to_motion(rnd);
  for (std::size_t t = 0; t + 1 < rnd.frames; ++t)
    for (std::size_t j = 0; j < rnd.joints; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(mm.at(t, j, c) == rnd.at(t + 1, j, c) - rnd.at(t, j, c));
  for (std::size_t j = 0; j < rnd.joints; ++j)
    for (std::size_t c = 0; c < 3; ++c) CHECK(mm.at(rnd.frames - 1, j, c) == 0.0f);
}

TEST_CASE("synthetic dataset determinism and counting") {
  SynthSpec spec;
  spec.classes = 4;
  spec.per_class_train = 100;
  spec.per_class_test = 0;
  spec.frames = 8;
  spec.joints = 4;
  spec.seed = 77;

  auto dir1 = temp_dir("synth1");
  auto dir2 = temp_dir("synth2");
  DatasetManifest m1 = synth_dataset(spec, dir1.string());
  DatasetManifest m2 = synth_dataset(spec, dir2.string());
  CHECK(m1.items.size() == 400);
  std::set<int> labels;
  for (const auto& it : m1.items) labels.insert(it.label);
  CHECK(labels == std::set<int>{0, 1, 2, 3});
  CHECK(file_bytes(dir1 / "manifest.tsv") == file_bytes(dir2 / "manifest.tsv"));
  for (std::size_t i = 0; i < m1.items.size(); ++i)
    CHECK(file_bytes(m1.items[i].path) == file_bytes(m2.items[i].path));

  // noise-free degenerate case: same class -> identical samples
  SynthSpec clean = spec;
  clean.sigma = 0.0;
  SkeletonSequence a = synth_sequence(clean, 2, 0, false);
  SkeletonSequence b = synth_sequence(clean, 2, 57, false);
  CHECK(std::memcmp(a.xyz.data(), b.xyz.data(), a.xyz.size() * sizeof(float)) == 0);
  SkeletonSequence c = synth_sequence(clean, 3, 0, false);
  CHECK(std::memcmp(a.xyz.data(), c.xyz.data(), a.xyz.size() * sizeof(float)) != 0);
}

TEST_CASE("manifest round trip, split filter, and validation") {
  SynthSpec spec;
  spec.classes = 2;
  spec.per_class_train = 3;
  spec.per_class_test = 2;
  spec.frames = 4;
  spec.joints = 3;
  auto dir = temp_dir("manifest");
  DatasetManifest m = synth_dataset(spec, dir.string());
  CHECK(m.items.size() == 10);
  CHECK(m.indices_of_split("train").size() == 6);
  CHECK(m.indices_of_split("test").size() == 4);
  CHECK(m.num_classes() == 2);
  DatasetManifest loaded = load_manifest((dir / "manifest.tsv").string());
  CHECK(loaded.items.size() == m.items.size());
  for (const auto& item : loaded.items) CHECK(fs::exists(item.path));

  std::ofstream(dir / "sparse.tsv") << "train_c00_i00000.skl\t0\ttrain\n"
                                    << "train_c01_i00000.skl\t2\ttrain\n";
  CHECK_THROWS_AS(load_manifest((dir / "sparse.tsv").string()), FormatError);
}

TEST_CASE("reshapes") {
  SkeletonSequence seq(3, 2);
  float v = 0.0f;
  for (float& x : seq.xyz) x = v += 1.0f;  // 1..18 in (t, j, c) order
  Mat tm = time_major_rows(seq);
  CHECK(tm.rows == 3);
  CHECK(tm.cols == 6);
  CHECK(tm.at(0, 0) == 1.0);
  CHECK(tm.at(1, 0) == 7.0);
  CHECK(tm.at(2, 5) == 18.0);

  Mat sm = space_major_rows(seq, {1, 0});
  CHECK(sm.rows == 2);
  CHECK(sm.cols == 9);
  // row 0 is joint 1's trajectory: (4,5,6),(10,11,12),(16,17,18)
  CHECK(sm.at(0, 0) == 4.0);
  CHECK(sm.at(0, 3) == 10.0);
  CHECK(sm.at(0, 8) == 18.0);
  CHECK(sm.at(1, 0) == 1.0);
}
