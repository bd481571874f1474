#include "hico/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hico/common.hpp"

namespace hico {

void AugmentConfig::validate() const {
  require(shear_amplitude >= 0.0, "shear_amplitude must be >= 0");
  require(jitter_joint_fraction >= 0.0 && jitter_joint_fraction <= 1.0,
          "jitter_joint_fraction must be in [0,1]");
  require(jitter_magnitude >= 0.0, "jitter_magnitude must be >= 0");
  require(crop_ratio_min > 0.0 && crop_ratio_min <= 1.0, "crop_ratio_min must be in (0,1]");
  require(out_frames >= 1, "out_frames must be >= 1");
}

SkeletonSequence apply_shear(const SkeletonSequence& seq, const double s[3][3]) {
  SkeletonSequence out(seq.frames, seq.joints);
  out.label = seq.label;
  out.meta = seq.meta;
  for (std::size_t t = 0; t < seq.frames; ++t)
    for (std::size_t j = 0; j < seq.joints; ++j) {
      const double x = seq.at(t, j, 0);
      const double y = seq.at(t, j, 1);
      const double z = seq.at(t, j, 2);
      for (std::size_t c = 0; c < 3; ++c)
        out.at(t, j, c) = static_cast<float>(s[c][0] * x + s[c][1] * y + s[c][2] * z);
    }
  return out;
}

SkeletonSequence shear(const SkeletonSequence& seq, double amplitude, Rng& rng) {
  require(amplitude >= 0.0, "shear amplitude must be >= 0");
  double s[3][3] = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (r != c) s[r][c] = rng.uniform(-amplitude, amplitude);
  return apply_shear(seq, s);
}

SkeletonSequence joint_jitter(const SkeletonSequence& seq, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t j = seq.joints;
  const std::size_t m = static_cast<std::size_t>(
      std::lround(cfg.jitter_joint_fraction * static_cast<double>(j)));
  std::vector<std::size_t> order(j);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t k = i + static_cast<std::size_t>(rng.uniform_int(j - i));
    std::swap(order[i], order[k]);
  }
  SkeletonSequence out = seq;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t joint = order[i];
    for (std::size_t t = 0; t < seq.frames; ++t)
      for (std::size_t c = 0; c < 3; ++c)
        out.at(t, joint, c) = static_cast<float>(
            static_cast<double>(out.at(t, joint, c)) +
            rng.uniform(-cfg.jitter_magnitude, cfg.jitter_magnitude));
  }
  return out;
}

SkeletonSequence temporal_crop_resample(const SkeletonSequence& seq, const AugmentConfig& cfg,
                                        Rng& rng) {
  cfg.validate();
  require(seq.frames >= 1, "temporal crop needs T >= 1");
  const double r = rng.uniform(cfg.crop_ratio_min, 1.0);
  std::size_t crop_len = static_cast<std::size_t>(
      std::lround(r * static_cast<double>(seq.frames)));
  crop_len = std::clamp<std::size_t>(crop_len, 1, seq.frames);
  const std::size_t start =
      static_cast<std::size_t>(rng.uniform_int(seq.frames - crop_len + 1));
  SkeletonSequence crop(crop_len, seq.joints);
  crop.label = seq.label;
  crop.meta = seq.meta;
  std::copy_n(seq.xyz.data() + start * seq.joints * 3, crop_len * seq.joints * 3,
              crop.xyz.data());
  return resample_time(crop, cfg.out_frames);
}

std::pair<SkeletonSequence, SkeletonSequence> make_views(const SkeletonSequence& seq,
                                                         const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  auto one_view = [&]() {
    SkeletonSequence v = temporal_crop_resample(seq, cfg, rng);
    v = joint_jitter(v, cfg, rng);
    return shear(v, cfg.shear_amplitude, rng);
  };
  SkeletonSequence query = one_view();
  SkeletonSequence key = one_view();
  return {std::move(query), std::move(key)};
}

}  // namespace hico
