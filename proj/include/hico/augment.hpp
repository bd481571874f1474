#pragma once

#include <utility>

#include "hico/data.hpp"
#include "hico/rng.hpp"

namespace hico {

struct AugmentConfig {
  double shear_amplitude = 0.5;
  double jitter_joint_fraction = 0.15;
  double jitter_magnitude = 0.1;
  double crop_ratio_min = 0.5;
  std::size_t out_frames = 64;

  void validate() const;
};

// x' = S x with S = I + E, E off-diagonals i.i.d. uniform [-amplitude, amplitude].
// One matrix per call; draw order is E(0,1) E(0,2) E(1,0) E(1,2) E(2,0) E(2,1).
SkeletonSequence shear(const SkeletonSequence& seq, double amplitude, Rng& rng);
// deterministic core used by shear(), exposed for oracle checks
SkeletonSequence apply_shear(const SkeletonSequence& seq, const double s[3][3]);

// round(jitter_joint_fraction*J) joints drawn once per call (partial
// Fisher-Yates), then i.i.d. uniform noise in [-magnitude, magnitude] per
// selected joint per frame per coordinate, noise drawn joint-major.
SkeletonSequence joint_jitter(const SkeletonSequence& seq, const AugmentConfig& cfg, Rng& rng);

// crop ratio r ~ uniform[crop_ratio_min, 1], length max(1, round(r*T)),
// uniform start, then resample_time to out_frames
SkeletonSequence temporal_crop_resample(const SkeletonSequence& seq, const AugmentConfig& cfg,
                                        Rng& rng);

// two independent draws of shear(joint_jitter(temporal_crop_resample(x)))
std::pair<SkeletonSequence, SkeletonSequence> make_views(const SkeletonSequence& seq,
                                                         const AugmentConfig& cfg, Rng& rng);

}  // namespace hico
