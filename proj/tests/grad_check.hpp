#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "hico/nn.hpp"
#include "hico/rng.hpp"

// Central finite-difference comparison for analytic gradients.
// rel err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-5).

namespace hico_test {

struct GradReport {
  double max_rel = 0.0;
  std::string worst = "";
  std::size_t checked = 0;
};

// loss() must be a pure function of `params` (plus constants)
template <class LossFn>
GradReport compare_gradients(hico::ParamStore& params, const hico::ParamStore& analytic,
                             LossFn loss, double eps = 1e-4,
                             std::size_t max_per_tensor = static_cast<std::size_t>(-1),
                             std::uint64_t sample_seed = 1234) {
  GradReport report;
  hico::Rng pick(sample_seed);
  for (std::size_t id = 0; id < params.count(); ++id) {
    auto& tensor = params[id];
    const std::size_t n = tensor.size();
    for (std::size_t step = 0; step < std::min(n, max_per_tensor); ++step) {
      const std::size_t i =
          n <= max_per_tensor ? step : static_cast<std::size_t>(pick.uniform_int(n));
      const double saved = tensor.v[i];
      tensor.v[i] = saved + eps;
      const double up = loss();
      tensor.v[i] = saved - eps;
      const double down = loss();
      tensor.v[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[id].v[i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-5});
      ++report.checked;
      if (rel > report.max_rel) {
        report.max_rel = rel;
        report.worst = tensor.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

inline hico::Mat random_mat(std::size_t rows, std::size_t cols, hico::Rng& rng,
                            double scale = 1.0) {
  hico::Mat m(rows, cols);
  for (double& x : m.v) x = scale * rng.uniform(-1.0, 1.0);
  return m;
}

inline hico::Vec random_vec(std::size_t n, hico::Rng& rng, double scale = 1.0) {
  hico::Vec v(n);
  for (double& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace hico_test
