#pragma once

// Known feasible grids used as ground truth by recovery tests.

#include <cmath>

#include "ksqi/grid.hpp"

namespace ksqi::testing {

/// -tau * (1.5 + p/100) * (1 - tau/40): decreasing and concave in tau,
/// decreasing in p, shallow enough in p for the S4 bound.
inline QoEGrid truth_rebuffering(const GridSpec& spec) {
  QoEGrid g = QoEGrid::zeros(GridKind::Rebuffering, spec);
  for (int i = 0; i <= spec.n_steps; ++i) {
    for (int j = 0; j <= spec.n_steps; ++j) {
      const double p = i * spec.quality_step(), tau = j * spec.rebuffer_step();
      g.values(i, j) = -tau * (1.5 + p / 100.0) * (1.0 - tau / 40.0);
    }
  }
  return g;
}

/// Upward switches earn 0.25/point, downward cost 0.5/point, both shrinking
/// with the starting quality.
inline QoEGrid truth_adaptation(const GridSpec& spec) {
  QoEGrid g = QoEGrid::zeros(GridKind::Adaptation, spec);
  for (int i = 0; i <= spec.n_steps; ++i) {
    for (int j = 0; j <= spec.n_steps; ++j) {
      const double p = i * spec.quality_step(), dp = (j - i) * spec.quality_step();
      g.values(i, j) = dp >= 0.0 ? dp * (0.25 - 0.001 * p) : dp * (0.5 + 0.001 * p);
    }
  }
  return g;
}

}  // namespace ksqi::testing
