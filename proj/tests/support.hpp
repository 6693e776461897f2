#pragma once

// Shared generators for the test suites.

#include <cmath>
#include <cstdint>
#include <numbers>

#include "dpa/aggregation.hpp"
#include "dpa/geometry.hpp"
#include "dpa/hough.hpp"
#include "dpa/rng.hpp"
#include "dpa/synth.hpp"

namespace dpa::testing {

inline Quaternion random_quaternion(CounterRng& rng) { return random_rotation(rng); }

/// n random unit quaternions with weights in [0.05, 2); half the seeds give a
/// cluster around a random center, the other half uniform rotations.
inline PredictionSet random_prediction_set(std::uint64_t seed, std::size_t n) {
  CounterRng rng(seed, 77);
  PredictionSet set;
  const bool clustered = seed % 2 == 0;
  const Quaternion center = random_rotation(rng);
  const double spread = rng.uniform(0.05, 0.8);
  for (std::size_t i = 0; i < n; ++i) {
    Quaternion q = clustered ? random_rotation_of_angle(rng, std::abs(rng.normal(0.0, spread))) * center
                             : random_rotation(rng);
    if (rng.uniform() < 0.5) q = -q;
    set.push_back(normalized(q), rng.uniform(0.05, 2.0), {static_cast<int>(i / 8), static_cast<int>(i % 8)});
  }
  return set;
}

struct HoughInstance {
  DirectionField field;
  Mask mask;
  double cu = 0, cv = 0;  // true center (u = col, v = row)
};

/// A w x h frame (w, h in [64, 128]) with a disc-shaped object whose pixels
/// point exactly at a random subpixel center, plus a `clutter` fraction of
/// background pixels with random directions in the mask.
inline HoughInstance random_hough_instance(std::uint64_t seed, double clutter = 0.05) {
  CounterRng rng(seed, 91);
  const int w = 64 + static_cast<int>(rng.below(65));
  const int h = 64 + static_cast<int>(rng.below(65));
  HoughInstance inst{DirectionField(w, h), Mask(w, h), rng.uniform(0.3, 0.7) * w, rng.uniform(0.3, 0.7) * h};
  const double radius = rng.uniform(8, 20);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double ex = inst.cu - c, ey = inst.cv - r;
      if (std::hypot(ex, ey) <= radius) {
        inst.field.set(r, c, ex, ey);
        inst.mask.set(r, c);
      } else {
        const double a = rng.uniform(0, 2 * std::numbers::pi);
        inst.field.set(r, c, std::cos(a), std::sin(a));
        if (rng.uniform() < clutter) inst.mask.set(r, c);
      }
    }
  }
  return inst;
}

}  // namespace dpa::testing
