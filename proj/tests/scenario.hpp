#pragma once

// Desk-scale scenario helpers shared by the calibrator tests and the
// acceptance binary.

#include "gyrocal/calibrator.hpp"
#include "gyrocal/simulator.hpp"

namespace testing {

// Multiplies every length-valued setting by s: scene, path, feature
// initialization, position and velocity priors, and the acceleration
// density (units of length²/s³).
inline void scale_lengths(gyrocal::SimConfig& sim, gyrocal::CalibratorConfig& cal, double s) {
  sim.grid_spacing *= s;
  sim.path_radius *= s;
  cal.feature_init_depth *= s;
  cal.feature_init_std *= s;
  cal.init_stds.position *= s;
  cal.init_stds.velocity *= s;
  cal.process.accel_spectral_density *= s * s;
}

// Default scenario shortened to `duration` seconds.
inline gyrocal::SimConfig short_scenario(double duration) {
  gyrocal::SimConfig sim;
  sim.duration_s = duration;
  return sim;
}

}  // namespace testing
