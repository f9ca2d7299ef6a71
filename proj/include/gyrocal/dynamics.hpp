#pragma once

#include <Eigen/Core>
#include <span>

#include "gyrocal/rotation.hpp"
#include "gyrocal/state_layout.hpp"

namespace gyrocal {

struct GyroSample {
  double t = 0.0;  // seconds, relative to stream start
  AngularRate omega = AngularRate::Zero();
};

struct ProcessNoiseConfig {
  /// White-acceleration spectral density of the Wiener-velocity model,
  /// scene-units²/s³.
  double accel_spectral_density = 1.0;
  /// Per-sample gyro rate noise, rad/s per axis.
  double gyro_rate_std = 0.005;
  /// Additive gyro bias, subtracted before propagation.
  AngularRate gyro_bias = AngularRate::Zero();
};

using MotionMatrix = Eigen::Matrix<double, StateLayout::kMotionBlock, StateLayout::kMotionBlock>;

/// Transition restricted to the contiguous (p, v, q) block; the full
/// transition is identity everywhere else.
MotionMatrix motion_transition(double dt, const AngularRate& omega, const ProcessNoiseConfig& cfg);

/// Process noise restricted to the (p, v, q) block; zero elsewhere.
MotionMatrix motion_process_noise(double dt, const Quaternion& q_mean,
                                  const ProcessNoiseConfig& cfg);

/// Full n×n transition: I₆ for c, Wiener-velocity block for (p, v),
/// exp(dt/2·Ω(ω − ω_b)) for q, I for the features.
Eigen::MatrixXd build_transition(const StateLayout& layout, double dt, const AngularRate& omega,
                                 const ProcessNoiseConfig& cfg);

/// Full n×n process noise blkdiag(0₆, Q_t, Q_q, 0).
Eigen::MatrixXd build_process_noise(const StateLayout& layout, double dt, const AngularRate& omega,
                                    const Quaternion& q_mean, const ProcessNoiseConfig& cfg);

/// Mean gyro rate over samples with t < t0 + prefix_duration, where t0 is the
/// first timestamp. Throws InputError if no sample falls in the window.
AngularRate estimate_gyro_bias(std::span<const GyroSample> samples, double prefix_duration);

}  // namespace gyrocal
