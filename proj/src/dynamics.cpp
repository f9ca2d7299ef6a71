#include "gyrocal/dynamics.hpp"

#include <stdexcept>

#include "gyrocal/errors.hpp"

namespace gyrocal {

namespace {

constexpr int kP = 0;
constexpr int kV = 3;
constexpr int kQ = 6;
constexpr int kBlockOffset = StateLayout::kPosition;

static_assert(StateLayout::kVelocity - StateLayout::kPosition == kV);
static_assert(StateLayout::kOrientation - StateLayout::kPosition == kQ);

void check_dt(double dt) {
  if (!(dt >= 0.0)) throw std::invalid_argument("time step must be non-negative");
}

}  // namespace

MotionMatrix motion_transition(double dt, const AngularRate& omega, const ProcessNoiseConfig& cfg) {
  check_dt(dt);
  if (!omega.allFinite()) throw std::invalid_argument("non-finite angular rate");
  MotionMatrix a = MotionMatrix::Identity();
  a.block<3, 3>(kP, kV) = dt * Eigen::Matrix3d::Identity();
  a.block<4, 4>(kQ, kQ) = propagation_matrix(omega - cfg.gyro_bias, dt);
  return a;
}

MotionMatrix motion_process_noise(double dt, const Quaternion& q_mean,
                                  const ProcessNoiseConfig& cfg) {
  check_dt(dt);
  const double qc = cfg.accel_spectral_density;
  const Eigen::Matrix3d eye = Eigen::Matrix3d::Identity();
  MotionMatrix q = MotionMatrix::Zero();
  q.block<3, 3>(kP, kP) = qc * dt * dt * dt / 3.0 * eye;
  q.block<3, 3>(kP, kV) = qc * dt * dt / 2.0 * eye;
  q.block<3, 3>(kV, kP) = qc * dt * dt / 2.0 * eye;
  q.block<3, 3>(kV, kV) = qc * dt * eye;

  // δq ≈ dt·Ξ(q)·δω for a rate error δω held over the interval.
  const Matrix4x3d g = dt * rate_jacobian(q_mean);
  const double var = cfg.gyro_rate_std * cfg.gyro_rate_std;
  const Eigen::Matrix4d gg = var * g * g.transpose();
  q.block<4, 4>(kQ, kQ) = 0.5 * (gg + gg.transpose());
  return q;
}

Eigen::MatrixXd build_transition(const StateLayout& layout, double dt, const AngularRate& omega,
                                 const ProcessNoiseConfig& cfg) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(layout.dim(), layout.dim());
  a.block<StateLayout::kMotionBlock, StateLayout::kMotionBlock>(kBlockOffset, kBlockOffset) =
      motion_transition(dt, omega, cfg);
  return a;
}

Eigen::MatrixXd build_process_noise(const StateLayout& layout, double dt, const AngularRate& omega,
                                    const Quaternion& q_mean, const ProcessNoiseConfig& cfg) {
  if (!omega.allFinite()) throw std::invalid_argument("non-finite angular rate");
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(layout.dim(), layout.dim());
  q.block<StateLayout::kMotionBlock, StateLayout::kMotionBlock>(kBlockOffset, kBlockOffset) =
      motion_process_noise(dt, q_mean, cfg);
  return q;
}

AngularRate estimate_gyro_bias(std::span<const GyroSample> samples, double prefix_duration) {
  if (samples.empty()) throw InputError("no gyro samples for bias estimation");
  const double end = samples.front().t + prefix_duration;
  AngularRate sum = AngularRate::Zero();
  int n = 0;
  for (const auto& s : samples) {
    if (s.t >= end) break;
    sum += s.omega;
    ++n;
  }
  if (n == 0) throw InputError("stationary prefix contains no gyro samples");
  return sum / n;
}

}  // namespace gyrocal
