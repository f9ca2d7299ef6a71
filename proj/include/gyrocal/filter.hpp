#pragma once

#include <Eigen/Core>
#include <functional>

#include "gyrocal/state_layout.hpp"

namespace gyrocal {

/// Gaussian approximation N(mean, cov) of the state.
struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Nonlinear measurement y = h(x) + γ, γ ~ N(0, noise_cov).
struct MeasurementModel {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> predict;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  Eigen::MatrixXd noise_cov;
};

struct UpdateResult {
  GaussianBelief belief;
  Eigen::VectorXd innovation;
  Eigen::MatrixXd innovation_cov;
};

/// Innovation covariances with condition number above this are rejected.
inline constexpr double kMaxInnovationCondition = 1e12;

/// P ← (P + Pᵀ)/2.
void symmetrize(Eigen::MatrixXd& cov);

/// Linear prediction: mean ← A·mean, cov ← A·cov·Aᵀ + Q.
GaussianBelief predict(const GaussianBelief& belief, const Eigen::MatrixXd& transition,
                       const Eigen::MatrixXd& process_noise);

/// Same as predict() for a transition that is the identity outside the
/// square block starting at `offset`, with `process_noise` nonzero only on
/// that block. Costs O(n·k²) instead of O(n³).
void predict_block(GaussianBelief& belief, int offset, const Eigen::MatrixXd& block_transition,
                   const Eigen::MatrixXd& block_noise);

/// EKF update with the Joseph-form covariance. Throws UpdateRejectedError
/// (belief untouched) when S is singular or ill-conditioned, and
/// std::invalid_argument on dimension mismatch.
UpdateResult update(const GaussianBelief& belief, const Eigen::VectorXd& y,
                    const MeasurementModel& model);

/// Normalizes the quaternion of the mean. The covariance is left as is,
/// except that a sign flip to w >= 0 negates the quaternion rows/cols so
/// the belief describes the same distribution.
GaussianBelief renormalize_quaternion(const GaussianBelief& belief, const StateLayout& layout);

}  // namespace gyrocal
