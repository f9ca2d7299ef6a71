#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "gyrocal/calibrator.hpp"
#include "gyrocal/camera.hpp"

namespace gyrocal {

struct BAObservation {
  int frame = 0;  // index into BAParameters::poses
  int point = 0;  // index into BAParameters::points
  Pixel pixel;
};

struct BAParameters {
  Intrinsics intrinsics;
  std::vector<Pose> poses;
  std::vector<Point3> points;
};

struct BAOptions {
  int max_iters = 100;
  double tol = 1e-10;
  bool optimize_distortion = false;  // k1, k2 held at their initial values otherwise
  DistortionMode distortion_mode = DistortionMode::kCentered;
  double depth_epsilon = kDefaultDepthEpsilon;
  double initial_lambda = 1e-3;
};

/// Reprojection problem over intrinsics, per-frame poses and points. The
/// first pose is held fixed and the distance from it to the point centroid
/// fixes the scale.
struct BAProblem {
  std::vector<BAObservation> observations;
  BAParameters initial;
  std::vector<FeatureId> point_ids;  // feature id of each point
  std::vector<double> frame_times;   // timestamp of each pose
  int dropped_observations = 0;      // discarded while building the problem

  /// Throws InputError on dangling indices or an empty problem.
  void validate() const;
};

enum class BAStatus { kConverged, kMaxIterations, kBreakdown };

struct BASolution {
  BAParameters params;
  double initial_cost = 0.0;
  double cost = 0.0;  // px², sum over observations
  int iterations = 0;
  BAStatus status = BAStatus::kMaxIterations;
  std::vector<double> cost_history;  // cost after each accepted step, starting with the initial

  bool converged() const { return status == BAStatus::kConverged; }
};

struct Reprojection {
  double cost = 0.0;
  Eigen::VectorXd residuals;  // predicted − observed, two rows per observation
};

/// Throws BehindCameraError if any observed point is behind its camera.
Reprojection reprojection_cost(const BAProblem& problem, const BAParameters& params,
                               const BAOptions& options = {});

using Vector6d = Eigen::Matrix<double, 6, 1>;

/// p ← p + δp, q ← q ⊗ exp(δθ) for δ = (δp, δθ).
Pose perturb_pose(const Pose& pose, const Vector6d& delta);

/// Residual of one observation and its derivatives w.r.t. all six
/// intrinsics, the pose tangent (δp, δθ) of perturb_pose, and the point.
struct ResidualJacobian {
  Eigen::Vector2d residual;
  Eigen::Matrix<double, 2, 6> intrinsics;
  Eigen::Matrix<double, 2, 6> pose;
  Eigen::Matrix<double, 2, 3> point;
};

ResidualJacobian residual_jacobian(const BAObservation& obs, const BAParameters& params,
                                   const BAOptions& options = {});

/// Damped Gauss–Newton with the poses eliminated by a Schur complement.
/// Throws NumericalError when the starting cost is not finite.
BASolution solve(const BAProblem& problem, const BAOptions& options = {});

/// Builds a problem from tracks and a calibration report: poses from the
/// report's per-frame trace, points by linear triangulation through those
/// poses, falling back to the report's final feature estimates. Without
/// optimize_distortion the problem uses k1 = k2 = 0.
BAProblem make_problem(std::span<const Frame> frames, const CalibrationReport& report,
                       const BAOptions& options = {});

}  // namespace gyrocal
