#pragma once

#include <Eigen/Core>

#include "gyrocal/state_layout.hpp"

namespace gyrocal {

struct Pixel {
  double u = 0.0;
  double v = 0.0;

  Eigen::Vector2d vec() const { return {u, v}; }
};

/// Where the radial scale factor is applied. Centered scales the offset from
/// the principal point; literal scales the raw pixel coordinates.
enum class DistortionMode { kCentered, kLiteral };

inline constexpr double kDefaultDepthEpsilon = 1e-6;

/// Depth of a world point along the optical axis of the camera at `pose`.
/// The pose quaternion is normalized first.
double camera_depth(const Point3& pt, const Pose& pose);

/// Pinhole projection K·E·(x,y,z,1)ᵀ without distortion. Throws
/// BehindCameraError when the camera-frame depth is <= depth_epsilon.
Pixel project_ideal(const Point3& pt, const Intrinsics& intr, const Pose& pose,
                    double depth_epsilon = kDefaultDepthEpsilon);

/// Radial distortion with r measured in normalized coordinates around
/// (cx, cy).
Pixel distort(const Pixel& px, const Intrinsics& intr,
              DistortionMode mode = DistortionMode::kCentered);

/// The per-feature measurement function: distort(project_ideal(·)).
Pixel measure_feature(const Point3& pt, const Intrinsics& intr, const Pose& pose,
                      DistortionMode mode = DistortionMode::kCentered,
                      double depth_epsilon = kDefaultDepthEpsilon);

/// Prediction and analytic partial derivatives of one feature measurement.
/// The orientation block is taken w.r.t. the raw (possibly non-unit)
/// quaternion components, through the normalization q/|q|.
struct FeatureJacobian {
  Pixel prediction;
  Eigen::Matrix<double, 2, 6> intrinsics;
  Eigen::Matrix<double, 2, 3> position;
  Eigen::Matrix<double, 2, 4> orientation;
  Eigen::Matrix<double, 2, 3> point;
};

FeatureJacobian feature_jacobian(const Point3& pt, const Intrinsics& intr, const Pose& pose,
                                 DistortionMode mode = DistortionMode::kCentered,
                                 double depth_epsilon = kDefaultDepthEpsilon);

/// 2×n Jacobian of feature i's measurement w.r.t. the full state vector.
/// Velocity columns and other features' columns are exactly zero.
Eigen::MatrixXd measurement_jacobian(const Eigen::VectorXd& state_mean, const StateLayout& layout,
                                     int feature_index,
                                     DistortionMode mode = DistortionMode::kCentered,
                                     double depth_epsilon = kDefaultDepthEpsilon);

/// World point whose measurement is `px` and whose camera-frame depth is
/// `depth`. Distortion is inverted by fixed-point iteration, so the
/// round trip is exact only for zero distortion.
Point3 back_project(const Pixel& px, const Intrinsics& intr, const Pose& pose, double depth,
                    DistortionMode mode = DistortionMode::kCentered);

}  // namespace gyrocal
