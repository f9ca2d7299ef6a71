#pragma once

#include <Eigen/Core>

#include "gyrocal/rotation.hpp"

namespace gyrocal {

/// Camera parameters: focal lengths and principal point in pixels, two
/// radial distortion coefficients.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;

  using Vector = Eigen::Matrix<double, 6, 1>;
  static Intrinsics from_vector(const Vector& c) { return {c(0), c(1), c(2), c(3), c(4), c(5)}; }
  Vector to_vector() const {
    Vector c;
    c << fx, fy, cx, cy, k1, k2;
    return c;
  }
};

/// Camera position and camera-to-world orientation in the scene frame.
struct Pose {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Quaternion q = Quaternion::identity();
};

using Point3 = Eigen::Vector3d;

/// Index map of the filter state x = (c, p, v, q, z₁..z_d).
class StateLayout {
 public:
  static constexpr int kIntrinsics = 0;
  static constexpr int kPosition = 6;
  static constexpr int kVelocity = 9;
  static constexpr int kOrientation = 12;
  static constexpr int kFeatures = 16;
  /// p, v and q are contiguous; the gyro transition only touches them.
  static constexpr int kMotionBlock = 10;

  explicit StateLayout(int num_features);

  int num_features() const { return num_features_; }
  int dim() const { return kFeatures + 3 * num_features_; }
  /// Offset of feature i's 3-vector. Throws std::out_of_range.
  int feature(int i) const;

  Intrinsics intrinsics(const Eigen::VectorXd& x) const;
  Pose pose(const Eigen::VectorXd& x) const;
  Point3 feature_position(const Eigen::VectorXd& x, int i) const;

 private:
  int num_features_;
};

}  // namespace gyrocal
