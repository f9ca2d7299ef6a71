#pragma once

#include <Eigen/Core>

namespace gyrocal {

/// Unit quaternion, Hamilton product, scalar first. Encodes the
/// camera-to-world orientation: quat_to_rotation(q) maps camera-frame
/// vectors into the world frame.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }
  static Quaternion from_vector(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
  Eigen::Vector4d to_vector() const { return {w, x, y, z}; }
  Eigen::Vector3d vec() const { return {x, y, z}; }
  double norm() const;
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
};

/// Hamilton product a ⊗ b.
Quaternion operator*(const Quaternion& a, const Quaternion& b);

/// Angular rate (rad/s) in the camera (body) frame, as a gyro reports it.
/// The kinematics are dq/dt = ½·Ω(ω)·q = ½·q ⊗ (0, ω).
using AngularRate = Eigen::Vector3d;

using Matrix4x3d = Eigen::Matrix<double, 4, 3>;

/// [v]× such that skew(a) * b == a.cross(b).
Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Rotation matrix of a unit quaternion. Throws std::invalid_argument on
/// non-finite components or when |q| deviates from one by more than 1e-6.
Eigen::Matrix3d quat_to_rotation(const Quaternion& q);

/// Inverse of quat_to_rotation for a proper rotation matrix (w >= 0).
Quaternion rotation_to_quat(const Eigen::Matrix3d& rot);

/// 4x4 rate matrix with top row (0, -ωᵀ) and lower block (ω, -[ω]×).
Eigen::Matrix4d omega_matrix(const AngularRate& omega);

/// Closed-form exp(dt/2 · Ω(ω)). Orthogonal for every ω and dt.
Eigen::Matrix4d propagation_matrix(const AngularRate& omega, double dt);

/// The 4x3 matrix Ξ(q) with Ξ(q)·ω == ½·Ω(ω)·q.
Matrix4x3d rate_jacobian(const Quaternion& q);

/// exp(dt/2 · Ω(ω))·q, renormalized and sign-canonicalized.
Quaternion propagate_quaternion(const Quaternion& q, const AngularRate& omega, double dt);

/// Unit-norm copy with w >= 0. Throws NumericalError when |q| <= 1e-12.
Quaternion normalize(const Quaternion& q);

/// Quaternion of a rotation vector (axis * angle).
Quaternion quat_exp(const Eigen::Vector3d& rotvec);

/// Rotation vector of a unit quaternion, angle in [0, π].
Eigen::Vector3d quat_log(const Quaternion& q);

/// Angle of the relative rotation between a and b, in [0, π]. Insensitive to
/// the sign of either quaternion.
double rotation_angle_between(const Quaternion& a, const Quaternion& b);

}  // namespace gyrocal
