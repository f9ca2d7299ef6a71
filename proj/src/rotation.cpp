#include "gyrocal/rotation.hpp"

#include <cmath>
#include <stdexcept>

#include "gyrocal/errors.hpp"

namespace gyrocal {

namespace {

// Below this |ω|·dt the sin/|ω| factor switches to its Taylor series.
constexpr double kSmallAngle = 1e-8;

void require_finite(const Quaternion& q) {
  if (!std::isfinite(q.w) || !std::isfinite(q.x) || !std::isfinite(q.y) || !std::isfinite(q.z)) {
    throw std::invalid_argument("quaternion has non-finite components");
  }
}

void require_finite(const AngularRate& omega) {
  if (!omega.allFinite()) throw std::invalid_argument("angular rate has non-finite components");
}

}  // namespace

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion operator*(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix3d quat_to_rotation(const Quaternion& q) {
  require_finite(q);
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("quat_to_rotation expects a unit quaternion");
  }
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Eigen::Matrix3d r;
  r << w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
       2.0 * (x * y + w * z), w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x),
       2.0 * (x * z - w * y), 2.0 * (y * z + w * x), w * w - x * x - y * y + z * z;
  return r;
}

Quaternion rotation_to_quat(const Eigen::Matrix3d& r) {
  // Shepperd: pivot on the largest of w², x², y², z².
  const double trace = r.trace();
  Quaternion q;
  if (trace >= r(0, 0) && trace >= r(1, 1) && trace >= r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
  } else if (r(0, 0) >= r(1, 1) && r(0, 0) >= r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
    q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
  } else if (r(1, 1) >= r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
    q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
    q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
  }
  return normalize(q);
}

Eigen::Matrix4d omega_matrix(const AngularRate& omega) {
  require_finite(omega);
  Eigen::Matrix4d m;
  m(0, 0) = 0.0;
  m.block<1, 3>(0, 1) = -omega.transpose();
  m.block<3, 1>(1, 0) = omega;
  m.block<3, 3>(1, 1) = -skew(omega);
  return m;
}

Eigen::Matrix4d propagation_matrix(const AngularRate& omega, double dt) {
  const Eigen::Matrix4d big_omega = omega_matrix(omega);
  if (!std::isfinite(dt)) throw std::invalid_argument("non-finite time step");
  const double rate = omega.norm();
  const double half_angle = 0.5 * rate * dt;
  double c = 0.0;
  double s_over_rate = 0.0;
  if (rate * std::abs(dt) < kSmallAngle) {
    const double h2 = half_angle * half_angle;
    c = 1.0 - 0.5 * h2;
    s_over_rate = 0.5 * dt * (1.0 - h2 / 6.0);
  } else {
    c = std::cos(half_angle);
    s_over_rate = std::sin(half_angle) / rate;
  }
  return c * Eigen::Matrix4d::Identity() + s_over_rate * big_omega;
}

Matrix4x3d rate_jacobian(const Quaternion& q) {
  Matrix4x3d xi;
  xi.row(0) = -0.5 * q.vec().transpose();
  xi.bottomRows<3>() = 0.5 * (q.w * Eigen::Matrix3d::Identity() + skew(q.vec()));
  return xi;
}

Quaternion propagate_quaternion(const Quaternion& q, const AngularRate& omega, double dt) {
  require_finite(q);
  return normalize(Quaternion::from_vector(propagation_matrix(omega, dt) * q.to_vector()));
}

Quaternion normalize(const Quaternion& q) {
  require_finite(q);
  const double n = q.norm();
  if (n <= 1e-12) throw NumericalError("cannot normalize a near-zero quaternion");
  const double sign = q.w < 0.0 ? -1.0 : 1.0;
  const double k = sign / n;
  return {q.w * k, q.x * k, q.y * k, q.z * k};
}

Quaternion quat_exp(const Eigen::Vector3d& rotvec) {
  const double angle = rotvec.norm();
  const double half = 0.5 * angle;
  // sin(θ/2)/θ with its series near zero.
  const double k = angle < 1e-8 ? 0.5 - angle * angle / 48.0 : std::sin(half) / angle;
  return {std::cos(half), k * rotvec.x(), k * rotvec.y(), k * rotvec.z()};
}

Eigen::Vector3d quat_log(const Quaternion& q) {
  const Quaternion u = normalize(q);
  const double vn = u.vec().norm();
  if (vn < 1e-12) return 2.0 * u.vec();
  const double angle = 2.0 * std::atan2(vn, u.w);
  return (angle / vn) * u.vec();
}

double rotation_angle_between(const Quaternion& a, const Quaternion& b) {
  return quat_log(a.conjugate() * b).norm();
}

}  // namespace gyrocal
