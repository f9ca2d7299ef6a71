#include "gyrocal/camera.hpp"

#include <array>
#include <cmath>

#include "gyrocal/errors.hpp"

namespace gyrocal {

namespace {

constexpr int kUndistortIterations = 30;

// q/|q| without the sign canonicalization of normalize(): the rotation is
// even in q but its derivative is not.
Eigen::Vector4d unit_direction(const Quaternion& q) {
  const double n = q.norm();
  if (!(n > 1e-12)) throw NumericalError("degenerate orientation quaternion");
  return q.to_vector() / n;
}

Eigen::Matrix3d rotation_of(const Quaternion& q) {
  return quat_to_rotation(Quaternion::from_vector(unit_direction(q)));
}

// ∂R/∂(w,x,y,z) of the quadratic rotation formula.
std::array<Eigen::Matrix3d, 4> rotation_partials(const Eigen::Vector4d& qv) {
  const double w = qv(0), x = qv(1), y = qv(2), z = qv(3);
  std::array<Eigen::Matrix3d, 4> d;
  d[0] << w, -z, y, z, w, -x, -y, x, w;
  d[1] << x, y, z, y, -x, -w, z, w, -x;
  d[2] << -y, x, w, x, y, z, -w, z, -y;
  d[3] << -z, -w, x, w, -z, y, x, y, z;
  for (auto& m : d) m *= 2.0;
  return d;
}

struct Distorted {
  Eigen::Vector2d pixel;
  Eigen::Matrix2d d_normalized;  // ∂(u,v)/∂(xn,yn)
  Eigen::Matrix<double, 2, 6> d_intrinsics;
};

Distorted distort_normalized(double xn, double yn, const Intrinsics& c, DistortionMode mode) {
  const double r2 = xn * xn + yn * yn;
  const double r4 = r2 * r2;
  const double s = 1.0 + c.k1 * r2 + c.k2 * r4;
  const double ds_dr2 = c.k1 + 2.0 * c.k2 * r2;
  const double ds_dx = 2.0 * xn * ds_dr2;
  const double ds_dy = 2.0 * yn * ds_dr2;

  Distorted out;
  out.d_intrinsics.setZero();
  if (mode == DistortionMode::kCentered) {
    out.pixel = {c.cx + c.fx * xn * s, c.cy + c.fy * yn * s};
    out.d_normalized << c.fx * (s + xn * ds_dx), c.fx * xn * ds_dy,
                        c.fy * yn * ds_dx, c.fy * (s + yn * ds_dy);
    out.d_intrinsics(0, 0) = xn * s;
    out.d_intrinsics(0, 2) = 1.0;
    out.d_intrinsics(0, 4) = c.fx * xn * r2;
    out.d_intrinsics(0, 5) = c.fx * xn * r4;
    out.d_intrinsics(1, 1) = yn * s;
    out.d_intrinsics(1, 3) = 1.0;
    out.d_intrinsics(1, 4) = c.fy * yn * r2;
    out.d_intrinsics(1, 5) = c.fy * yn * r4;
  } else {
    const double u0 = c.fx * xn + c.cx;
    const double v0 = c.fy * yn + c.cy;
    out.pixel = {u0 * s, v0 * s};
    out.d_normalized << c.fx * s + u0 * ds_dx, u0 * ds_dy,
                        v0 * ds_dx, c.fy * s + v0 * ds_dy;
    out.d_intrinsics(0, 0) = xn * s;
    out.d_intrinsics(0, 2) = s;
    out.d_intrinsics(0, 4) = u0 * r2;
    out.d_intrinsics(0, 5) = u0 * r4;
    out.d_intrinsics(1, 1) = yn * s;
    out.d_intrinsics(1, 3) = s;
    out.d_intrinsics(1, 4) = v0 * r2;
    out.d_intrinsics(1, 5) = v0 * r4;
  }
  return out;
}

Eigen::Vector3d to_camera(const Point3& pt, const Pose& pose, const Eigen::Matrix3d& rot,
                          double depth_epsilon) {
  const Eigen::Vector3d pc = rot.transpose() * (pt - pose.p);
  if (!(pc.z() > depth_epsilon)) throw BehindCameraError(pc.z());
  return pc;
}

}  // namespace

double camera_depth(const Point3& pt, const Pose& pose) {
  return (rotation_of(pose.q).transpose() * (pt - pose.p)).z();
}

Pixel project_ideal(const Point3& pt, const Intrinsics& intr, const Pose& pose,
                    double depth_epsilon) {
  const Eigen::Vector3d pc = to_camera(pt, pose, rotation_of(pose.q), depth_epsilon);
  return {intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy};
}

Pixel distort(const Pixel& px, const Intrinsics& intr, DistortionMode mode) {
  const double xn = (px.u - intr.cx) / intr.fx;
  const double yn = (px.v - intr.cy) / intr.fy;
  const double r2 = xn * xn + yn * yn;
  const double s = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
  if (mode == DistortionMode::kCentered) {
    return {intr.cx + (px.u - intr.cx) * s, intr.cy + (px.v - intr.cy) * s};
  }
  return {px.u * s, px.v * s};
}

Pixel measure_feature(const Point3& pt, const Intrinsics& intr, const Pose& pose,
                      DistortionMode mode, double depth_epsilon) {
  return distort(project_ideal(pt, intr, pose, depth_epsilon), intr, mode);
}

FeatureJacobian feature_jacobian(const Point3& pt, const Intrinsics& intr, const Pose& pose,
                                 DistortionMode mode, double depth_epsilon) {
  const Eigen::Vector4d qn = unit_direction(pose.q);
  const Eigen::Matrix3d rot = quat_to_rotation(Quaternion::from_vector(qn));
  const Eigen::Vector3d delta = pt - pose.p;
  const Eigen::Vector3d pc = to_camera(pt, pose, rot, depth_epsilon);

  const double inv_z = 1.0 / pc.z();
  const double xn = pc.x() * inv_z;
  const double yn = pc.y() * inv_z;
  Eigen::Matrix<double, 2, 3> d_norm_d_cam;
  d_norm_d_cam << inv_z, 0.0, -xn * inv_z,
                  0.0, inv_z, -yn * inv_z;

  const Distorted dist = distort_normalized(xn, yn, intr, mode);
  const Eigen::Matrix<double, 2, 3> d_pix_d_cam = dist.d_normalized * d_norm_d_cam;

  FeatureJacobian j;
  j.prediction = {dist.pixel(0), dist.pixel(1)};
  j.intrinsics = dist.d_intrinsics;
  j.point = d_pix_d_cam * rot.transpose();
  j.position = -j.point;

  // Through the normalization q/|q|.
  const auto partials = rotation_partials(qn);
  Eigen::Matrix<double, 3, 4> d_cam_d_unit;
  for (int k = 0; k < 4; ++k) d_cam_d_unit.col(k) = partials[k].transpose() * delta;
  const Eigen::Matrix4d d_unit_d_raw =
      (Eigen::Matrix4d::Identity() - qn * qn.transpose()) / pose.q.norm();
  j.orientation = d_pix_d_cam * d_cam_d_unit * d_unit_d_raw;
  return j;
}

Eigen::MatrixXd measurement_jacobian(const Eigen::VectorXd& state_mean, const StateLayout& layout,
                                     int feature_index, DistortionMode mode,
                                     double depth_epsilon) {
  const int offset = layout.feature(feature_index);
  const FeatureJacobian fj =
      feature_jacobian(layout.feature_position(state_mean, feature_index),
                       layout.intrinsics(state_mean), layout.pose(state_mean), mode, depth_epsilon);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, layout.dim());
  h.middleCols<6>(StateLayout::kIntrinsics) = fj.intrinsics;
  h.middleCols<3>(StateLayout::kPosition) = fj.position;
  h.middleCols<4>(StateLayout::kOrientation) = fj.orientation;
  h.middleCols<3>(offset) = fj.point;
  return h;
}

Point3 back_project(const Pixel& px, const Intrinsics& intr, const Pose& pose, double depth,
                    DistortionMode mode) {
  if (!(depth > 0.0)) throw InputError("back-projection depth must be positive");
  double xn = 0.0;
  double yn = 0.0;
  double s = 1.0;
  for (int it = 0; it < kUndistortIterations; ++it) {
    if (mode == DistortionMode::kCentered) {
      xn = (px.u - intr.cx) / (intr.fx * s);
      yn = (px.v - intr.cy) / (intr.fy * s);
    } else {
      xn = (px.u / s - intr.cx) / intr.fx;
      yn = (px.v / s - intr.cy) / intr.fy;
    }
    const double r2 = xn * xn + yn * yn;
    const double next = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
    if (next == s) break;
    s = next;
  }
  const Eigen::Vector3d pc(xn * depth, yn * depth, depth);
  return pose.p + rotation_of(pose.q) * pc;
}

}  // namespace gyrocal
