#pragma once

// Shared helpers for the test programs.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>

#include "gyrocal/rotation.hpp"

namespace testing {

inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(20240611);
  return gen;
}

inline double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng());
}

inline double gaussian() { return std::normal_distribution<double>(0.0, 1.0)(rng()); }

inline Eigen::VectorXd gaussian_vector(int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = gaussian();
  return v;
}

inline Eigen::Vector3d uniform_vector3(double lo, double hi) {
  return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)};
}

// Uniform on SO(3) via a normalized Gaussian 4-vector.
inline gyrocal::Quaternion random_quaternion() {
  Eigen::Vector4d v = gaussian_vector(4);
  v.normalize();
  if (v(0) < 0) v = -v;
  return gyrocal::Quaternion::from_vector(v);
}

inline Eigen::MatrixXd random_spd(int n, double floor = 0.1) {
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = gaussian();
  return a * a.transpose() + floor * Eigen::MatrixXd::Identity(n, n);
}

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// ‖a − b‖_max / ‖b‖_max, with an absolute floor for tiny references.
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-12) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace testing
