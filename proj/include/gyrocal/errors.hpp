#pragma once

#include <stdexcept>
#include <string>

namespace gyrocal {

/// Malformed or inconsistent input: bad files, unsorted streams, bad config.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown: singular innovation covariance, divergence,
/// degenerate quaternion.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point sits at or behind the camera plane and cannot be projected.
class BehindCameraError : public NumericalError {
 public:
  explicit BehindCameraError(double depth)
      : NumericalError("point behind camera (depth " + std::to_string(depth) + ")"),
        depth_(depth) {}
  double depth() const { return depth_; }

 private:
  double depth_;
};

/// The innovation covariance was singular or too ill-conditioned to invert;
/// the belief was left unchanged.
class UpdateRejectedError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace gyrocal
