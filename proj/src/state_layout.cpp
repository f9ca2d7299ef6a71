#include "gyrocal/state_layout.hpp"

#include <stdexcept>
#include <string>

namespace gyrocal {

StateLayout::StateLayout(int num_features) : num_features_(num_features) {
  if (num_features < 0) throw std::invalid_argument("negative feature count");
}

int StateLayout::feature(int i) const {
  if (i < 0 || i >= num_features_) {
    throw std::out_of_range("feature index " + std::to_string(i) + " out of range");
  }
  return kFeatures + 3 * i;
}

Intrinsics StateLayout::intrinsics(const Eigen::VectorXd& x) const {
  return Intrinsics::from_vector(x.segment<6>(kIntrinsics));
}

Pose StateLayout::pose(const Eigen::VectorXd& x) const {
  return {x.segment<3>(kPosition), Quaternion::from_vector(x.segment<4>(kOrientation))};
}

Point3 StateLayout::feature_position(const Eigen::VectorXd& x, int i) const {
  return x.segment<3>(feature(i));
}

}  // namespace gyrocal
