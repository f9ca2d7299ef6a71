#include "gyrocal/filter.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <stdexcept>
#include <string>

#include "gyrocal/errors.hpp"

namespace gyrocal {

namespace {

void check_belief(const GaussianBelief& b) {
  if (b.cov.rows() != b.dim() || b.cov.cols() != b.dim()) {
    throw std::invalid_argument("belief covariance does not match mean dimension");
  }
}

void check_square(const Eigen::MatrixXd& m, int n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    throw std::invalid_argument(std::string(what) + " must be " + std::to_string(n) + "x" +
                                std::to_string(n));
  }
}

}  // namespace

void symmetrize(Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd t = cov.transpose();
  cov = 0.5 * (cov + t);
}

GaussianBelief predict(const GaussianBelief& belief, const Eigen::MatrixXd& transition,
                       const Eigen::MatrixXd& process_noise) {
  check_belief(belief);
  check_square(transition, belief.dim(), "transition");
  check_square(process_noise, belief.dim(), "process noise");
  GaussianBelief out{transition * belief.mean,
                     transition * belief.cov * transition.transpose() + process_noise};
  symmetrize(out.cov);
  return out;
}

void predict_block(GaussianBelief& belief, int offset, const Eigen::MatrixXd& block_transition,
                   const Eigen::MatrixXd& block_noise) {
  check_belief(belief);
  const int k = static_cast<int>(block_transition.rows());
  check_square(block_transition, k, "block transition");
  check_square(block_noise, k, "block noise");
  if (offset < 0 || offset + k > belief.dim()) throw std::invalid_argument("block out of range");

  belief.mean.segment(offset, k) = block_transition * belief.mean.segment(offset, k);
  belief.cov.middleRows(offset, k) = block_transition * belief.cov.middleRows(offset, k);
  belief.cov.middleCols(offset, k) = belief.cov.middleCols(offset, k) * block_transition.transpose();
  belief.cov.block(offset, offset, k, k) += block_noise;
  symmetrize(belief.cov);
}

UpdateResult update(const GaussianBelief& belief, const Eigen::VectorXd& y,
                    const MeasurementModel& model) {
  check_belief(belief);
  const int n = belief.dim();
  const int m = static_cast<int>(y.size());
  check_square(model.noise_cov, m, "measurement noise");

  const Eigen::VectorXd predicted = model.predict(belief.mean);
  const Eigen::MatrixXd h = model.jacobian(belief.mean);
  if (predicted.size() != m || h.rows() != m || h.cols() != n) {
    throw std::invalid_argument("measurement model dimensions do not match");
  }

  UpdateResult out;
  out.innovation = y - predicted;
  const Eigen::MatrixXd ph_t = belief.cov * h.transpose();
  out.innovation_cov = h * ph_t + model.noise_cov;
  symmetrize(out.innovation_cov);

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.innovation_cov,
                                                           Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxInnovationCondition) {
    throw UpdateRejectedError("innovation covariance is singular or ill-conditioned");
  }

  const Eigen::LLT<Eigen::MatrixXd> llt(out.innovation_cov);
  if (llt.info() != Eigen::Success) {
    throw UpdateRejectedError("innovation covariance factorization failed");
  }
  // K = P Hᵀ S⁻¹, formed as (S⁻¹ H P)ᵀ.
  const Eigen::MatrixXd gain = llt.solve(ph_t.transpose()).transpose();

  out.belief.mean = belief.mean + gain * out.innovation;
  Eigen::MatrixXd i_kh = -gain * h;
  i_kh.diagonal().array() += 1.0;
  out.belief.cov = i_kh * belief.cov * i_kh.transpose() +
                   gain * model.noise_cov * gain.transpose();
  symmetrize(out.belief.cov);
  return out;
}

GaussianBelief renormalize_quaternion(const GaussianBelief& belief, const StateLayout& layout) {
  check_belief(belief);
  if (layout.dim() != belief.dim()) throw std::invalid_argument("belief does not match the state layout");
  constexpr int kQ = StateLayout::kOrientation;
  GaussianBelief out = belief;
  const Eigen::Vector4d q = belief.mean.segment<4>(kQ);
  const double n = q.norm();
  if (!(n > 1e-12)) {
    throw NumericalError("degenerate quaternion in belief");
  }
  out.mean.segment<4>(kQ) = q / n;
  if (q(0) < 0.0) {
    out.mean.segment<4>(kQ) *= -1.0;
    out.cov.middleRows<4>(kQ) *= -1.0;
    out.cov.middleCols<4>(kQ) *= -1.0;
  }
  return out;
}

}  // namespace gyrocal
