#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "gyrocal/errors.hpp"
#include "gyrocal/filter.hpp"
#include "support.hpp"

using namespace gyrocal;
using testing::uniform;

namespace {

MeasurementModel linear_model(const Eigen::MatrixXd& h, const Eigen::MatrixXd& r) {
  MeasurementModel m;
  m.predict = [h](const Eigen::VectorXd& x) -> Eigen::VectorXd { return h * x; };
  m.jacobian = [h](const Eigen::VectorXd&) -> Eigen::MatrixXd { return h; };
  m.noise_cov = r;
  return m;
}

Eigen::MatrixXd random_matrix(int r, int c) {
  Eigen::MatrixXd a(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) a(i, j) = testing::gaussian();
  return a;
}

// Lower Cholesky factor for sampling N(0, cov).
Eigen::MatrixXd sqrt_cov(const Eigen::MatrixXd& cov) { return cov.llt().matrixL(); }

}  // namespace

TEST_CASE("predict: identity dynamics keep the belief") {
  const GaussianBelief b{testing::gaussian_vector(5), testing::random_spd(5)};
  const GaussianBelief out = predict(b, Eigen::MatrixXd::Identity(5, 5), Eigen::MatrixXd::Zero(5, 5));
  CHECK(out.mean == b.mean);
  CHECK((out.cov - b.cov).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("predict: scalar") {
  GaussianBelief b{Eigen::VectorXd::Constant(1, 3.0), Eigen::MatrixXd::Constant(1, 1, 1.0)};
  const GaussianBelief out =
      predict(b, Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::MatrixXd::Constant(1, 1, 0.5));
  CHECK(out.mean(0) == 6.0);
  CHECK(out.cov(0, 0) == 4.5);
}

TEST_CASE("predict: symmetric output and dimension checks") {
  const int n = 7;
  GaussianBelief b{testing::gaussian_vector(n), testing::random_spd(n)};
  const GaussianBelief out = predict(b, random_matrix(n, n), testing::random_spd(n));
  CHECK((out.cov - out.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(predict(b, random_matrix(n, n + 1), testing::random_spd(n)), std::invalid_argument);
  CHECK_THROWS_AS(predict(b, random_matrix(n, n), testing::random_spd(n - 1)), std::invalid_argument);
}

TEST_CASE("predict_block equals predict with the embedded block") {
  const int n = 12, off = 3, k = 5;
  const GaussianBelief b{testing::gaussian_vector(n), testing::random_spd(n)};
  const Eigen::MatrixXd ak = random_matrix(k, k), qk = testing::random_spd(k);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n), q = Eigen::MatrixXd::Zero(n, n);
  a.block(off, off, k, k) = ak;
  q.block(off, off, k, k) = qk;
  const GaussianBelief full = predict(b, a, q);
  GaussianBelief fast = b;
  predict_block(fast, off, ak, qk);
  CHECK(testing::relative_error(fast.mean, full.mean) < 1e-14);
  CHECK(testing::relative_error(fast.cov, full.cov) < 1e-14);
  CHECK_THROWS_AS(predict_block(fast, n - 2, ak, qk), std::invalid_argument);
}

TEST_CASE("update: scalar Kalman step") {
  const GaussianBelief b{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
  const auto model = linear_model(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1));
  const UpdateResult r = update(b, Eigen::VectorXd::Constant(1, 2.0), model);
  CHECK(r.belief.mean(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.belief.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.innovation(0) == 2.0);
  CHECK(r.innovation_cov(0, 0) == 2.0);
}

TEST_CASE("update: zero innovation keeps the mean, trace does not grow") {
  for (int i = 0; i < 20; ++i) {
    const int n = 6, m = 3;
    const GaussianBelief b{testing::gaussian_vector(n), testing::random_spd(n)};
    const Eigen::MatrixXd h = random_matrix(m, n);
    const UpdateResult r = update(b, h * b.mean, linear_model(h, testing::random_spd(m)));
    CHECK((r.belief.mean - b.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.belief.cov.trace() <= b.cov.trace() * (1 + 1e-12));
  }
}

TEST_CASE("update: Joseph form equals the standard form on 100 SPD instances") {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int n = 2 + i % 9, m = 1 + i % 4;
    const Eigen::MatrixXd p = testing::random_spd(n);
    const Eigen::MatrixXd h = random_matrix(m, n);
    const Eigen::MatrixXd r = testing::random_spd(m);
    const GaussianBelief b{testing::gaussian_vector(n), p};
    const Eigen::VectorXd y = testing::gaussian_vector(m);
    const UpdateResult out = update(b, y, linear_model(h, r));

    // Independent standard form: S = HPHᵀ + R, K = PHᵀS⁻¹, P⁺ = P − KSKᵀ.
    const Eigen::MatrixXd s = h * p * h.transpose() + r;
    const Eigen::MatrixXd k = p * h.transpose() * s.inverse();
    const Eigen::MatrixXd p_std = p - k * s * k.transpose();
    const Eigen::VectorXd m_std = b.mean + k * (y - h * b.mean);
    worst = std::max(worst, testing::relative_error(out.belief.cov, p_std));
    CHECK(testing::relative_error(out.belief.mean, m_std) < 1e-10);
    CHECK(testing::relative_error(out.innovation_cov, s) < 1e-12);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("update: trace is non-increasing for exact linear models") {
  const int n = 8;
  GaussianBelief b{testing::gaussian_vector(n), testing::random_spd(n)};
  for (int step = 0; step < 50; ++step) {
    const Eigen::MatrixXd h = random_matrix(2, n);
    const UpdateResult r =
        update(b, testing::gaussian_vector(2), linear_model(h, 0.5 * Eigen::MatrixXd::Identity(2, 2)));
    CHECK(r.belief.cov.trace() <= b.cov.trace() * (1 + 1e-12));
    b = r.belief;
  }
}

TEST_CASE("update is equivariant under row permutation") {
  const int n = 6, m = 4;
  const GaussianBelief b{testing::gaussian_vector(n), testing::random_spd(n)};
  const Eigen::MatrixXd h = random_matrix(m, n);
  const Eigen::MatrixXd r = testing::random_spd(m);
  const Eigen::VectorXd y = testing::gaussian_vector(m);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(m);
  perm.indices() << 2, 0, 3, 1;
  const UpdateResult a = update(b, y, linear_model(h, r));
  const UpdateResult c =
      update(b, perm * y, linear_model(perm * h, perm * r * perm.transpose()));
  CHECK(testing::relative_error(c.belief.mean, a.belief.mean) < 1e-12);
  CHECK(testing::relative_error(c.belief.cov, a.belief.cov) < 1e-12);
  CHECK(testing::relative_error(c.innovation, perm * a.innovation) < 1e-15);
}

TEST_CASE("update: ill-conditioned S is rejected") {
  const GaussianBelief b{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  Eigen::MatrixXd h(2, 2);
  h << 1, 0, 1, 0;
  const auto model = linear_model(h, 1e-14 * Eigen::MatrixXd::Identity(2, 2));
  CHECK_THROWS_AS(update(b, Eigen::Vector2d(1, 2), model), UpdateRejectedError);
  const auto singular = linear_model(h, Eigen::MatrixXd::Zero(2, 2));
  CHECK_THROWS_AS(update(b, Eigen::Vector2d(1, 2), singular), UpdateRejectedError);
}

TEST_CASE("update: dimension mismatch") {
  const GaussianBelief b{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)};
  const auto model = linear_model(random_matrix(2, 3), Eigen::MatrixXd::Identity(2, 2));
  CHECK_THROWS_AS(update(b, Eigen::VectorXd::Zero(3), model), std::invalid_argument);
  const auto wrong_h = linear_model(random_matrix(2, 4), Eigen::MatrixXd::Identity(2, 2));
  CHECK_THROWS_AS(update(b, Eigen::VectorXd::Zero(2), wrong_h), std::invalid_argument);
}

TEST_CASE("NEES over 500 linear-Gaussian trials lies in the 95% envelope") {
  // Constant-velocity target in 2D, position measured.
  const int n = 4, m = 2, steps = 30, trials = 500;
  const double dt = 0.1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  a(0, 2) = a(1, 3) = dt;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < 2; ++k) {
    q(k, k) = dt * dt * dt / 3;
    q(k, k + 2) = q(k + 2, k) = dt * dt / 2;
    q(k + 2, k + 2) = dt;
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, n);
  h(0, 0) = h(1, 1) = 1;
  const Eigen::MatrixXd r = 0.25 * Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd p0 = Eigen::Vector4d(1, 1, 0.5, 0.5).asDiagonal();
  const Eigen::MatrixXd lq = sqrt_cov(q + 1e-15 * Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd lr = sqrt_cov(r), lp = sqrt_cov(p0);
  const auto model = linear_model(h, r);

  double nees_sum = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Eigen::VectorXd x = lp * testing::gaussian_vector(n);
    GaussianBelief b{Eigen::VectorXd::Zero(n), p0};
    for (int k = 0; k < steps; ++k) {
      x = a * x + lq * testing::gaussian_vector(n);
      b = predict(b, a, q);
      b = update(b, h * x + lr * testing::gaussian_vector(m), model).belief;
    }
    const Eigen::VectorXd e = x - b.mean;
    nees_sum += e.dot(b.cov.ldlt().solve(e));
  }
  const boost::math::chi_squared dist(trials * n);
  const double lo = boost::math::quantile(dist, 0.025) / trials;
  const double hi = boost::math::quantile(dist, 0.975) / trials;
  const double mean_nees = nees_sum / trials;
  INFO("mean NEES " << mean_nees << " envelope [" << lo << ", " << hi << "]");
  CHECK(mean_nees >= lo);
  CHECK(mean_nees <= hi);
}

TEST_CASE("renormalize_quaternion") {
  const StateLayout layout(1);
  const int n = layout.dim();
  constexpr int kQ = StateLayout::kOrientation;

  GaussianBelief b{testing::gaussian_vector(n), testing::random_spd(n)};
  b.mean.segment<4>(kQ) = testing::random_quaternion().to_vector();
  const GaussianBelief same = renormalize_quaternion(b, layout);
  CHECK((same.mean - b.mean).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(same.cov == b.cov);

  GaussianBelief doubled = b;
  doubled.mean.segment<4>(kQ) *= 2.0;
  const GaussianBelief fixed = renormalize_quaternion(doubled, layout);
  CHECK((fixed.mean.segment<4>(kQ) - b.mean.segment<4>(kQ)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(fixed.cov == doubled.cov);
  CHECK(fixed.mean.head<kQ>() == doubled.mean.head<kQ>());

  // w < 0: same rotation with w >= 0, cross-covariances follow the sign.
  GaussianBelief neg = b;
  neg.mean.segment<4>(kQ) *= -3.0;
  const GaussianBelief flipped = renormalize_quaternion(neg, layout);
  CHECK((flipped.mean.segment<4>(kQ) - b.mean.segment<4>(kQ)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(flipped.cov.block<4, 4>(kQ, kQ) == neg.cov.block<4, 4>(kQ, kQ));
  CHECK(flipped.cov.block<4, 6>(kQ, 0) == -neg.cov.block<4, 6>(kQ, 0));

  GaussianBelief zero = b;
  zero.mean.segment<4>(kQ).setZero();
  CHECK_THROWS_AS(renormalize_quaternion(zero, layout), NumericalError);
  CHECK_THROWS_AS(renormalize_quaternion(b, StateLayout(2)), std::invalid_argument);
}
