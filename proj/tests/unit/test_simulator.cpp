#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "gyrocal/errors.hpp"
#include "gyrocal/simulator.hpp"
#include "scenario.hpp"
#include "support.hpp"

using namespace gyrocal;

namespace {

// Angle of R_aᵀ·R_b from the trace, independent of the quaternion helpers.
double matrix_angle(const Quaternion& a, const Quaternion& b) {
  const Eigen::Matrix3d rel = quat_to_rotation(a).transpose() * quat_to_rotation(b);
  return std::acos(std::clamp(0.5 * (rel.trace() - 1.0), -1.0, 1.0));
}

}  // namespace

TEST_CASE("generate_scene: 3x3x3 unit grid") {
  SimConfig cfg;
  const auto pts = generate_scene(cfg);
  REQUIRE(pts.size() == 27);
  std::set<std::array<int, 3>> cells;
  Point3 centroid = Point3::Zero();
  for (const auto& p : pts) {
    for (int k = 0; k < 3; ++k) CHECK((p(k) == -1.0 || p(k) == 0.0 || p(k) == 1.0));
    cells.insert({int(p.x()), int(p.y()), int(p.z())});
    centroid += p;
  }
  CHECK(cells.size() == 27);
  CHECK(centroid.norm() < 1e-15);
  CHECK(generate_scene(cfg) == pts);

  cfg.n_features = 28;
  CHECK_THROWS_AS(generate_scene(cfg), InputError);
}

TEST_CASE("generate_trajectory: determinism and seed diversity") {
  const SimConfig cfg = testing::short_scenario(20.0);
  const Trajectory a = generate_trajectory(cfg, 9);
  const Trajectory b = generate_trajectory(cfg, 9);
  const Trajectory c = generate_trajectory(cfg, 10);
  for (double t : {0.0, 3.3, 12.1, 19.9}) {
    CHECK(a.pose(t).p == b.pose(t).p);
    CHECK(a.pose(t).q.to_vector() == b.pose(t).q.to_vector());
  }
  CHECK((a.pose(5.0).p - c.pose(5.0).p).norm() > 1e-3);
}

TEST_CASE("generate_trajectory: structure stays in front, rate under the bound") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const SimConfig cfg;
    const Trajectory traj = generate_trajectory(cfg, seed);
    const auto pts = generate_scene(cfg);
    double peak = 0.0;
    const double h = 0.005;
    Quaternion prev = traj.pose(0.0).q;
    for (int k = 1; k * h <= cfg.duration_s; ++k) {
      const Pose pose = traj.pose(k * h);
      peak = std::max(peak, matrix_angle(prev, pose.q) / h);
      prev = pose.q;
      if (k % 20 == 0) {
        for (const auto& p : pts) CHECK(camera_depth(p, pose) > 1.0);
      }
    }
    INFO("seed " << seed << " peak rate " << peak);
    CHECK(peak <= cfg.max_angular_speed);
    CHECK(peak > 0.5 * cfg.max_angular_speed);
  }
}

TEST_CASE("generate_trajectory: warm-up starts from rest") {
  SimConfig cfg = testing::short_scenario(20.0);
  cfg.warmup_s = 4.0;
  const Trajectory traj = generate_trajectory(cfg, 3);
  const double h = 1e-4;
  CHECK((traj.pose(h).p - traj.pose(0.0).p).norm() / h < 1e-6);
  CHECK(traj.warped_time(0.0) == 0.0);
  CHECK(traj.warped_time(4.0) == doctest::Approx(2.0));
  CHECK(traj.warped_time(10.0) == doctest::Approx(8.0));
  // C¹ at the end of the ramp
  const double slope_in = (traj.warped_time(4.0) - traj.warped_time(4.0 - 1e-6)) / 1e-6;
  CHECK(slope_in == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("sample_gyro: zero-noise round trip over 60 s") {
  SimConfig cfg = testing::short_scenario(60.0);
  cfg.gyro_noise_std = 0.0;
  const Trajectory traj = generate_trajectory(cfg, 7);
  const auto gyro = sample_gyro(traj, cfg, 7);
  REQUIRE(gyro.size() == 6000);
  Quaternion q = traj.pose(0.0).q;
  double worst = 0.0;
  for (std::size_t k = 0; k < gyro.size(); ++k) {
    q = propagate_quaternion(q, gyro[k].omega, 1.0 / cfg.gyro_rate_hz);
    worst = std::max(worst, rotation_angle_between(q, traj.pose((k + 1) / cfg.gyro_rate_hz).q));
  }
  INFO("worst orientation error " << worst << " rad");
  CHECK(worst < 1e-5);
}

TEST_CASE("sample_gyro: stationary path reports bias plus noise") {
  SimConfig cfg = testing::short_scenario(30.0);
  cfg.max_angular_speed = 0.0;
  cfg.look_at_wander = 0.0;
  cfg.gyro_bias = {0.01, -0.02, 0.005};
  cfg.gyro_noise_std = 0.0;
  const Trajectory traj = generate_trajectory(cfg, 1);
  for (const auto& s : sample_gyro(traj, cfg, 1)) CHECK((s.omega - cfg.gyro_bias).norm() < 1e-12);

  cfg.gyro_noise_std = 0.01;
  const auto noisy = sample_gyro(traj, cfg, 1);
  Eigen::Vector3d sum = Eigen::Vector3d::Zero(), sq = Eigen::Vector3d::Zero();
  for (const auto& s : noisy) {
    const Eigen::Vector3d e = s.omega - cfg.gyro_bias;
    sum += e;
    sq += e.cwiseAbs2();
  }
  const double n = noisy.size();
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(sum(k) / n) < 5 * 0.01 / std::sqrt(n));
    CHECK(std::sqrt(sq(k) / n) == doctest::Approx(0.01).epsilon(0.05));
  }
}

TEST_CASE("sample counts for the default scenario") {
  const SimulatedRun run = simulate(SimConfig{}, 1);
  CHECK(run.gyro.size() == 6500);
  CHECK(run.frames.size() == 650);
  CHECK(run.truth.poses.size() == run.gyro.size());
  CHECK(run.gyro[1].t - run.gyro[0].t == doctest::Approx(0.01));
  CHECK(run.frames[1].t - run.frames[0].t == doctest::Approx(0.1));
  for (const auto& p : run.truth.poses) CHECK(std::abs(p.q.norm() - 1.0) < 1e-12);
}

TEST_CASE("render_observations: zero noise centre feature equals hand projection") {
  SimConfig cfg = testing::short_scenario(10.0);
  cfg.pixel_noise_std = 0.0;
  const Trajectory traj = generate_trajectory(cfg, 2);
  const auto pts = generate_scene(cfg);
  REQUIRE(pts[13].isZero(0));
  const auto frames = render_observations(traj, pts, cfg, 2);
  for (const Frame& f : frames) {
    const Pose pose = traj.pose(f.t);
    const Eigen::Vector3d c = quat_to_rotation(pose.q).transpose() * (pts[13] - pose.p);
    for (const auto& o : f.observations) {
      if (o.id != 13) continue;
      CHECK(o.pixel.u == doctest::Approx(575.0 * c.x() / c.z() + 240.0).epsilon(1e-12));
      CHECK(o.pixel.v == doctest::Approx(575.0 * c.y() / c.z() + 320.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("render_observations: pixel noise statistics and bounds") {
  SimConfig cfg = testing::short_scenario(65.0);
  SimConfig clean = cfg;
  clean.pixel_noise_std = 0.0;
  const Trajectory traj = generate_trajectory(cfg, 4);
  const auto pts = generate_scene(cfg);
  const auto noisy = render_observations(traj, pts, cfg, 4);
  const auto exact = render_observations(traj, pts, clean, 4);
  double sq = 0.0, sum = 0.0;
  long n = 0;
  for (std::size_t j = 0; j < noisy.size(); ++j) {
    std::map<FeatureId, Pixel> ref;
    for (const auto& o : exact[j].observations) ref[o.id] = o.pixel;
    for (const auto& o : noisy[j].observations) {
      CHECK(o.pixel.u >= 0.0);
      CHECK(o.pixel.u < cfg.image_width);
      CHECK(o.pixel.v >= 0.0);
      CHECK(o.pixel.v < cfg.image_height);
      const auto it = ref.find(o.id);
      if (it == ref.end()) continue;
      for (double e : {o.pixel.u - it->second.u, o.pixel.v - it->second.v}) {
        sum += e;
        sq += e * e;
        ++n;
      }
    }
  }
  REQUIRE(n >= 10000);
  const double mean = sum / n;
  const double std = std::sqrt(sq / n - mean * mean);
  INFO("empirical pixel noise std " << std << " over " << n << " samples");
  CHECK(std == doctest::Approx(2.5).epsilon(0.05));
  CHECK(std::abs(mean) < 0.1);
}

TEST_CASE("default geometry keeps at least 95% of feature-frame pairs visible") {
  const SimConfig cfg;
  const auto pts = generate_scene(cfg);
  for (std::uint64_t seed : {1u, 17u, 123u, 1001u, 5000u}) {
    const auto frames = render_observations(generate_trajectory(cfg, seed), pts, cfg, seed);
    std::size_t observed = 0;
    for (const auto& f : frames) observed += f.observations.size();
    const double vis = double(observed) / (frames.size() * pts.size());
    INFO("seed " << seed << " visibility " << vis);
    CHECK(vis >= 0.95);
  }
}

TEST_CASE("track dropout removes about the requested share") {
  SimConfig cfg = testing::short_scenario(30.0);
  cfg.track_dropout_prob = 0.2;
  const auto pts = generate_scene(cfg);
  SimConfig full = cfg;
  full.track_dropout_prob = 0.0;
  const Trajectory traj = generate_trajectory(cfg, 8);
  std::size_t kept = 0, all = 0;
  for (const auto& f : render_observations(traj, pts, cfg, 8)) kept += f.observations.size();
  for (const auto& f : render_observations(traj, pts, full, 8)) all += f.observations.size();
  CHECK(double(kept) / all == doctest::Approx(0.8).epsilon(0.03));
}

TEST_CASE("run_monte_carlo: seeds, initial error and table shape") {
  SimConfig sim = testing::short_scenario(8.0);
  sim.n_trials = 3;
  sim.seed = 40;
  const MonteCarloResult r = run_monte_carlo(sim, CalibratorConfig{});
  REQUIRE(r.trials.size() == 3);
  CHECK(r.rmse_initial(0) == 125.0);
  CHECK(r.rmse_initial(1) == 125.0);
  CHECK(r.rmse_initial(2) == 0.0);
  CHECK(r.trials[1].seed == 41);
  CHECK(r.trials[0].error != r.trials[1].error);
  CHECK_FALSE(r.rmse_ba.has_value());
  double acc = 0.0;
  for (const auto& t : r.trials) acc += t.error(0) * t.error(0);
  CHECK(r.rmse_filter(0) == doctest::Approx(std::sqrt(acc / 3)));

  const Trajectory a = generate_trajectory(sim, 40), b = generate_trajectory(sim, 41);
  CHECK((a.pose(4.0).p - b.pose(4.0).p).norm() > 1e-3);
}

TEST_CASE("SimConfig validation") {
  SimConfig cfg;
  cfg.frame_rate_hz = 30.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = SimConfig{};
  cfg.warmup_s = cfg.duration_s;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = SimConfig{};
  cfg.pixel_noise_std = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = SimConfig{};
  cfg.track_dropout_prob = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}
