#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "gyrocal/ba_oracle.hpp"
#include "gyrocal/calibrator.hpp"

namespace gyrocal {

/// Synthetic desk-scale experiment: a camera orbiting a regular 3D grid of
/// points while looking at it, with a gyro at gyro_rate_hz and feature
/// tracks at frame_rate_hz.
struct SimConfig {
  int n_trials = 100;
  int n_features = 27;
  std::array<int, 3> grid = {3, 3, 3};
  double grid_spacing = 1.0;
  Intrinsics true_intrinsics{575.0, 575.0, 240.0, 320.0, 0.0, 0.0};
  int image_width = 480;
  int image_height = 640;
  DistortionMode distortion_mode = DistortionMode::kCentered;
  double gyro_rate_hz = 100.0;
  double frame_rate_hz = 10.0;
  double duration_s = 65.0;
  double warmup_s = 0.0;           // > 0: the path starts at rest and reaches full speed after this
  double gyro_noise_std = 0.005;   // rad/s per axis and sample
  AngularRate gyro_bias = AngularRate::Zero();
  double pixel_noise_std = 2.5;
  double path_radius = 6.0;        // scene units from the structure centroid
  double radius_variation = 0.15;  // relative amplitude of radial breathing
  double max_angular_speed = 1.0;  // rad/s bound on the camera rotation rate
  double max_elevation_deg = 40.0;
  double look_at_wander = 0.1;     // look-at point amplitude, in grid spacings
  double track_dropout_prob = 0.0;  // per feature and frame
  std::uint64_t seed = 1;

  /// Throws InputError on inconsistent values.
  void validate() const;
  int gyro_sample_count() const;
  int frame_count() const;
};

/// Low-frequency signal offset + drift·t + Σ aᵢ·sin(2π fᵢ t + φᵢ).
struct SmoothSignal {
  struct Harmonic {
    double amplitude = 0.0;
    double frequency_hz = 0.0;
    double phase = 0.0;
  };
  double offset = 0.0;
  double drift = 0.0;
  std::vector<Harmonic> harmonics;

  double value(double t) const;
  double rate(double t) const;
  /// Upper bound of |rate(t)| over all t.
  double rate_bound() const;
};

/// Smooth orbit around the centroid with look-at orientation, random roll
/// and a slowly wandering look-at point.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(Point3 centroid, double radius, SmoothSignal azimuth, SmoothSignal elevation,
             SmoothSignal radial, SmoothSignal roll, std::array<SmoothSignal, 3> target_jitter,
             double warmup = 0.0);

  Pose pose(double t) const;
  /// Path time τ(t): zero velocity at t = 0, τ'(t) = 1 from t = warmup on.
  double warped_time(double t) const;
  /// Largest angular speed over [0, duration] from finite differences of
  /// the orientation at the given step.
  double peak_angular_speed(double duration, double step) const;

 private:
  Point3 centroid_ = Point3::Zero();
  double radius_ = 1.0;
  SmoothSignal azimuth_, elevation_, radial_, roll_;
  std::array<SmoothSignal, 3> jitter_;
  double warmup_ = 0.0;
};

struct GroundTruth {
  Intrinsics intrinsics;
  std::vector<Point3> points;  // feature id == index
  std::vector<double> t;       // gyro sample times
  std::vector<Pose> poses;     // pose at each gyro sample time
};

struct SimulatedRun {
  GroundTruth truth;
  std::vector<GyroSample> gyro;
  std::vector<Frame> frames;
};

/// Regular grid centered at the origin, first n_features points in
/// x-major order. Deterministic.
std::vector<Point3> generate_scene(const SimConfig& cfg);

Trajectory generate_trajectory(const SimConfig& cfg, std::uint64_t seed);

/// Gyro samples at k/gyro_rate_hz. Sample k holds the constant rate that
/// carries the orientation from t_k to t_{k+1} under propagate_quaternion,
/// plus bias and Gaussian noise.
std::vector<GyroSample> sample_gyro(const Trajectory& traj, const SimConfig& cfg,
                                    std::uint64_t seed);

/// Frames at j/frame_rate_hz with noisy projections of the visible points.
std::vector<Frame> render_observations(const Trajectory& traj, const std::vector<Point3>& points,
                                       const SimConfig& cfg, std::uint64_t seed);

SimulatedRun simulate(const SimConfig& cfg, std::uint64_t seed);

struct MonteCarloOptions {
  int ba_trials = 0;  // refine the first ba_trials trials with the BA oracle
  BAOptions ba;
  bool keep_reports = false;
};

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  Intrinsics estimate;
  Intrinsics::Vector stds = Intrinsics::Vector::Zero();
  Intrinsics::Vector error = Intrinsics::Vector::Zero();  // estimate - truth
  double visibility = 0.0;  // observed fraction of feature-frame pairs
  int reinitialized = 0;
  int gated = 0;
  std::optional<Intrinsics::Vector> ba_error;
  std::optional<BASolution> ba;
  std::optional<CalibrationReport> report;
};

struct MonteCarloResult {
  Intrinsics::Vector truth = Intrinsics::Vector::Zero();
  Intrinsics::Vector rmse_initial = Intrinsics::Vector::Zero();
  Intrinsics::Vector rmse_filter = Intrinsics::Vector::Zero();
  std::optional<Intrinsics::Vector> rmse_ba;
  std::vector<TrialRecord> trials;
};

/// Trial i uses seed sim.seed + i. Trials run on all hardware threads.
MonteCarloResult run_monte_carlo(const SimConfig& sim, const CalibratorConfig& calib,
                                 const MonteCarloOptions& options = {});

}  // namespace gyrocal
