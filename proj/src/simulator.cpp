#include "gyrocal/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>

#include <Eigen/Geometry>

#include "gyrocal/errors.hpp"

namespace gyrocal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Independent random streams per concern, so that e.g. changing the pixel
// noise does not change the path.
enum class Stream : std::uint64_t { kPath = 1, kGyro = 2, kPixels = 3 };

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

// Harmonics whose combined rate bound equals `rate_budget`.
std::vector<SmoothSignal::Harmonic> random_harmonics(std::mt19937_64& rng, double rate_budget) {
  std::uniform_int_distribution<int> count(2, 4);
  std::uniform_real_distribution<double> freq(0.03, 0.2);
  std::uniform_real_distribution<double> weight(0.2, 1.0);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::vector<SmoothSignal::Harmonic> hs(count(rng));
  double total = 0.0;
  for (auto& h : hs) {
    h.frequency_hz = freq(rng);
    h.phase = phase(rng);
    h.amplitude = weight(rng);
    total += h.amplitude;
  }
  for (auto& h : hs) h.amplitude *= rate_budget / (total * kTwoPi * h.frequency_hz);
  return hs;
}

}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("invalid simulator config: " + msg); };
  if (n_trials < 1) fail("n_trials must be at least 1");
  if (grid[0] < 1 || grid[1] < 1 || grid[2] < 1) fail("grid dimensions must be positive");
  if (n_features < 1 || n_features > grid[0] * grid[1] * grid[2]) {
    fail("n_features must be between 1 and the grid capacity");
  }
  if (!(grid_spacing > 0.0)) fail("grid_spacing must be positive");
  if (!(true_intrinsics.fx > 0.0 && true_intrinsics.fy > 0.0)) fail("focal lengths must be positive");
  if (image_width <= 0 || image_height <= 0) fail("image size must be positive");
  if (!(gyro_rate_hz > 0.0) || !(frame_rate_hz > 0.0)) fail("rates must be positive");
  const double ratio = gyro_rate_hz / frame_rate_hz;
  if (ratio < 1.0 || std::abs(ratio - std::round(ratio)) > 1e-9) {
    fail("gyro rate must be an integer multiple of the frame rate");
  }
  if (!(duration_s > 0.0)) fail("duration must be positive");
  if (!(warmup_s >= 0.0 && warmup_s < duration_s)) fail("warmup_s must be in [0, duration_s)");
  if (!(gyro_noise_std >= 0.0) || !(pixel_noise_std >= 0.0)) fail("noise must be non-negative");
  if (!(path_radius > 0.0)) fail("path_radius must be positive");
  if (!(radius_variation >= 0.0 && radius_variation < 0.5)) fail("radius_variation must be in [0, 0.5)");
  if (!(max_angular_speed >= 0.0)) fail("max_angular_speed must be non-negative");
  if (!(max_elevation_deg >= 0.0 && max_elevation_deg < 80.0)) fail("max_elevation_deg must be in [0, 80)");
  if (!(look_at_wander >= 0.0 && look_at_wander <= 1.0)) fail("look_at_wander must be in [0, 1]");
  if (!(track_dropout_prob >= 0.0 && track_dropout_prob < 1.0)) fail("track_dropout_prob must be in [0, 1)");
  if (!gyro_bias.allFinite()) fail("gyro bias must be finite");
}

int SimConfig::gyro_sample_count() const {
  return static_cast<int>(std::llround(duration_s * gyro_rate_hz));
}

int SimConfig::frame_count() const { return static_cast<int>(std::llround(duration_s * frame_rate_hz)); }

double SmoothSignal::value(double t) const {
  double v = offset + drift * t;
  for (const auto& h : harmonics) v += h.amplitude * std::sin(kTwoPi * h.frequency_hz * t + h.phase);
  return v;
}

double SmoothSignal::rate(double t) const {
  double r = drift;
  for (const auto& h : harmonics) {
    r += h.amplitude * kTwoPi * h.frequency_hz * std::cos(kTwoPi * h.frequency_hz * t + h.phase);
  }
  return r;
}

double SmoothSignal::rate_bound() const {
  double b = std::abs(drift);
  for (const auto& h : harmonics) b += std::abs(h.amplitude) * kTwoPi * h.frequency_hz;
  return b;
}

Trajectory::Trajectory(Point3 centroid, double radius, SmoothSignal azimuth, SmoothSignal elevation,
                       SmoothSignal radial, SmoothSignal roll,
                       std::array<SmoothSignal, 3> target_jitter, double warmup)
    : centroid_(std::move(centroid)),
      radius_(radius),
      azimuth_(std::move(azimuth)),
      elevation_(std::move(elevation)),
      radial_(std::move(radial)),
      roll_(std::move(roll)),
      jitter_(std::move(target_jitter)),
      warmup_(warmup) {
  if (!(warmup_ >= 0.0)) throw std::invalid_argument("warmup must be non-negative");
}

double Trajectory::warped_time(double t) const {
  if (t >= warmup_) return t - 0.5 * warmup_;
  if (t <= 0.0) return 0.0;
  // C² ramp from rest: τ' goes 0 → 1 with τ'' = 0 at both ends.
  const double u = t / warmup_;
  return warmup_ * u * u * u * (1.0 - 0.5 * u);
}

Pose Trajectory::pose(double time) const {
  const double t = warped_time(time);
  const double az = azimuth_.value(t);
  const double el = elevation_.value(t);
  const double r = radius_ * (1.0 + radial_.value(t));
  const Point3 target = centroid_ + Point3(jitter_[0].value(t), jitter_[1].value(t), jitter_[2].value(t));

  Pose pose;
  pose.p = centroid_ + r * Point3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));

  // Camera axes in the world: z forward, y down the image, x = y × z.
  const Eigen::Vector3d forward = (target - pose.p).normalized();
  const Eigen::Vector3d x0 = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d y0 = forward.cross(x0);
  const double psi = roll_.value(t);
  Eigen::Matrix3d rot;
  rot.col(0) = std::cos(psi) * x0 + std::sin(psi) * y0;
  rot.col(1) = -std::sin(psi) * x0 + std::cos(psi) * y0;
  rot.col(2) = forward;
  pose.q = rotation_to_quat(rot);
  return pose;
}

double Trajectory::peak_angular_speed(double duration, double step) const {
  if (!(duration > 0.0) || !(step > 0.0)) throw std::invalid_argument("duration and step must be positive");
  double peak = 0.0;
  Quaternion prev = pose(0.0).q;
  const int n = static_cast<int>(std::ceil(duration / step));
  for (int k = 1; k <= n; ++k) {
    const Quaternion next = pose(k * step).q;
    peak = std::max(peak, quat_log(prev.conjugate() * next).norm() / step);
    prev = next;
  }
  return peak;
}

namespace {

constexpr double kPeakTarget = 0.95;
constexpr double kWanderMaxHz = 0.2;

void cap_amplitude(SmoothSignal& sig, double cap) {
  double amp = 0.0;
  for (const auto& h : sig.harmonics) amp += std::abs(h.amplitude);
  if (amp > cap && amp > 0.0) {
    for (auto& h : sig.harmonics) h.amplitude *= cap / amp;
  }
}

void scale_rates(SmoothSignal& sig, double s) {
  sig.drift *= s;
  for (auto& h : sig.harmonics) h.amplitude *= s;
}

}  // namespace

std::vector<Point3> generate_scene(const SimConfig& cfg) {
  cfg.validate();
  std::vector<Point3> pts;
  pts.reserve(cfg.n_features);
  const auto& g = cfg.grid;
  for (int i = 0; i < g[0] && static_cast<int>(pts.size()) < cfg.n_features; ++i) {
    for (int j = 0; j < g[1] && static_cast<int>(pts.size()) < cfg.n_features; ++j) {
      for (int k = 0; k < g[2] && static_cast<int>(pts.size()) < cfg.n_features; ++k) {
        pts.emplace_back((i - 0.5 * (g[0] - 1)) * cfg.grid_spacing,
                         (j - 0.5 * (g[1] - 1)) * cfg.grid_spacing,
                         (k - 0.5 * (g[2] - 1)) * cfg.grid_spacing);
      }
    }
  }
  return pts;
}

Trajectory generate_trajectory(const SimConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto rng = make_rng(seed, Stream::kPath);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double budget = cfg.max_angular_speed;
  const double max_el = cfg.max_elevation_deg * std::numbers::pi / 180.0;

  // Share of the angular-speed budget per component; azimuth counts twice in
  // the bound, and the jitter term is scaled by the viewing distance.
  SmoothSignal azimuth;
  azimuth.offset = kTwoPi * unit(rng);
  const double az_budget = 0.35 * budget;
  const double drift_share = 0.3 + 0.3 * unit(rng);
  azimuth.drift = (unit(rng) < 0.5 ? -1.0 : 1.0) * drift_share * az_budget;
  azimuth.harmonics = random_harmonics(rng, (1.0 - drift_share) * az_budget);

  SmoothSignal elevation;
  elevation.offset = 0.5 * max_el * (2.0 * unit(rng) - 1.0);
  elevation.harmonics = random_harmonics(rng, 0.2 * budget);
  const double el_room = max_el - std::abs(elevation.offset);

  SmoothSignal radial;
  radial.harmonics = random_harmonics(rng, 1.0);
  cap_amplitude(radial, 1.0);
  for (auto& h : radial.harmonics) h.amplitude *= cfg.radius_variation;

  SmoothSignal roll;
  roll.offset = 0.5 * (2.0 * unit(rng) - 1.0);
  roll.harmonics = random_harmonics(rng, 0.25 * budget);

  // Small wander of the look-at point so the centre feature is not pinned
  // to the principal point.
  std::array<SmoothSignal, 3> jitter;
  const double jitter_cap = cfg.look_at_wander * cfg.grid_spacing;
  for (auto& j : jitter) {
    std::uniform_real_distribution<double> freq(0.5 * kWanderMaxHz, kWanderMaxHz);
    std::uniform_real_distribution<double> weight(0.2, 1.0);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    j.harmonics.resize(3);
    double total = 0.0;
    for (auto& h : j.harmonics) {
      h.frequency_hz = freq(rng);
      h.phase = phase(rng);
      h.amplitude = weight(rng);
      total += h.amplitude;
    }
    for (auto& h : j.harmonics) h.amplitude *= jitter_cap / total;
  }

  auto build = [&] {
    cap_amplitude(elevation, el_room);
    for (auto& j : jitter) cap_amplitude(j, jitter_cap);
    return Trajectory(Point3::Zero(), cfg.path_radius, azimuth, elevation, radial, roll, jitter, cfg.warmup_s);
  };
  Trajectory traj = build();
  if (budget == 0.0) return traj;
  // The shares above only set the mix; rescale every rate so the measured
  // peak angular speed sits just under the budget.
  const double step = 0.25 / cfg.gyro_rate_hz;
  for (int it = 0; it < 20; ++it) {
    const double peak = traj.peak_angular_speed(cfg.duration_s, step);
    if (peak <= budget && peak >= kPeakTarget * budget * 0.97) break;
    if (peak <= 0.0) break;
    const double s = kPeakTarget * budget / peak;
    scale_rates(azimuth, s);
    scale_rates(elevation, s);
    scale_rates(roll, s);
    for (auto& j : jitter) scale_rates(j, s);
    traj = build();
  }
  return traj;
}

std::vector<GyroSample> sample_gyro(const Trajectory& traj, const SimConfig& cfg,
                                    std::uint64_t seed) {
  cfg.validate();
  auto rng = make_rng(seed, Stream::kGyro);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int n = cfg.gyro_sample_count();
  const double dt = 1.0 / cfg.gyro_rate_hz;
  std::vector<GyroSample> out;
  out.reserve(n);
  Quaternion q_prev = traj.pose(0.0).q;
  for (int k = 0; k < n; ++k) {
    const double t = k / cfg.gyro_rate_hz;
    const Quaternion q_next = traj.pose((k + 1) / cfg.gyro_rate_hz).q;
    // Body-frame increment: q_next = q_prev ⊗ exp(ω·dt).
    AngularRate omega = quat_log(q_prev.conjugate() * q_next) / dt;
    omega += cfg.gyro_bias;
    if (cfg.gyro_noise_std > 0.0) {
      omega += cfg.gyro_noise_std * AngularRate(noise(rng), noise(rng), noise(rng));
    }
    out.push_back({t, omega});
    q_prev = q_next;
  }
  return out;
}

std::vector<Frame> render_observations(const Trajectory& traj, const std::vector<Point3>& points,
                                       const SimConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto rng = make_rng(seed, Stream::kPixels);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = cfg.frame_count();
  std::vector<Frame> frames;
  frames.reserve(n);
  for (int j = 0; j < n; ++j) {
    Frame frame;
    frame.t = j / cfg.frame_rate_hz;
    const Pose pose = traj.pose(frame.t);
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!(camera_depth(points[i], pose) > kDefaultDepthEpsilon)) continue;
      Pixel px = measure_feature(points[i], cfg.true_intrinsics, pose, cfg.distortion_mode);
      if (cfg.pixel_noise_std > 0.0) {
        px.u += cfg.pixel_noise_std * noise(rng);
        px.v += cfg.pixel_noise_std * noise(rng);
      }
      if (cfg.track_dropout_prob > 0.0 && unit(rng) < cfg.track_dropout_prob) continue;
      if (px.u < 0.0 || px.u >= cfg.image_width || px.v < 0.0 || px.v >= cfg.image_height) continue;
      frame.observations.push_back({static_cast<FeatureId>(i), px});
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

SimulatedRun simulate(const SimConfig& cfg, std::uint64_t seed) {
  SimulatedRun run;
  const Trajectory traj = generate_trajectory(cfg, seed);
  run.truth.intrinsics = cfg.true_intrinsics;
  run.truth.points = generate_scene(cfg);
  run.gyro = sample_gyro(traj, cfg, seed);
  run.frames = render_observations(traj, run.truth.points, cfg, seed);
  run.truth.t.reserve(run.gyro.size());
  run.truth.poses.reserve(run.gyro.size());
  for (const auto& s : run.gyro) {
    run.truth.t.push_back(s.t);
    run.truth.poses.push_back(traj.pose(s.t));
  }
  return run;
}

namespace {

TrialRecord run_trial(const SimConfig& sim, const CalibratorConfig& calib,
                      const MonteCarloOptions& options, int trial) {
  TrialRecord rec;
  rec.trial = trial;
  rec.seed = sim.seed + static_cast<std::uint64_t>(trial);
  const SimulatedRun data = simulate(sim, rec.seed);

  std::size_t observed = 0;
  for (const auto& f : data.frames) observed += f.observations.size();
  rec.visibility = static_cast<double>(observed) /
                   (static_cast<double>(data.frames.size()) * data.truth.points.size());

  CalibrationReport report = run(data.gyro, data.frames, calib);
  rec.estimate = report.intrinsics;
  rec.stds = report.stds;
  rec.error = report.intrinsics.to_vector() - sim.true_intrinsics.to_vector();
  rec.reinitialized = report.total_reinitialized;
  rec.gated = report.total_gated;

  if (trial < options.ba_trials) {
    BAOptions ba = options.ba;
    ba.distortion_mode = calib.distortion_mode;
    const BAProblem problem = make_problem(data.frames, report, ba);
    rec.ba = solve(problem, ba);
    rec.ba_error = rec.ba->params.intrinsics.to_vector() - sim.true_intrinsics.to_vector();
  }
  if (options.keep_reports) rec.report = std::move(report);
  return rec;
}

Intrinsics::Vector rms(const std::vector<Intrinsics::Vector>& errors) {
  Intrinsics::Vector acc = Intrinsics::Vector::Zero();
  for (const auto& e : errors) acc += e.cwiseAbs2();
  return (acc / static_cast<double>(errors.size())).cwiseSqrt();
}

}  // namespace

MonteCarloResult run_monte_carlo(const SimConfig& sim, const CalibratorConfig& calib,
                                 const MonteCarloOptions& options) {
  sim.validate();
  calib.validate();
  MonteCarloResult result;
  result.truth = sim.true_intrinsics.to_vector();
  result.trials.resize(sim.n_trials);

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < sim.n_trials; i = next++) {
      result.trials[i] = run_trial(sim, calib, options, i);
    }
  };
  const unsigned n_threads =
      std::clamp<unsigned>(std::thread::hardware_concurrency(), 1u, static_cast<unsigned>(sim.n_trials));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < n_threads; ++k) pool.emplace_back(worker);
  }

  const Intrinsics init{calib.init_focal, calib.init_focal, calib.init_cx, calib.init_cy, 0.0, 0.0};
  result.rmse_initial = (init.to_vector() - result.truth).cwiseAbs();
  std::vector<Intrinsics::Vector> errs;
  std::vector<Intrinsics::Vector> ba_errs;
  for (const auto& t : result.trials) {
    errs.push_back(t.error);
    if (t.ba_error) ba_errs.push_back(*t.ba_error);
  }
  result.rmse_filter = rms(errs);
  if (!ba_errs.empty()) result.rmse_ba = rms(ba_errs);
  return result;
}

}  // namespace gyrocal
