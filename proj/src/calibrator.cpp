#include "gyrocal/calibrator.hpp"

#include <Eigen/Cholesky>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "gyrocal/errors.hpp"

namespace gyrocal {

namespace {

Intrinsics initial_intrinsics(const CalibratorConfig& cfg) {
  return {cfg.init_focal, cfg.init_focal, cfg.init_cx, cfg.init_cy, 0.0, 0.0};
}

double square(double x) { return x * x; }

}  // namespace

void CalibratorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("invalid calibrator config: " + msg); };
  if (image_width <= 0 || image_height <= 0) fail("image size must be positive");
  if (!(pixel_noise_std > 0.0)) fail("pixel_noise_std must be positive");
  if (!(gate_chi2_quantile > 0.0 && gate_chi2_quantile < 1.0)) fail("gate quantile must be in (0,1)");
  if (!(init_focal > 0.0)) fail("init_focal must be positive");
  if (!(feature_init_std > 0.0)) fail("feature_init_std must be positive");
  if (!(feature_init_depth > 0.0)) fail("feature_init_depth must be positive");
  if (max_features < 1) fail("max_features must be at least 1");
  if (!(max_gap > 0.0)) fail("max_gap must be positive");
  if (!(depth_epsilon >= 0.0)) fail("depth_epsilon must be non-negative");
  const InitialStds& s = init_stds;
  for (double v : {s.fx, s.fy, s.cx, s.cy, s.k1, s.k2, s.position, s.velocity, s.orientation}) {
    if (!(v >= 0.0)) fail("initial standard deviations must be non-negative");
  }
  if (!(process.accel_spectral_density >= 0.0) || !(process.gyro_rate_std >= 0.0)) {
    fail("process noise densities must be non-negative");
  }
  if (!process.gyro_bias.allFinite()) fail("gyro bias must be finite");
}

GaussianBelief init_state(const CalibratorConfig& cfg,
                          std::span<const FeatureObservation> first_frame,
                          const StateLayout& layout) {
  if (first_frame.empty()) throw InputError("cannot initialize from an empty frame");
  const int n = layout.dim();
  GaussianBelief b{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};

  const Intrinsics intr = initial_intrinsics(cfg);
  b.mean.segment<6>(StateLayout::kIntrinsics) = intr.to_vector();
  b.mean.segment<4>(StateLayout::kOrientation) = Quaternion::identity().to_vector();

  const InitialStds& s = cfg.init_stds;
  Intrinsics::Vector c_std;
  c_std << s.fx, s.fy, s.cx, s.cy, s.k1, s.k2;
  b.cov.diagonal().segment<6>(StateLayout::kIntrinsics) = c_std.array().square();
  b.cov.diagonal().segment<3>(StateLayout::kPosition).setConstant(square(s.position));
  b.cov.diagonal().segment<3>(StateLayout::kVelocity).setConstant(square(s.velocity));
  b.cov.diagonal().segment<4>(StateLayout::kOrientation).setConstant(square(s.orientation));

  const Pose origin;
  const double fvar = square(cfg.feature_init_std);
  for (int i = 0; i < layout.num_features(); ++i) {
    const int off = layout.feature(i);
    if (i < static_cast<int>(first_frame.size())) {
      b.mean.segment<3>(off) = back_project(first_frame[i].pixel, intr, origin,
                                            cfg.feature_init_depth, cfg.distortion_mode);
    } else {
      b.mean.segment<3>(off) = Point3(0.0, 0.0, cfg.feature_init_depth);
    }
    b.cov.diagonal().segment<3>(off).setConstant(fvar);
  }
  return b;
}

Calibrator::Calibrator(CalibratorConfig cfg, const Frame& first_frame)
    : cfg_(std::move(cfg)), layout_(cfg_.max_features) {
  cfg_.validate();
  belief_ = init_state(cfg_, first_frame.observations, layout_);
  slots_.resize(cfg_.max_features);
  for (int i = 0; i < cfg_.max_features; ++i) {
    slots_[i].state_index = layout_.feature(i);
    if (i < static_cast<int>(first_frame.observations.size())) {
      slots_[i].id = first_frame.observations[i].id;
      slots_[i].status = SlotStatus::kActive;
    }
  }
  gate_threshold_ =
      boost::math::quantile(boost::math::chi_squared(2.0), cfg_.gate_chi2_quantile);
}

void Calibrator::set_belief(GaussianBelief belief) {
  if (belief.dim() != layout_.dim()) throw std::invalid_argument("belief dimension mismatch");
  belief_ = std::move(belief);
}

void Calibrator::step_gyro(const AngularRate& omega, double dt) {
  if (!(dt >= 0.0)) throw InputError("gyro timestamp regression (dt = " + std::to_string(dt) + ")");
  if (dt > cfg_.max_gap) {
    throw InputError("gyro gap of " + std::to_string(dt) + " s exceeds max_gap");
  }
  if (dt == 0.0) return;
  const Quaternion q = layout_.pose(belief_.mean).q;
  predict_block(belief_, StateLayout::kPosition, motion_transition(dt, omega, cfg_.process),
                motion_process_noise(dt, q, cfg_.process));
}

void Calibrator::reinit_feature(int slot, const Pixel& observation) {
  FeatureSlot& s = slots_.at(slot);
  const int off = s.state_index;
  auto place = [&](const Eigen::VectorXd& x) {
    const Pose pose = layout_.pose(x);
    return back_project(observation, layout_.intrinsics(x), {pose.p, normalize(pose.q)},
                        cfg_.feature_init_depth, cfg_.distortion_mode);
  };
  belief_.mean.segment<3>(off) = place(belief_.mean);
  belief_.cov.middleRows<3>(off).setZero();
  belief_.cov.middleCols<3>(off).setZero();
  Eigen::Matrix3d block = square(cfg_.feature_init_std) * Eigen::Matrix3d::Identity();

  if (cfg_.correlated_reinit) {
    // The point inherits the errors of the camera it was back-projected
    // through: cross-covariance G·P and G·P·Gᵀ on top of the isotropic term.
    std::vector<int> cols;
    for (int k = 0; k < 6; ++k) cols.push_back(StateLayout::kIntrinsics + k);
    for (int k = 0; k < 3; ++k) cols.push_back(StateLayout::kPosition + k);
    for (int k = 0; k < 4; ++k) cols.push_back(StateLayout::kOrientation + k);
    Eigen::Matrix<double, 3, Eigen::Dynamic> g(3, cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double x = belief_.mean(cols[k]);
      const double h = 1e-6 * std::max(1.0, std::abs(x));
      Eigen::VectorXd a = belief_.mean, b = belief_.mean;
      a(cols[k]) += h;
      b(cols[k]) -= h;
      g.col(k) = (place(a) - place(b)) / (2.0 * h);
    }
    const Eigen::MatrixXd cross = g * belief_.cov(cols, Eigen::all);
    belief_.cov.middleRows<3>(off) = cross;
    belief_.cov.middleCols<3>(off) = cross.transpose();
    block += g * belief_.cov(cols, cols) * g.transpose();
  }
  belief_.cov.block<3, 3>(off, off) = 0.5 * (block + block.transpose());
  s.status = SlotStatus::kActive;
  s.age = 0;
}

void Calibrator::assign_slot(int slot, FeatureId id, const Pixel& observation) {
  slots_.at(slot).id = id;
  reinit_feature(slot, observation);
}

FrameDiagnostics Calibrator::step_frame(const Frame& frame) {
  FrameDiagnostics diag;
  diag.t = frame.t;
  diag.observed = static_cast<int>(frame.observations.size());

  std::unordered_map<FeatureId, int> slot_of;
  for (int i = 0; i < static_cast<int>(slots_.size()); ++i) {
    if (slots_[i].status == SlotStatus::kActive) slot_of.emplace(slots_[i].id, i);
  }

  const double pixel_var = square(cfg_.pixel_noise_std);
  const Eigen::Matrix2d sigma = pixel_var * Eigen::Matrix2d::Identity();
  const Intrinsics intr = layout_.intrinsics(belief_.mean);
  const Pose pose = layout_.pose(belief_.mean);

  std::vector<bool> seen(slots_.size(), false);
  std::vector<int> inliers;
  std::vector<Eigen::Vector2d> inlier_y;
  std::vector<std::pair<int, Pixel>> reinit;
  std::vector<const FeatureObservation*> fresh;
  double sq_innovation = 0.0;
  double nis = 0.0;

  for (const FeatureObservation& obs : frame.observations) {
    const auto it = slot_of.find(obs.id);
    if (it == slot_of.end()) {
      fresh.push_back(&obs);
      continue;
    }
    const int slot = it->second;
    seen[slot] = true;
    const Point3 z = layout_.feature_position(belief_.mean, slot);
    if (!(camera_depth(z, pose) > cfg_.depth_epsilon)) {
      ++diag.gated;
      reinit.emplace_back(slot, obs.pixel);
      continue;
    }
    const Eigen::MatrixXd h = measurement_jacobian(belief_.mean, layout_, slot,
                                                   cfg_.distortion_mode, cfg_.depth_epsilon);
    const Pixel pred = measure_feature(z, intr, pose, cfg_.distortion_mode, cfg_.depth_epsilon);
    const Eigen::Vector2d v = obs.pixel.vec() - pred.vec();
    const Eigen::Matrix2d s = h * belief_.cov * h.transpose() + sigma;
    const double d2 = v.dot(s.ldlt().solve(v));
    if (!(d2 <= gate_threshold_)) {
      ++diag.gated;
      reinit.emplace_back(slot, obs.pixel);
      continue;
    }
    inliers.push_back(slot);
    inlier_y.push_back(obs.pixel.vec());
    sq_innovation += v.squaredNorm();
    nis += d2;
  }

  for (int i = 0; i < static_cast<int>(slots_.size()); ++i) {
    if (slots_[i].status == SlotStatus::kActive && !seen[i]) {
      slots_[i].status = SlotStatus::kAwaitingReinit;
      slots_[i].id = -1;
      ++diag.lost;
    }
  }

  diag.inliers = static_cast<int>(inliers.size());
  if (!inliers.empty()) {
    diag.innovation_rms = std::sqrt(sq_innovation / (2.0 * diag.inliers));
    diag.mean_nis = nis / diag.inliers;

    const int m = 2 * diag.inliers;
    Eigen::VectorXd y(m);
    for (int k = 0; k < diag.inliers; ++k) y.segment<2>(2 * k) = inlier_y[k];

    MeasurementModel model;
    model.noise_cov = pixel_var * Eigen::MatrixXd::Identity(m, m);
    model.predict = [&](const Eigen::VectorXd& x) {
      Eigen::VectorXd out(m);
      const Intrinsics c = layout_.intrinsics(x);
      const Pose ps = layout_.pose(x);
      for (int k = 0; k < diag.inliers; ++k) {
        out.segment<2>(2 * k) = measure_feature(layout_.feature_position(x, inliers[k]), c, ps,
                                                cfg_.distortion_mode, cfg_.depth_epsilon)
                                    .vec();
      }
      return out;
    };
    model.jacobian = [&](const Eigen::VectorXd& x) {
      Eigen::MatrixXd out(m, layout_.dim());
      for (int k = 0; k < diag.inliers; ++k) {
        out.middleRows<2>(2 * k) =
            measurement_jacobian(x, layout_, inliers[k], cfg_.distortion_mode, cfg_.depth_epsilon);
      }
      return out;
    };
    try {
      belief_ = renormalize_quaternion(update(belief_, y, model).belief, layout_);
    } catch (const UpdateRejectedError&) {
      diag.rejected = true;
    }
  } else if (diag.observed > 0 && diag.gated > 0) {
    diag.skipped = true;
  }

  for (const auto& [slot, px] : reinit) {
    reinit_feature(slot, px);
    ++diag.reinitialized;
  }
  for (const FeatureObservation* obs : fresh) {
    int free_slot = -1;
    for (int i = 0; i < static_cast<int>(slots_.size()); ++i) {
      if (slots_[i].status == SlotStatus::kAwaitingReinit) {
        free_slot = i;
        break;
      }
    }
    if (free_slot < 0) {
      ++diag.unassigned;
      continue;
    }
    assign_slot(free_slot, obs->id, obs->pixel);
    ++diag.reinitialized;
  }
  for (int slot : inliers) ++slots_[slot].age;
  return diag;
}

FrameRecord Calibrator::record(const FrameDiagnostics& diag) const {
  FrameRecord r;
  r.t = diag.t;
  r.intrinsics = belief_.mean.segment<6>(StateLayout::kIntrinsics);
  r.stds = belief_.cov.diagonal().segment<6>(StateLayout::kIntrinsics).cwiseMax(0.0).cwiseSqrt();
  r.pose = layout_.pose(belief_.mean);
  r.diagnostics = diag;
  return r;
}

CalibrationReport run(std::span<const GyroSample> gyro, std::span<const Frame> frames,
                      const CalibratorConfig& cfg, const FrameObserver& observer) {
  if (gyro.empty()) throw InputError("empty gyro stream");
  if (frames.empty()) throw InputError("empty frame stream");
  for (std::size_t i = 1; i < gyro.size(); ++i) {
    if (!(gyro[i].t > gyro[i - 1].t)) {
      throw InputError("gyro stream not strictly increasing at sample " + std::to_string(i));
    }
  }
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (!(frames[i].t > frames[i - 1].t)) {
      throw InputError("frame stream not strictly increasing at frame " + std::to_string(i));
    }
  }
  if (frames.front().t < gyro.front().t || frames.back().t > gyro.back().t) {
    throw InputError("frame timestamps fall outside the gyro time range");
  }

  std::size_t first = 0;
  while (first < frames.size() && frames[first].observations.empty()) ++first;
  if (first == frames.size()) throw InputError("no frame contains observations");

  Calibrator cal(cfg, frames[first]);
  CalibrationReport report;
  report.config = cal.config();

  const double t0 = frames[first].t;
  std::size_t g = 0;
  AngularRate held = AngularRate::Zero();
  while (g < gyro.size() && gyro[g].t <= t0) held = gyro[g++].omega;
  double t_last = t0;
  report.gyro_samples = static_cast<int>(g);

  FrameDiagnostics init_diag;
  init_diag.t = t0;
  init_diag.observed = static_cast<int>(frames[first].observations.size());
  init_diag.reinitialized = std::min(init_diag.observed, cfg.max_features);
  init_diag.unassigned = init_diag.observed - init_diag.reinitialized;
  report.frames.push_back(cal.record(init_diag));
  report.total_reinitialized += init_diag.reinitialized;
  if (observer) observer(cal, report.frames.back());

  auto advance_to = [&](double t) {
    cal.step_gyro(held, t - t_last);
    t_last = t;
  };

  for (std::size_t f = first + 1; f < frames.size(); ++f) {
    const Frame& frame = frames[f];
    while (g < gyro.size() && gyro[g].t <= frame.t) {
      advance_to(gyro[g].t);
      held = gyro[g].omega;
      ++g;
      ++report.gyro_samples;
    }
    advance_to(frame.t);
    const FrameDiagnostics diag = cal.step_frame(frame);
    report.frames.push_back(cal.record(diag));
    if (observer) observer(cal, report.frames.back());
    report.total_gated += diag.gated;
    report.total_reinitialized += diag.reinitialized;
    report.total_lost += diag.lost;
    report.skipped_frames += diag.skipped ? 1 : 0;
    report.rejected_updates += diag.rejected ? 1 : 0;
  }
  for (; g < gyro.size(); ++g) {
    advance_to(gyro[g].t);
    held = gyro[g].omega;
    ++report.gyro_samples;
  }

  const GaussianBelief& b = cal.belief();
  report.intrinsics = cal.layout().intrinsics(b.mean);
  report.stds = b.cov.diagonal().segment<6>(StateLayout::kIntrinsics).cwiseMax(0.0).cwiseSqrt();
  report.final_pose = cal.layout().pose(b.mean);
  report.final_pose.q = normalize(report.final_pose.q);
  for (const FeatureSlot& s : cal.slots()) {
    if (s.status == SlotStatus::kActive) {
      report.features.emplace_back(s.id, b.mean.segment<3>(s.state_index));
    }
  }
  return report;
}

}  // namespace gyrocal
