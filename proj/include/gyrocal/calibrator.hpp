#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gyrocal/camera.hpp"
#include "gyrocal/dynamics.hpp"
#include "gyrocal/filter.hpp"

namespace gyrocal {

using FeatureId = std::int64_t;

struct FeatureObservation {
  FeatureId id = 0;
  Pixel pixel;
};

/// All feature observations sharing one image timestamp.
struct Frame {
  double t = 0.0;
  std::vector<FeatureObservation> observations;
};

enum class SlotStatus { kActive, kAwaitingReinit };

/// One of the fixed feature positions z⁽ⁱ⁾ in the state, and the track that
/// currently owns it.
struct FeatureSlot {
  FeatureId id = -1;
  int state_index = 0;
  SlotStatus status = SlotStatus::kAwaitingReinit;
  int age = 0;  // frames since (re)initialization
};

/// Prior standard deviations of the non-feature state.
struct InitialStds {
  double fx = 100.0;
  double fy = 100.0;
  double cx = 20.0;
  double cy = 20.0;
  double k1 = 0.1;
  double k2 = 0.05;
  double position = 0.0;
  double velocity = 0.5;
  double orientation = 0.1;
};

struct CalibratorConfig {
  int image_width = 480;
  int image_height = 640;
  double pixel_noise_std = 2.5;
  double gate_chi2_quantile = 0.999;
  double init_focal = 700.0;
  double init_cx = 240.0;
  double init_cy = 320.0;
  InitialStds init_stds;
  double feature_init_depth = 5.0;
  double feature_init_std = 1.0;
  /// Re-initialized features keep their correlation with the camera state
  /// they were back-projected through. Off: cross-covariances are zeroed.
  bool correlated_reinit = true;
  int max_features = 27;
  double max_gap = 0.2;
  double depth_epsilon = kDefaultDepthEpsilon;
  ProcessNoiseConfig process;
  DistortionMode distortion_mode = DistortionMode::kCentered;

  /// Throws InputError on out-of-range values.
  void validate() const;
};

struct FrameDiagnostics {
  double t = 0.0;
  int observed = 0;
  int inliers = 0;
  int gated = 0;
  int reinitialized = 0;
  int lost = 0;
  int unassigned = 0;      // new tracks with no free slot
  double innovation_rms = 0.0;  // px, inliers before the update
  double mean_nis = 0.0;        // mean per-feature Mahalanobis distance² of inliers
  bool skipped = false;         // observations present but nothing usable
  bool rejected = false;        // joint update refused (ill-conditioned S)
};

struct FrameRecord {
  double t = 0.0;
  Intrinsics::Vector intrinsics = Intrinsics::Vector::Zero();
  Intrinsics::Vector stds = Intrinsics::Vector::Zero();
  Pose pose;
  FrameDiagnostics diagnostics;
};

struct CalibrationReport {
  Intrinsics intrinsics;
  Intrinsics::Vector stds = Intrinsics::Vector::Zero();
  Pose final_pose;
  std::vector<FrameRecord> frames;
  std::vector<std::pair<FeatureId, Point3>> features;  // active tracks at the end
  int gyro_samples = 0;
  int total_gated = 0;
  int total_reinitialized = 0;
  int total_lost = 0;
  int skipped_frames = 0;
  int rejected_updates = 0;
  CalibratorConfig config;
};

/// Initial belief: intrinsics from the config, p = 0, v = 0, q = identity,
/// observed features back-projected to feature_init_depth in observation
/// order (slot i holds observations[i]). Throws InputError when empty.
GaussianBelief init_state(const CalibratorConfig& cfg,
                          std::span<const FeatureObservation> first_frame,
                          const StateLayout& layout);

/// Sequential gyro/camera filter for one camera. Not thread-safe; separate
/// instances are independent.
class Calibrator {
 public:
  Calibrator(CalibratorConfig cfg, const Frame& first_frame);

  const CalibratorConfig& config() const { return cfg_; }
  const StateLayout& layout() const { return layout_; }
  const GaussianBelief& belief() const { return belief_; }
  const std::vector<FeatureSlot>& slots() const { return slots_; }
  double gate_threshold() const { return gate_threshold_; }

  /// One prediction over dt with ω held constant. Throws InputError on
  /// dt < 0 or dt > max_gap.
  void step_gyro(const AngularRate& omega, double dt);

  /// Gate, update, renormalize, then (re)initialize gated, lost and new
  /// tracks. Never throws for bad observations; see the diagnostics.
  FrameDiagnostics step_frame(const Frame& frame);

  /// Resets slot's feature to the back-projection of `observation` through
  /// the current camera estimate and drops its correlations.
  void reinit_feature(int slot, const Pixel& observation);

  /// Assigns a track to a slot and reinitializes it.
  void assign_slot(int slot, FeatureId id, const Pixel& observation);

  FrameRecord record(const FrameDiagnostics& diag) const;

  /// Replaces the belief; used by tests to start from a known state.
  void set_belief(GaussianBelief belief);

 private:
  CalibratorConfig cfg_;
  StateLayout layout_;
  GaussianBelief belief_;
  std::vector<FeatureSlot> slots_;
  double gate_threshold_;
};

/// Sees the filter after every recorded frame, the initial one included.
using FrameObserver = std::function<void(const Calibrator&, const FrameRecord&)>;

/// Merges the streams by timestamp and runs the filter over them.
/// Initialization happens at the first frame with observations; earlier
/// frames are ignored. Throws InputError on empty or unsorted streams, or
/// frames outside the gyro time range.
CalibrationReport run(std::span<const GyroSample> gyro, std::span<const Frame> frames,
                      const CalibratorConfig& cfg, const FrameObserver& observer = {});

}  // namespace gyrocal
