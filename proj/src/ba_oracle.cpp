#include "gyrocal/ba_oracle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "gyrocal/errors.hpp"

namespace gyrocal {

namespace {

constexpr int kMaxDampingAttempts = 12;
constexpr double kMaxLambda = 1e16;
constexpr double kMinLambda = 1e-15;

using Matrix6d = Eigen::Matrix<double, 6, 6>;

Point3 centroid(const std::vector<Point3>& pts) {
  Point3 c = Point3::Zero();
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

// Scales poses and points about the first camera centre so that the
// distance to the point centroid equals `target`. Projections are
// unchanged.
void fix_scale(BAParameters& params, double target) {
  const Point3 origin = params.poses.front().p;
  const double d = (centroid(params.points) - origin).norm();
  if (!(d > 0.0)) return;
  const double s = target / d;
  for (auto& pose : params.poses) pose.p = origin + s * (pose.p - origin);
  for (auto& pt : params.points) pt = origin + s * (pt - origin);
}

double safe_cost(const BAProblem& problem, const BAParameters& params, const BAOptions& options) {
  try {
    return reprojection_cost(problem, params, options).cost;
  } catch (const BehindCameraError&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct Indexing {
  int n_intr = 0;
  int n_points = 0;
  int n_frames = 0;
  int reduced_dim() const { return n_intr + 3 * n_points; }
  int point(int i) const { return n_intr + 3 * i; }
};

// Normal equations JᵀJ δ = −Jᵀr split into pose blocks (U, per frame) and
// the reduced block of intrinsics and points (V), coupled by W.
struct NormalEquations {
  std::vector<Matrix6d> u;
  std::vector<Vector6d> g_pose;
  std::vector<Eigen::Matrix<double, 6, Eigen::Dynamic>> w;
  Eigen::MatrixXd v;
  Eigen::VectorXd g_reduced;

  double gradient_norm() const {
    double m = g_reduced.size() ? g_reduced.cwiseAbs().maxCoeff() : 0.0;
    for (std::size_t f = 1; f < g_pose.size(); ++f) m = std::max(m, g_pose[f].cwiseAbs().maxCoeff());
    return m;
  }
};

NormalEquations build_normal_equations(const BAProblem& problem, const BAParameters& params,
                                       const BAOptions& options, const Indexing& idx) {
  const int nb = idx.reduced_dim();
  NormalEquations ne;
  ne.u.assign(idx.n_frames, Matrix6d::Zero());
  ne.g_pose.assign(idx.n_frames, Vector6d::Zero());
  ne.w.assign(idx.n_frames, Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, nb));
  ne.v = Eigen::MatrixXd::Zero(nb, nb);
  ne.g_reduced = Eigen::VectorXd::Zero(nb);

  for (const BAObservation& obs : problem.observations) {
    const ResidualJacobian j = residual_jacobian(obs, params, options);
    const auto j_intr = j.intrinsics.leftCols(idx.n_intr);
    const int pi = idx.point(obs.point);

    ne.v.topLeftCorner(idx.n_intr, idx.n_intr) += j_intr.transpose() * j_intr;
    ne.v.block(0, pi, idx.n_intr, 3) += j_intr.transpose() * j.point;
    ne.v.block(pi, 0, 3, idx.n_intr) += j.point.transpose() * j_intr;
    ne.v.block<3, 3>(pi, pi) += j.point.transpose() * j.point;
    ne.g_reduced.head(idx.n_intr) += j_intr.transpose() * j.residual;
    ne.g_reduced.segment<3>(pi) += j.point.transpose() * j.residual;

    if (obs.frame == 0) continue;  // gauge: first pose fixed
    ne.u[obs.frame] += j.pose.transpose() * j.pose;
    ne.g_pose[obs.frame] += j.pose.transpose() * j.residual;
    ne.w[obs.frame].leftCols(idx.n_intr) += j.pose.transpose() * j_intr;
    ne.w[obs.frame].middleCols<3>(pi) += j.pose.transpose() * j.point;
  }
  return ne;
}

// Solves the Marquardt-damped system via the Schur complement on the
// reduced block. Returns false on a failed factorization.
bool solve_damped(const NormalEquations& ne, double lambda, const Indexing& idx,
                  std::vector<Vector6d>& d_pose, Eigen::VectorXd& d_reduced) {
  const int nb = idx.reduced_dim();
  Eigen::MatrixXd s = ne.v;
  s.diagonal() += lambda * ne.v.diagonal().cwiseMax(1e-12);
  Eigen::VectorXd rhs = -ne.g_reduced;

  std::vector<Eigen::LDLT<Matrix6d>> u_inv(idx.n_frames);
  std::vector<Eigen::Matrix<double, 6, Eigen::Dynamic>> y(idx.n_frames);
  for (int f = 1; f < idx.n_frames; ++f) {
    Matrix6d u = ne.u[f];
    u.diagonal() += lambda * ne.u[f].diagonal().cwiseMax(1e-12);
    u_inv[f].compute(u);
    if (u_inv[f].info() != Eigen::Success) return false;
    y[f] = u_inv[f].solve(ne.w[f]);
    s.noalias() -= ne.w[f].transpose() * y[f];
    rhs.noalias() += y[f].transpose() * ne.g_pose[f];
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
  if (ldlt.info() != Eigen::Success) return false;
  d_reduced = ldlt.solve(rhs);
  if (!d_reduced.allFinite() || d_reduced.size() != nb) return false;

  d_pose.assign(idx.n_frames, Vector6d::Zero());
  for (int f = 1; f < idx.n_frames; ++f) {
    d_pose[f] = u_inv[f].solve(-ne.g_pose[f] - ne.w[f] * d_reduced);
    if (!d_pose[f].allFinite()) return false;
  }
  return true;
}

BAParameters apply_step(const BAParameters& params, const std::vector<Vector6d>& d_pose,
                        const Eigen::VectorXd& d_reduced, const Indexing& idx) {
  BAParameters out = params;
  Intrinsics::Vector c = params.intrinsics.to_vector();
  c.head(idx.n_intr) += d_reduced.head(idx.n_intr);
  out.intrinsics = Intrinsics::from_vector(c);
  for (int f = 1; f < idx.n_frames; ++f) out.poses[f] = perturb_pose(params.poses[f], d_pose[f]);
  for (int i = 0; i < idx.n_points; ++i) out.points[i] += d_reduced.segment<3>(idx.point(i));
  return out;
}

// Least-squares intersection of the rays through the observed pixels.
std::optional<Point3> triangulate(const std::vector<std::pair<Pose, Pixel>>& views,
                                  const Intrinsics& intr, DistortionMode mode) {
  if (views.size() < 2) return std::nullopt;
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (const auto& [pose, px] : views) {
    const Point3 on_ray = back_project(px, intr, pose, 1.0, mode);
    const Eigen::Vector3d d = (on_ray - pose.p).normalized();
    const Eigen::Matrix3d proj = Eigen::Matrix3d::Identity() - d * d.transpose();
    a += proj;
    b += proj * pose.p;
  }
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(a);
  if (lu.rank() < 3) return std::nullopt;
  // Rays must not be nearly parallel.
  const Eigen::Vector3d ev = a.selfadjointView<Eigen::Lower>().eigenvalues();
  if (ev.minCoeff() < 1e-6 * ev.maxCoeff()) return std::nullopt;
  return Point3(lu.solve(b));
}

}  // namespace

void BAProblem::validate() const {
  if (observations.empty()) throw InputError("bundle adjustment problem has no observations");
  if (initial.poses.empty() || initial.points.empty()) throw InputError("empty BA parameters");
  if (point_ids.size() != initial.points.size()) throw InputError("point id table size mismatch");
  const int nf = static_cast<int>(initial.poses.size());
  const int np = static_cast<int>(initial.points.size());
  for (const auto& o : observations) {
    if (o.frame < 0 || o.frame >= nf || o.point < 0 || o.point >= np) {
      throw InputError("observation references a missing frame or point");
    }
  }
}

Reprojection reprojection_cost(const BAProblem& problem, const BAParameters& params,
                               const BAOptions& options) {
  Reprojection r;
  r.residuals.resize(2 * static_cast<Eigen::Index>(problem.observations.size()));
  for (std::size_t k = 0; k < problem.observations.size(); ++k) {
    const BAObservation& o = problem.observations[k];
    const Pixel pred = measure_feature(params.points[o.point], params.intrinsics, params.poses[o.frame],
                                       options.distortion_mode, options.depth_epsilon);
    r.residuals.segment<2>(2 * static_cast<Eigen::Index>(k)) = pred.vec() - o.pixel.vec();
  }
  r.cost = r.residuals.squaredNorm();
  return r;
}

Pose perturb_pose(const Pose& pose, const Vector6d& delta) {
  return {pose.p + delta.head<3>(), normalize(pose.q * quat_exp(delta.tail<3>()))};
}

ResidualJacobian residual_jacobian(const BAObservation& obs, const BAParameters& params,
                                   const BAOptions& options) {
  const Pose& pose = params.poses.at(obs.frame);
  const FeatureJacobian fj = feature_jacobian(params.points.at(obs.point), params.intrinsics, pose,
                                              options.distortion_mode, options.depth_epsilon);
  ResidualJacobian j;
  j.residual = fj.prediction.vec() - obs.pixel.vec();
  j.intrinsics = fj.intrinsics;
  j.point = fj.point;
  // q ⊗ (1, δθ/2): ∂q/∂δθ = ½·[−q_vᵀ; w·I + [q_v]×].
  const Quaternion& q = pose.q;
  Eigen::Matrix<double, 4, 3> dq;
  dq.row(0) = -0.5 * q.vec().transpose();
  dq.bottomRows<3>() = 0.5 * (q.w * Eigen::Matrix3d::Identity() + skew(q.vec()));
  j.pose.leftCols<3>() = fj.position;
  j.pose.rightCols<3>() = fj.orientation * dq;
  return j;
}

BASolution solve(const BAProblem& problem, const BAOptions& options) {
  problem.validate();
  Indexing idx;
  idx.n_intr = options.optimize_distortion ? 6 : 4;
  idx.n_points = static_cast<int>(problem.initial.points.size());
  idx.n_frames = static_cast<int>(problem.initial.poses.size());

  BASolution sol;
  sol.params = problem.initial;
  sol.cost = safe_cost(problem, sol.params, options);
  sol.initial_cost = sol.cost;
  if (!std::isfinite(sol.cost)) throw NumericalError("bundle adjustment start has non-finite cost");
  sol.cost_history.push_back(sol.cost);

  const double scale = (centroid(sol.params.points) - sol.params.poses.front().p).norm();
  double lambda = options.initial_lambda;
  sol.status = BAStatus::kMaxIterations;

  for (sol.iterations = 0; sol.iterations < options.max_iters; ++sol.iterations) {
    const NormalEquations ne = build_normal_equations(problem, sol.params, options, idx);
    if (ne.gradient_norm() < options.tol) {
      sol.status = BAStatus::kConverged;
      break;
    }

    bool accepted = false;
    bool any_solved = false;
    double relative_decrease = 0.0;
    for (int attempt = 0; attempt < kMaxDampingAttempts && lambda < kMaxLambda; ++attempt) {
      std::vector<Vector6d> d_pose;
      Eigen::VectorXd d_reduced;
      if (!solve_damped(ne, lambda, idx, d_pose, d_reduced)) {
        lambda *= 10.0;
        continue;
      }
      any_solved = true;
      BAParameters candidate = apply_step(sol.params, d_pose, d_reduced, idx);
      fix_scale(candidate, scale);
      const double cost = safe_cost(problem, candidate, options);
      if (cost < sol.cost) {
        relative_decrease = (sol.cost - cost) / sol.cost;
        sol.params = std::move(candidate);
        sol.cost = cost;
        sol.cost_history.push_back(cost);
        lambda = std::max(lambda / 10.0, kMinLambda);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }

    if (!accepted) {
      // Solvable steps that never decrease the cost mean a numerical minimum.
      sol.status = any_solved ? BAStatus::kConverged : BAStatus::kBreakdown;
      ++sol.iterations;
      break;
    }
    if (relative_decrease < options.tol) {
      sol.status = BAStatus::kConverged;
      ++sol.iterations;
      break;
    }
  }
  return sol;
}

BAProblem make_problem(std::span<const Frame> frames, const CalibrationReport& report,
                       const BAOptions& options) {
  BAProblem problem;
  problem.initial.intrinsics = report.intrinsics;
  if (!options.optimize_distortion) {
    // Distortion-free model: k1 and k2 stay at zero.
    problem.initial.intrinsics.k1 = 0.0;
    problem.initial.intrinsics.k2 = 0.0;
  }

  // Report frames are matched to track frames by timestamp.
  std::map<double, const FrameRecord*> by_time;
  for (const auto& rec : report.frames) by_time.emplace(rec.t, &rec);
  std::vector<const Frame*> used;
  for (const Frame& f : frames) {
    auto it = by_time.lower_bound(f.t - 1e-9);
    if (it == by_time.end() || std::abs(it->first - f.t) > 1e-9 || f.observations.empty()) continue;
    used.push_back(&f);
    problem.frame_times.push_back(f.t);
    problem.initial.poses.push_back({it->second->pose.p, normalize(it->second->pose.q)});
  }
  if (used.empty()) throw InputError("no track frame matches the report trace");

  std::map<FeatureId, Point3> known(report.features.begin(), report.features.end());
  std::map<FeatureId, std::vector<std::pair<Pose, Pixel>>> views;
  for (std::size_t f = 0; f < used.size(); ++f) {
    for (const auto& obs : used[f]->observations) {
      views[obs.id].emplace_back(problem.initial.poses[f], obs.pixel);
    }
  }

  std::map<FeatureId, int> point_index;
  for (const auto& [id, v] : views) {
    std::optional<Point3> pt = triangulate(v, problem.initial.intrinsics, options.distortion_mode);
    if (!pt) {
      if (auto it = known.find(id); it != known.end()) pt = it->second;
    }
    if (!pt) continue;
    point_index[id] = static_cast<int>(problem.initial.points.size());
    problem.initial.points.push_back(*pt);
    problem.point_ids.push_back(id);
  }

  for (std::size_t f = 0; f < used.size(); ++f) {
    for (const auto& obs : used[f]->observations) {
      const auto it = point_index.find(obs.id);
      if (it == point_index.end() ||
          !(camera_depth(problem.initial.points[it->second], problem.initial.poses[f]) >
            options.depth_epsilon)) {
        ++problem.dropped_observations;
        continue;
      }
      problem.observations.push_back({static_cast<int>(f), it->second, obs.pixel});
    }
  }
  problem.validate();
  return problem;
}

}  // namespace gyrocal
