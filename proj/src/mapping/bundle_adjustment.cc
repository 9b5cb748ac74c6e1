#include "endoslam/mapping/bundle_adjustment.h"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "endoslam/tracking/pose_optimizer.h"

namespace endoslam {

Mat23 point_projection_jacobian(const Pose& pose, const Point3& point, const CameraModel& cam) {
  return cam.projection_jacobian(pose.transform(point)) * pose.rotation;
}

namespace {

using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

// Parameter layout: free poses first (6 each), then points (3 each).
struct Layout {
  std::vector<int> pose_index;  // -1 for fixed poses
  int n_free = 0;
  std::size_t n_points = 0;

  explicit Layout(const BaProblem& p) : pose_index(p.poses.size(), -1), n_points(p.points.size()) {
    for (std::size_t i = 0; i < p.poses.size(); ++i)
      if (!(i < p.pose_fixed.size() && p.pose_fixed[i])) pose_index[i] = n_free++;
  }
  Eigen::Index size() const { return 6 * n_free + 3 * static_cast<Eigen::Index>(n_points); }
  Eigen::Index point_offset(std::size_t j) const {
    return 6 * n_free + 3 * static_cast<Eigen::Index>(j);
  }
};

double level_sigma(const BaOptions& o, int level) { return std::pow(o.scale_factor, level); }

struct Linearization {
  // Per free pose 6x6 blocks, per point 3x3 blocks, pose-point couplings.
  std::vector<Mat6> hpp;
  std::vector<Vec6> gp;
  std::vector<Mat3> hll;
  std::vector<Vec3> gl;
  std::vector<Mat63> hpl;  // one per observation (zero for fixed poses)
};

// Accumulates J^T W J and J^T W r with r = observed - projected.
Linearization linearize(const BaProblem& p, const Layout& layout, const CameraModel& cam,
                        const BaOptions& o) {
  Linearization lin;
  lin.hpp.assign(layout.n_free, Mat6::Zero());
  lin.gp.assign(layout.n_free, Vec6::Zero());
  lin.hll.assign(p.points.size(), Mat3::Zero());
  lin.gl.assign(p.points.size(), Vec3::Zero());
  lin.hpl.assign(p.observations.size(), Mat63::Zero());
  for (std::size_t k = 0; k < p.observations.size(); ++k) {
    const BaObservation& ob = p.observations[k];
    const Pose& pose = p.poses[ob.pose];
    const Point3& x = p.points[ob.point];
    const Vec3 pc = pose.transform(x);
    const auto px = cam.project_camera(pc);
    if (!px) continue;
    const double sigma = level_sigma(o, ob.level);
    const Vec2 r = ob.pixel - *px;
    const double e = r.norm() / sigma;
    const double w = huber_weight(e, o.huber_delta) / (sigma * sigma);
    const Mat23 jpi = cam.projection_jacobian(pc);
    const Mat23 jl = jpi * pose.rotation;
    lin.hll[ob.point].noalias() += w * jl.transpose() * jl;
    lin.gl[ob.point].noalias() += w * jl.transpose() * r;
    const int pi = layout.pose_index[ob.pose];
    if (pi < 0) continue;
    Mat36 dpc;
    dpc.leftCols<3>() = -skew(pc);
    dpc.rightCols<3>() = Mat3::Identity();
    const Mat26 jp = jpi * dpc;
    lin.hpp[pi].noalias() += w * jp.transpose() * jp;
    lin.gp[pi].noalias() += w * jp.transpose() * r;
    lin.hpl[k].noalias() = w * jp.transpose() * jl;
  }
  return lin;
}

// Floor of the damping; keeps steps along near-null gauge directions bounded.
constexpr double kMinDamping = 1e-6;

// Solves (H + mu I) delta = g; nullopt on a numerically singular system.
std::optional<Eigen::VectorXd> solve_dense(const BaProblem& p, const Layout& layout,
                                           const Linearization& lin, double mu) {
  const Eigen::Index n = layout.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd g(n);
  for (int i = 0; i < layout.n_free; ++i) {
    h.block<6, 6>(6 * i, 6 * i) = lin.hpp[i];
    g.segment<6>(6 * i) = lin.gp[i];
  }
  for (std::size_t j = 0; j < p.points.size(); ++j) {
    const Eigen::Index o = layout.point_offset(j);
    h.block<3, 3>(o, o) = lin.hll[j];
    g.segment<3>(o) = lin.gl[j];
  }
  for (std::size_t k = 0; k < p.observations.size(); ++k) {
    const int pi = layout.pose_index[p.observations[k].pose];
    if (pi < 0) continue;
    const Eigen::Index o = layout.point_offset(p.observations[k].point);
    h.block<6, 3>(6 * pi, o) += lin.hpl[k];
    h.block<3, 6>(o, 6 * pi) += lin.hpl[k].transpose();
  }
  h.diagonal().array() += mu;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  Eigen::VectorXd d = ldlt.solve(g);
  if (!d.allFinite()) return std::nullopt;
  return d;
}

std::optional<Eigen::VectorXd> solve_schur(const BaProblem& p, const Layout& layout,
                                           const Linearization& lin, double mu) {
  const int nf = layout.n_free;
  // Damped, inverted point blocks.
  std::vector<Mat3> hll_inv(p.points.size());
  for (std::size_t j = 0; j < p.points.size(); ++j) {
    Mat3 a = lin.hll[j];
    a.diagonal().array() += mu;
    Eigen::LDLT<Mat3> l(a);
    if (l.info() != Eigen::Success) return std::nullopt;
    hll_inv[j] = l.solve(Mat3::Identity());
  }
  // Observations grouped by point, for the pose-pose fill-in.
  std::vector<std::vector<std::size_t>> by_point(p.points.size());
  for (std::size_t k = 0; k < p.observations.size(); ++k)
    if (layout.pose_index[p.observations[k].pose] >= 0)
      by_point[p.observations[k].point].push_back(k);

  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(6 * nf, 6 * nf);
  Eigen::VectorXd b(6 * nf);
  for (int i = 0; i < nf; ++i) {
    s.block<6, 6>(6 * i, 6 * i) = lin.hpp[i];
    s.block<6, 6>(6 * i, 6 * i).diagonal().array() += mu;
    b.segment<6>(6 * i) = lin.gp[i];
  }
  for (std::size_t j = 0; j < p.points.size(); ++j) {
    const auto& obs = by_point[j];
    for (std::size_t a : obs) {
      const int ia = layout.pose_index[p.observations[a].pose];
      const Mat63 t = lin.hpl[a] * hll_inv[j];
      b.segment<6>(6 * ia) -= t * lin.gl[j];
      for (std::size_t c : obs) {
        const int ic = layout.pose_index[p.observations[c].pose];
        s.block<6, 6>(6 * ia, 6 * ic) -= t * lin.hpl[c].transpose();
      }
    }
  }
  Eigen::VectorXd d(layout.size());
  if (nf > 0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    d.head(6 * nf) = ldlt.solve(b);
  }
  // Back substitution for the points.
  std::vector<Vec3> rhs(lin.gl);
  for (std::size_t k = 0; k < p.observations.size(); ++k) {
    const int pi = layout.pose_index[p.observations[k].pose];
    if (pi < 0) continue;
    rhs[p.observations[k].point] -= lin.hpl[k].transpose() * d.segment<6>(6 * pi);
  }
  for (std::size_t j = 0; j < p.points.size(); ++j)
    d.segment<3>(layout.point_offset(j)) = hll_inv[j] * rhs[j];
  if (!d.allFinite()) return std::nullopt;
  return d;
}

BaProblem apply_step(const BaProblem& p, const Layout& layout, const Eigen::VectorXd& d) {
  BaProblem out = p;
  for (std::size_t i = 0; i < p.poses.size(); ++i) {
    const int pi = layout.pose_index[i];
    if (pi >= 0) out.poses[i] = p.poses[i].retract(d.segment<6>(6 * pi));
  }
  for (std::size_t j = 0; j < p.points.size(); ++j)
    out.points[j] = p.points[j] + d.segment<3>(layout.point_offset(j));
  return out;
}

}  // namespace

double ba_cost(const BaProblem& p, const CameraModel& cam, const BaOptions& o) {
  double cost = 0.0;
  for (const BaObservation& ob : p.observations) {
    const auto px = cam.project_camera(p.poses[ob.pose].transform(p.points[ob.point]));
    if (!px) return std::numeric_limits<double>::infinity();
    cost += huber((ob.pixel - *px).norm() / level_sigma(o, ob.level), o.huber_delta);
  }
  return cost;
}

Eigen::VectorXd ba_gradient(const BaProblem& p, const CameraModel& cam, const BaOptions& o) {
  const Layout layout(p);
  const Linearization lin = linearize(p, layout, cam, o);
  // linearize accumulates J^T W r with r = observed - projected, the
  // negative gradient.
  Eigen::VectorXd g(layout.size());
  for (int i = 0; i < layout.n_free; ++i) g.segment<6>(6 * i) = -lin.gp[i];
  for (std::size_t j = 0; j < p.points.size(); ++j) g.segment<3>(layout.point_offset(j)) = -lin.gl[j];
  return g;
}

BaResult bundle_adjust(const BaProblem& problem, const CameraModel& cam, const BaOptions& o) {
  BaResult result;
  result.poses = problem.poses;
  result.points = problem.points;
  result.outlier.assign(problem.observations.size(), false);
  const Layout layout(problem);
  result.initial_cost = ba_cost(problem, cam, o);
  result.final_cost = result.initial_cost;
  if (problem.poses.size() < 2 || layout.size() == 0) {
    result.diagnostic = "rank-deficient problem: fewer than two keyframes or nothing to optimize";
    return result;
  }
  if (!std::isfinite(result.initial_cost)) {
    result.diagnostic = "initial configuration has points behind a camera";
    return result;
  }

  BaProblem current = problem;
  double cost = result.initial_cost;
  double mu = o.initial_damping;
  for (int it = 0; it < o.max_iterations && cost > 0.0; ++it) {
    const Linearization lin = linearize(current, layout, cam, o);
    bool accepted = false;
    for (int retry = 0; retry <= o.max_damping_retries; ++retry) {
      const auto d = o.dense_solver ? solve_dense(current, layout, lin, mu)
                                    : solve_schur(current, layout, lin, mu);
      if (!d) {
        mu *= 10.0;
        continue;
      }
      BaProblem trial = apply_step(current, layout, *d);
      const double c = ba_cost(trial, cam, o);
      if (c < cost) {
        const double gain = cost - c;
        current = std::move(trial);
        cost = c;
        mu = std::max(kMinDamping, mu * 0.1);
        accepted = true;
        result.cost_history.push_back(cost);
        ++result.iterations;
        if (gain < 1e-12 * (1.0 + cost)) it = o.max_iterations;
        break;
      }
      mu *= 10.0;
    }
    if (!accepted) break;
  }
  result.poses = current.poses;
  for (std::size_t i = 0; i < problem.poses.size(); ++i)
    if (layout.pose_index[i] < 0) result.poses[i] = problem.poses[i];
  result.points = current.points;
  result.final_cost = cost;
  for (std::size_t k = 0; k < problem.observations.size(); ++k) {
    const BaObservation& ob = problem.observations[k];
    const Vec3 pc = result.poses[ob.pose].transform(result.points[ob.point]);
    const auto px = cam.project_camera(pc);
    if (!px) {
      result.outlier[k] = true;
      continue;
    }
    const double e = (ob.pixel - *px).norm() / level_sigma(o, ob.level);
    result.outlier[k] = e * e > o.outlier_threshold;
  }
  return result;
}

}  // namespace endoslam
