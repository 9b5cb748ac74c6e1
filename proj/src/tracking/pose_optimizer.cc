#include "endoslam/tracking/pose_optimizer.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "endoslam/util/error.h"

namespace endoslam {

double huber(double r, double delta) {
  return r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
}

double huber_weight(double r, double delta) { return r <= delta ? 1.0 : delta / r; }

Mat26 pose_projection_jacobian(const Pose& pose, const Point3& point, const CameraModel& cam) {
  const Vec3 pc = pose.transform(point);
  Eigen::Matrix<double, 3, 6> dpc;
  dpc.leftCols<3>() = -skew(pc);
  dpc.rightCols<3>() = Mat3::Identity();
  return cam.projection_jacobian(pc) * dpc;
}

namespace {

// Normalized residual norm of one observation, or nullopt when the point
// is not in front of the camera.
std::optional<double> normalized_error(const Pose& pose, const PoseObservation& o,
                                       const CameraModel& cam, double scale_factor) {
  const auto px = cam.project_camera(pose.transform(o.point));
  if (!px) return std::nullopt;
  return (o.pixel - *px).norm() / std::pow(scale_factor, o.level);
}

}  // namespace

double pose_cost(const Pose& pose, const std::vector<PoseObservation>& observations,
                 const std::vector<bool>& use, const CameraModel& cam,
                 const PoseOptimizerOptions& options) {
  double cost = 0.0;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (!use[i]) continue;
    const auto e = normalized_error(pose, observations[i], cam, options.scale_factor);
    if (!e) return std::numeric_limits<double>::infinity();
    cost += huber(*e, options.huber_delta);
  }
  return cost;
}

PoseOptimizationResult pose_optimize(const Pose& initial,
                                     const std::vector<PoseObservation>& observations,
                                     const CameraModel& cam,
                                     const PoseOptimizerOptions& options) {
  if (observations.size() < 4)
    fail(ErrorCode::kInsufficientData, "pose optimization needs at least 4 observations");
  const std::size_t n = observations.size();
  PoseOptimizationResult result;
  result.pose = initial;
  std::vector<bool> use(n);
  for (std::size_t i = 0; i < n; ++i)
    use[i] = normalized_error(initial, observations[i], cam, options.scale_factor).has_value();

  for (int round = 0; round < options.rounds; ++round) {
    std::vector<double> history;
    double cost = pose_cost(result.pose, observations, use, cam, options);
    history.push_back(cost);
    double damping = 1e-4;
    for (int it = 0; it < options.iterations && cost > 0.0; ++it) {
      Mat6 h = Mat6::Zero();
      Vec6 g = Vec6::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        if (!use[i]) continue;
        const PoseObservation& o = observations[i];
        const Vec3 pc = result.pose.transform(o.point);
        const auto px = cam.project_camera(pc);
        if (!px) continue;
        const Vec2 r = o.pixel - *px;
        const double sigma2 = std::pow(options.scale_factor, 2 * o.level);
        const double w = huber_weight(r.norm() / std::sqrt(sigma2), options.huber_delta) / sigma2;
        const Mat26 j = pose_projection_jacobian(result.pose, o.point, cam);
        h.noalias() += w * j.transpose() * j;
        g.noalias() += w * j.transpose() * r;
      }
      bool accepted = false;
      for (int retry = 0; retry <= options.max_damping_retries; ++retry) {
        Mat6 a = h;
        a.diagonal() += damping * h.diagonal().cwiseMax(1e-9);
        const Vec6 delta = a.ldlt().solve(g);
        if (!delta.allFinite()) {
          damping *= 10.0;
          continue;
        }
        const Pose candidate = result.pose.retract(delta);
        const double c = pose_cost(candidate, observations, use, cam, options);
        if (c < cost) {
          result.pose = candidate;
          const double gain = cost - c;
          cost = c;
          damping = std::max(1e-7, damping * 0.3);
          accepted = true;
          result.improved = true;
          history.push_back(cost);
          if (gain < 1e-14 * (1.0 + cost)) it = options.iterations;
          break;
        }
        damping *= 10.0;
      }
      if (!accepted) break;
    }
    result.cost_history.push_back(std::move(history));

    // Re-classify every observation against the refined pose.
    for (std::size_t i = 0; i < n; ++i) {
      const auto e = normalized_error(result.pose, observations[i], cam, options.scale_factor);
      use[i] = e && (*e) * (*e) <= options.inlier_threshold;
    }
    if (std::count(use.begin(), use.end(), true) < 4) break;
  }
  result.inlier = use;
  result.n_inliers = static_cast<int>(std::count(use.begin(), use.end(), true));
  result.final_cost = pose_cost(result.pose, observations, use, cam, options);
  if (!result.improved) result.pose = initial;
  return result;
}

}  // namespace endoslam
