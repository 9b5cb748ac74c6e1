#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "endoslam/geometry/camera.h"

namespace endoslam {

struct BaObservation {
  std::size_t pose = 0;
  std::size_t point = 0;
  Pixel pixel = Pixel::Zero();
  int level = 0;
};

struct BaProblem {
  std::vector<Pose> poses;
  std::vector<bool> pose_fixed;
  std::vector<Point3> points;
  std::vector<BaObservation> observations;
};

struct BaOptions {
  int max_iterations = 20;
  // Huber knee on the level-normalized residual norm.
  double huber_delta = 0.7740155;  // sqrt(0.5991)
  // Squared normalized error beyond which an observation is flagged.
  double outlier_threshold = 0.5991;
  double scale_factor = 1.2;
  double initial_damping = 1e-4;
  int max_damping_retries = 10;
  // Solve the full normal equations instead of the reduced camera system.
  bool dense_solver = false;
};

struct BaResult {
  std::vector<Pose> poses;
  std::vector<Point3> points;
  // Observations failing the gate (or behind the camera) after the solve.
  std::vector<bool> outlier;
  std::vector<double> cost_history;  // after every accepted iteration
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  // Non-empty when the problem was not solved (rank deficiency).
  std::string diagnostic;
};

// Robust reprojection cost sum rho(|e| / sigma_level); infinity when a point
// falls behind a camera.
double ba_cost(const BaProblem& problem, const CameraModel& cam, const BaOptions& options);

// Gradient of ba_cost: 6 entries per free pose (left update, rotation
// first) in pose order, then 3 per point.
Eigen::VectorXd ba_gradient(const BaProblem& problem, const CameraModel& cam,
                            const BaOptions& options);

// d(pixel)/d(point) for a point seen by `pose`.
Mat23 point_projection_jacobian(const Pose& pose, const Point3& point, const CameraModel& cam);

// Damped Gauss-Newton on poses and points. The reduced camera system is
// formed by eliminating the 3x3 point blocks. Fixed poses are bit-identical
// on output. Fewer than two poses, or no free parameter, is a no-op with a
// diagnostic.
BaResult bundle_adjust(const BaProblem& problem, const CameraModel& cam,
                       const BaOptions& options = {});

}  // namespace endoslam
