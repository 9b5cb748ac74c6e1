#pragma once

#include <vector>

#include "endoslam/geometry/camera.h"

namespace endoslam {

// Huber cost: r^2 / 2 inside the knee, delta * (r - delta / 2) beyond.
double huber(double r, double delta);
// Weight w(r) = rho'(r) / r used by iteratively reweighted least squares.
double huber_weight(double r, double delta);

struct PoseObservation {
  Point3 point;
  Pixel pixel;
  int level = 0;
};

struct PoseOptimizerOptions {
  int rounds = 4;
  int iterations = 10;
  // Squared reprojection error over the level variance.
  double inlier_threshold = 0.5991;
  double huber_delta = 0.7740155;  // sqrt(0.5991)
  double scale_factor = 1.2;
  int max_damping_retries = 8;
};

struct PoseOptimizationResult {
  Pose pose;
  std::vector<bool> inlier;
  int n_inliers = 0;
  // False when no iteration lowered the cost.
  bool improved = false;
  // Robust cost over the inlier set after every accepted iteration, per round.
  std::vector<std::vector<double>> cost_history;
  double final_cost = 0.0;
};

// d(pixel)/d(delta) for the left update pose.retract(delta); throws no
// errors, the caller guarantees positive depth.
Mat26 pose_projection_jacobian(const Pose& pose, const Point3& point, const CameraModel& cam);

// Robust pose-only refinement by damped Gauss-Newton, with inlier
// re-classification between rounds. Throws kInsufficientData below four
// observations.
PoseOptimizationResult pose_optimize(const Pose& initial,
                                     const std::vector<PoseObservation>& observations,
                                     const CameraModel& cam,
                                     const PoseOptimizerOptions& options = {});

// Robust cost of a pose over the flagged observations.
double pose_cost(const Pose& pose, const std::vector<PoseObservation>& observations,
                 const std::vector<bool>& use, const CameraModel& cam,
                 const PoseOptimizerOptions& options);

}  // namespace endoslam
