#pragma once

#include <vector>

#include "endoslam/tracking/trajectory.h"

namespace endoslam {

// x_truth ~ scale * rotation * x_estimate + translation
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

// Closed-form least-squares similarity (rigid when with_scale is false)
// mapping `from` onto `to`. Throws kInsufficientData below two pairs.
Similarity align_points(const std::vector<Vec3>& from, const std::vector<Vec3>& to,
                        bool with_scale);

struct TrajectoryError {
  double ate_rmse = 0.0;
  std::vector<double> errors;      // per matched pair
  std::vector<double> timestamps;  // of the matched pairs
  Similarity alignment;
};

// Pairs poses by timestamp (within 1e-6 s), aligns camera centers and
// reports the residual position errors.
TrajectoryError trajectory_error(const Trajectory& estimate, const Trajectory& truth,
                                 bool align_scale);

// Camera centers projected on their principal direction of motion, in
// trajectory order.
std::vector<double> principal_motion(const Trajectory& trajectory);

// Period of the strongest sinusoid in x(t) within [min_period, max_period]:
// the signal is linearly detrended and its periodogram maximized over a
// frequency scan followed by a golden-section refinement. Throws
// kInsufficientData below four samples.
double dominant_period(const std::vector<double>& t, const std::vector<double>& x,
                       double min_period, double max_period);

}  // namespace endoslam
