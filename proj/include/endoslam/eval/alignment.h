#pragma once

#include <vector>

#include "endoslam/eval/mesh.h"

namespace endoslam {

// Root mean square of the smallest floor(keep * n) residuals.
// Throws kInvalidArgument for an empty list or keep outside (0, 1].
double trimmed_rmse(std::vector<double> residuals, double keep);

// Search grid for scale and roll. Scales are log-spaced when log_scale is
// set, linear otherwise; roll covers [theta_min, theta_max) in theta_step.
struct AlignmentGrid {
  double lambda_min = 0.25;
  double lambda_max = 4.0;
  int lambda_steps = 200;
  bool log_scale = true;
  double theta_min_deg = -180.0;
  double theta_max_deg = 180.0;
  double theta_step_deg = 1.0;
  // Refinement divides both steps by this factor within one coarse step.
  int refine_factor = 10;

  std::vector<double> lambdas() const;
  std::vector<double> thetas_deg() const;
};

struct AlignmentResult {
  double lambda = 1.0;
  double theta_deg = 0.0;
  double rmse = 0.0;
  // Distance of every transformed point to the surface, input order.
  std::vector<double> residuals;
  double kept_fraction = 0.8;
  // Best coarse candidate before refinement.
  double coarse_lambda = 1.0;
  double coarse_theta_deg = 0.0;
  double coarse_rmse = 0.0;
  // True when the coarse optimum sits on the first or last scale sample.
  bool lambda_at_edge = false;
  // Number of exact objective evaluations performed.
  long evaluations = 0;
};

// Rotation by theta about the unit axis through the origin.
Mat3 roll_rotation(const Vec3& axis, double theta_deg);

// Objective of a single candidate: points mapped by lambda * R(theta),
// re-associated to their closest surface points, trimmed RMSE.
double alignment_cost(const std::vector<Point3>& points, const SurfaceIndex& surface,
                      const Vec3& axis, double lambda, double theta_deg, double keep,
                      std::vector<double>* residuals = nullptr);

// Exact minimizer of alignment_cost over the grid (branch and bound with
// Lipschitz bounds on the residuals), followed by one refinement grid
// around it. Ties resolve to the lowest (lambda, theta) grid index.
AlignmentResult align_scale_roll(const std::vector<Point3>& points,
                                 const SurfaceIndex& surface, const Vec3& axis,
                                 const AlignmentGrid& grid, double keep = 0.8);

// Exhaustive evaluation of every candidate; reference for tests.
struct GridOptimum {
  std::size_t lambda_index = 0;
  std::size_t theta_index = 0;
  double cost = 0.0;
};
GridOptimum grid_search_brute_force(const std::vector<Point3>& points,
                                    const SurfaceIndex& surface, const Vec3& axis,
                                    const std::vector<double>& lambdas,
                                    const std::vector<double>& thetas_deg, double keep);
GridOptimum grid_search(const std::vector<Point3>& points, const SurfaceIndex& surface,
                        const Vec3& axis, const std::vector<double>& lambdas,
                        const std::vector<double>& thetas_deg, double keep,
                        long* evaluations = nullptr);

}  // namespace endoslam
