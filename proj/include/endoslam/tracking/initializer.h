#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "endoslam/tracking/frame.h"

namespace endoslam {

struct InitializerOptions {
  int min_matches = 60;
  double min_parallax_deg = 1.4035;
  int max_hamming = 45;
  double match_ratio = 0.9;
  double search_radius = 100.0;
  int ransac_iterations = 200;
  // Sampson distance threshold, pixels.
  double ransac_threshold_px = 1.5;
  // Squared reprojection error threshold for the initial points, pixels^2.
  double max_reprojection_sq = 5.991;
  int min_points = 50;
  std::uint64_t seed = 7;
};

struct InitialMatch {
  std::size_t ref;
  std::size_t cur;
};

struct TwoViewReconstruction {
  // Reference camera at the origin; its median scene depth is 1.
  Pose pose_cur;
  std::vector<InitialMatch> pairs;
  std::vector<Point3> points;
  double median_parallax_deg = 0.0;
};

// Mutually best descriptor matches inside a window, with a ratio test.
std::vector<InitialMatch> match_for_initialization(const Frame& ref, const Frame& cur,
                                                   const InitializerOptions& options);

// Essential matrix from >= 8 normalized correspondences (linear, rank two
// enforced).
std::optional<Mat3> essential_eight_point(const std::vector<Vec2>& a, const std::vector<Vec2>& b);

// First-order geometric error of a correspondence under E, squared, in
// normalized units.
double sampson_error2(const Mat3& e, const Vec2& a, const Vec2& b);

// Homography b ~ H a from >= 4 normalized correspondences (DLT).
std::optional<Mat3> homography_dlt(const std::vector<Vec2>& a, const std::vector<Vec2>& b);
// Symmetric transfer error, squared, in normalized units.
double homography_transfer_error2(const Mat3& h, const Vec2& a, const Vec2& b);
// Up to eight (R, t) motions of a calibrated homography, unit-norm t.
std::vector<Pose> decompose_homography(const Mat3& h);

// The four (R, t) factorizations of E, unit-norm t.
std::vector<Pose> decompose_essential(const Mat3& e);

// Robust refinement of a relative motion (reference -> current, unit t)
// on the Sampson error, Huber delta in normalized units.
Pose refine_relative_pose(const Pose& initial, const std::vector<Vec2>& a,
                          const std::vector<Vec2>& b, double huber_delta, int iterations);

// Two-view bootstrap. nullopt when there are too few matches, the motion is
// a near pure rotation (median parallax below the gate) or too few points
// survive.
std::optional<TwoViewReconstruction> initialize_two_view(const Frame& ref, const Frame& cur,
                                                         const CameraModel& cam,
                                                         const InitializerOptions& options);

}  // namespace endoslam
