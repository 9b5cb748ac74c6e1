#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "endoslam/map/world_map.h"
#include "endoslam/mapping/bundle_adjustment.h"

namespace endoslam {

struct KeyframePolicyOptions {
  int max_frames_between = 20;
  // Fraction of the reference keyframe's points still tracked.
  double min_tracked_ratio = 0.9;
  int min_inliers = 50;
};

struct KeyframeDecisionInput {
  int frames_since_keyframe = 0;
  // Reference keyframe points matched as inliers in the current frame.
  int tracked_reference_points = 0;
  int reference_points = 0;
  bool mapper_idle = true;
  int inliers = 0;
};

bool need_keyframe(const KeyframeDecisionInput& in, const KeyframePolicyOptions& options = {});

struct TriangulationOptions {
  std::size_t covisible_keyframes = 10;
  int max_hamming = 45;
  double min_parallax_deg = 1.4035;
  // Squared pixel error over the level variance, per view.
  double max_reprojection_sq = 0.5991;
  // Squared epipolar (Sampson) distance in level-0 pixels^2 at level 0.
  double max_epipolar_sq = 3.84;
  // Neighbours whose baseline over the keyframe median depth is below
  // this are skipped.
  double min_baseline_ratio = 0.01;
};

// Matches the keypoints of `kf` without a map point against the top
// covisible keyframes and triangulates new ORB points. Returns their ids.
std::vector<PointId> insert_and_triangulate(WorldMap& map, KeyFrameId kf, const CameraModel& cam,
                                            const TriangulationOptions& options = {});

// Triangulation of one correspondence with the acceptance gates; nullopt
// when any gate fails.
std::optional<Point3> triangulate_checked(const KeyFrame& a, std::size_t ia, const KeyFrame& b,
                                          std::size_t ib, const CameraModel& cam,
                                          double scale_factor, double min_parallax_deg,
                                          double max_reprojection_sq);

struct LocalBaOptions {
  BaOptions ba;
  // Covisible keyframes optimized together with the centre.
  std::size_t window = 10;
};

struct LocalBaReport {
  std::size_t free_keyframes = 0;
  std::size_t fixed_keyframes = 0;
  std::size_t points = 0;
  std::size_t observations = 0;
  std::size_t flagged = 0;
  // Points that lost an observation to the post-solve gate.
  std::size_t flagged_points = 0;
  std::size_t removed_points = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::string diagnostic;
};

// Bundle adjustment of `center` and its covisible keyframes; keyframes
// outside the window observing window points are fixed, as is the first
// keyframe. Flagged observations are detached from the map.
LocalBaReport local_bundle_adjust(WorldMap& map, KeyFrameId center, const CameraModel& cam,
                                  const LocalBaOptions& options = {});

// BA problem over the given keyframes (all their points). Fixed keyframes
// are listed separately; points seen by other keyframes keep only the
// listed observations.
struct MapBaWindow {
  std::vector<KeyFrameId> keyframes;
  std::vector<PointId> points;
  std::vector<std::pair<PointId, KeyFrameId>> links;  // one per observation
  BaProblem problem;
};
MapBaWindow build_ba_window(const WorldMap& map, const std::vector<KeyFrameId>& free,
                            const std::vector<KeyFrameId>& fixed);

}  // namespace endoslam
