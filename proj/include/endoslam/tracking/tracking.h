#pragma once

#include <map>
#include <vector>

#include "endoslam/map/world_map.h"
#include "endoslam/tracking/frame.h"
#include "endoslam/tracking/optical_flow.h"
#include "endoslam/tracking/pose_optimizer.h"

namespace endoslam {

struct TrackingOptions {
  // Search radius at level 0 before the enlargement factor; both scale with
  // the predicted pyramid level.
  double base_search_radius = 4.0;
  double search_factor = 1.5;
  int max_hamming = 45;
  int min_inliers = 15;
  // Neighbours of the reference keyframe whose points form the local map.
  int local_keyframes = 10;
  // Minimum cosine between the viewing ray and the point's mean normal.
  double min_view_cos = 0.5;
  // When the first pass finds fewer than 2 * min_inliers matches, it is
  // repeated with the radius multiplied by this factor.
  double wide_search_multiplier = 4.0;
  PoseOptimizerOptions optimizer;
};

struct FrameMatch {
  PointId point = kNoPoint;
  std::size_t keypoint = 0;
  bool inlier = false;
};
using FrameMatches = std::vector<FrameMatch>;

struct TrackResult {
  bool ok = false;
  Pose pose;
  FrameMatches matches;
  int n_inliers = 0;
  // Local points predicted inside the image (matched or not).
  std::vector<PointId> visible;
};

// Points observed by `reference` and its top covisible keyframes, ascending.
std::vector<PointId> local_map_points(const WorldMap& map, KeyFrameId reference,
                                      int n_neighbors);

// Pyramid level at which a point at `distance` is expected to be detected.
int predict_level(const MapPoint& point, double distance, int n_levels, double scale_factor);

// Projects the local points with the predicted pose, matches them inside
// enlarged search regions and refines the pose. Writes frame.matched /
// frame.outlier / frame.pose. ok is false when fewer than min_inliers
// inliers remain.
TrackResult track_frame(Frame& frame, const WorldMap& map, const std::vector<PointId>& local_points,
                        const Pose& predicted, const CameraModel& cam,
                        const TrackingOptions& options);

struct SemidenseOptions {
  LkOptions lk;
  double min_zncc = 0.8;
  double max_epipolar_distance = 2.0;
  int patch_half = 5;
  // Depth band, relative to the current depth estimate, scanned when the
  // flow stage fails.
  double depth_band = 1.25;
  // Flow results farther than this from the pose projection are rejected.
  double max_flow_deviation = 6.0;
};

struct SemidenseTrack {
  PointId point = kNoPoint;
  Pixel pixel = Pixel::Zero();
  bool by_flow = false;
};

// Frame-to-frame tracker for densified points.
class SemidenseTracker {
 public:
  explicit SemidenseTracker(SemidenseOptions options = {}) : options_(options) {}

  // Tracks the densified points among `candidates` into `frame` (pose known).
  // The first call only records the frame.
  std::vector<SemidenseTrack> track(const Frame& frame, const WorldMap& map,
                                    const std::vector<PointId>& candidates,
                                    const CameraModel& cam);
  void reset();
  const FlowPyramid* previous() const { return has_prev_ ? &prev_ : nullptr; }

 private:
  SemidenseOptions options_;
  FlowPyramid prev_;
  Pose prev_pose_;
  bool has_prev_ = false;
  std::map<PointId, Pixel> last_;
};

}  // namespace endoslam
