#pragma once

#include <cstddef>
#include <vector>

#include "endoslam/densify/epipolar_search.h"
#include "endoslam/map/world_map.h"

namespace endoslam {

struct DensifyOptions {
  std::size_t max_neighbors = 4;
  // Baseline over the keyframe's median scene depth.
  double min_baseline_ratio = 0.02;
  // Depth search band, multiples of the median scene depth.
  double min_depth_factor = 0.3;
  double max_depth_factor = 3.0;
  double min_zncc = 0.8;
  // Runner-up peak must stay below this fraction of the best score.
  double max_second_ratio = 0.9;
  double max_epipolar_distance = 2.0;
  double max_reprojection_sq = 0.5991;
  // Accepted depths lie within [median / band, median * band].
  double depth_band = 2.5;
  EpipolarSearchOptions search;
};

// Up to max_neighbors covisible keyframes with enough baseline, by
// descending covisibility weight then ascending id.
std::vector<KeyFrameId> select_neighbors(const WorldMap& map, KeyFrameId kf,
                                         const DensifyOptions& options = {});

// Why a densification candidate was dropped.
enum class DensifyReject {
  kNone,
  kNoMatch,      // flat template, empty segment, or correlation below min_zncc
  kAmbiguous,    // second peak too close to the best
  kEpipolar,     // gate 1
  kDepthSign,    // gate 2
  kReprojection, // gate 3
  kMedianDepth,  // gate 4
};

struct DensifyCandidate {
  Point3 position = Point3::Zero();
  Pixel target_pixel = Pixel::Zero();
  double mean_error2 = 0.0;  // mean normalized squared reprojection error
  DensifyReject reject = DensifyReject::kNone;
};

// Correlation search, triangulation and the four gates for one keypoint
// of `kf` against one neighbour.
DensifyCandidate densify_candidate(const KeyFrame& kf, std::size_t keypoint,
                                   const KeyFrame& neighbor, const CameraModel& cam,
                                   double scale_factor, const DensifyOptions& options = {});

struct DensifyStats {
  std::size_t candidates = 0;
  std::size_t created = 0;
  std::size_t extra_observations = 0;
  std::size_t rejected[7] = {};  // indexed by DensifyReject
};

// Grows the map from the ORB features of `kf` that have no map point. New
// points are densified and anchored on `kf`; the matched pixels are added
// to the neighbours as synthetic keypoints. Returns the new point ids.
std::vector<PointId> densify_keyframe(WorldMap& map, KeyFrameId kf, const CameraModel& cam,
                                      const DensifyOptions& options = {},
                                      DensifyStats* stats = nullptr);

}  // namespace endoslam
