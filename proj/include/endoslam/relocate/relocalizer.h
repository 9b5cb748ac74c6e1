#pragma once

#include <vector>

#include "endoslam/relocate/keyframe_database.h"
#include "endoslam/relocate/vocabulary.h"
#include "endoslam/tracking/frame.h"
#include "endoslam/tracking/pose_optimizer.h"

namespace endoslam {

struct PnpRansacOptions {
  double confidence = 0.99;
  int max_iterations = 500;
  // Squared reprojection error over the level variance.
  double inlier_threshold = 0.5991;
  double scale_factor = 1.2;
  std::uint64_t seed = 11;
};

struct PnpRansacResult {
  Pose pose;
  std::vector<bool> inlier;
  int n_inliers = 0;
  int iterations = 0;
};

// P3P hypotheses scored by inlier count; the iteration count adapts to the
// best inlier ratio. nullopt below three observations or with no solution.
std::optional<PnpRansacResult> pnp_ransac(const std::vector<PoseObservation>& observations,
                                          const CameraModel& cam,
                                          const PnpRansacOptions& options = {});

struct RelocalizationOptions {
  DatabaseQueryOptions query;
  int max_hamming = 45;
  // Best-to-second Hamming ratio within a vocabulary node.
  double ratio = 0.75;
  // Tree depth whose nodes group descriptors for matching.
  int node_depth = 2;
  int min_inliers = 15;
  PnpRansacOptions ransac;
  PoseOptimizerOptions optimizer;
};

struct RelocalizationMatch {
  PointId point;
  std::size_t keypoint;
  bool inlier;
};

struct RelocalizationResult {
  bool ok = false;
  Pose pose;
  int n_inliers = 0;
  KeyFrameId keyframe = 0;  // best keyframe of the successful group
  std::vector<RelocalizationMatch> matches;
  int groups_tried = 0;
};

// Candidate groups from the database, descriptor matches per vocabulary
// node, then P3P RANSAC and robust refinement. Never reports success with
// fewer than min_inliers inliers.
RelocalizationResult relocalize(const Frame& frame, const WorldMap& map,
                                const KeyframeDatabase& db, const Vocabulary& vocab,
                                const CameraModel& cam,
                                const RelocalizationOptions& options = {});

}  // namespace endoslam
