#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "endoslam/features/keypoint.h"
#include "endoslam/features/pyramid.h"
#include "endoslam/geometry/pose.h"

namespace endoslam {

using KeyFrameId = std::uint64_t;
using PointId = std::uint64_t;
inline constexpr PointId kNoPoint = ~PointId{0};

enum class Provenance { kOrbTriangulated, kDensified };

// Sparse BoW weights, word id -> weight; ordered for deterministic iteration.
using BowVector = std::map<std::uint32_t, double>;
// Word (or tree node) id -> keypoint indices having it.
using FeatureVector = std::map<std::uint32_t, std::vector<std::size_t>>;

struct MapPoint {
  PointId id = kNoPoint;
  Point3 position = Point3::Zero();
  Descriptor256 descriptor;
  Provenance provenance = Provenance::kOrbTriangulated;
  // keyframe id -> keypoint index in that keyframe
  std::map<KeyFrameId, std::size_t> observations;
  // Tracking statistics: times predicted visible / times matched.
  int visible_count = 1;
  int found_count = 1;
  // Keyframe that created the point; for densified points the keyframe
  // whose patch seeds correlation re-tracking.
  KeyFrameId anchor_keyframe = 0;
  std::uint64_t created_frame = 0;
  // Mean viewing direction and scale-invariance distance band.
  Vec3 normal = Vec3::Zero();
  double min_distance = 0.0;
  double max_distance = 0.0;

  double found_ratio() const {
    return visible_count > 0 ? static_cast<double>(found_count) / visible_count : 1.0;
  }
};

struct KeyFrame {
  KeyFrameId id = 0;
  std::uint64_t frame_id = 0;
  double timestamp = 0.0;
  Pose pose;
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor256> descriptors;
  // Undistorted normalized coordinates of each keypoint.
  std::vector<Vec2> normalized;
  // Map point observed through each keypoint, or kNoPoint.
  std::vector<PointId> point_of;
  // True for keypoints appended by correlation tracking rather than
  // detected; they carry no usable descriptor.
  std::vector<bool> synthetic;
  BowVector bow;
  FeatureVector features;
  double median_depth = 1.0;
  std::shared_ptr<const ImagePyramid> pyramid;

  std::size_t size() const { return keypoints.size(); }
  std::size_t add_keypoint(const Keypoint& kp, const Descriptor256& d, const Vec2& xn,
                           bool is_synthetic) {
    keypoints.push_back(kp);
    descriptors.push_back(d);
    normalized.push_back(xn);
    point_of.push_back(kNoPoint);
    synthetic.push_back(is_synthetic);
    return keypoints.size() - 1;
  }
};

}  // namespace endoslam
