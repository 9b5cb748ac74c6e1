#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "endoslam/features/orb.h"
#include "endoslam/geometry/camera.h"
#include "endoslam/map/map_types.h"

namespace endoslam {

// Bucketed keypoint positions for radius queries.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(const std::vector<Keypoint>& keypoints, int width, int height, int cell = 20);
  // Indices of keypoints within `radius` of `center` whose level lies in
  // [min_level, max_level], ascending.
  std::vector<std::size_t> query(const std::vector<Keypoint>& keypoints, const Pixel& center,
                                 double radius, int min_level, int max_level) const;

 private:
  int cell_ = 20, cols_ = 0, rows_ = 0;
  std::vector<std::vector<std::size_t>> cells_;
};

struct FrameOptions {
  int n_levels = 8;
  double scale_factor = 1.2;
  DetectorOptions detector;
};

struct Frame {
  std::uint64_t id = 0;
  double timestamp = 0.0;
  std::shared_ptr<const ImagePyramid> pyramid;
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor256> descriptors;
  std::vector<Vec2> normalized;
  FeatureGrid grid;
  // Map point matched to each keypoint (kNoPoint when unmatched) and the
  // outcome of the last pose optimization.
  std::vector<PointId> matched;
  std::vector<bool> outlier;
  Pose pose;
  bool has_pose = false;

  std::size_t size() const { return keypoints.size(); }
  const GrayImage& image() const { return pyramid->level(0); }
};

// Pyramid, detection, description and undistortion. Keypoints without a
// descriptor or a valid undistortion are dropped.
Frame make_frame(GrayImage image, std::uint64_t id, double timestamp, const CameraModel& cam,
                 const FrameOptions& options);

}  // namespace endoslam
