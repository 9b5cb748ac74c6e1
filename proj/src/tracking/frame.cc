#include "endoslam/tracking/frame.h"

#include <algorithm>
#include <cmath>

namespace endoslam {

FeatureGrid::FeatureGrid(const std::vector<Keypoint>& keypoints, int width, int height, int cell)
    : cell_(cell), cols_((width + cell - 1) / cell), rows_((height + cell - 1) / cell) {
  cells_.resize(static_cast<std::size_t>(cols_) * rows_);
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const int cx = std::clamp(static_cast<int>(keypoints[i].position.x()) / cell_, 0, cols_ - 1);
    const int cy = std::clamp(static_cast<int>(keypoints[i].position.y()) / cell_, 0, rows_ - 1);
    cells_[static_cast<std::size_t>(cy) * cols_ + cx].push_back(i);
  }
}

std::vector<std::size_t> FeatureGrid::query(const std::vector<Keypoint>& keypoints,
                                            const Pixel& center, double radius, int min_level,
                                            int max_level) const {
  std::vector<std::size_t> out;
  if (cells_.empty()) return out;
  const int x0 = std::max(0, static_cast<int>(std::floor((center.x() - radius) / cell_)));
  const int x1 = std::min(cols_ - 1, static_cast<int>(std::floor((center.x() + radius) / cell_)));
  const int y0 = std::max(0, static_cast<int>(std::floor((center.y() - radius) / cell_)));
  const int y1 = std::min(rows_ - 1, static_cast<int>(std::floor((center.y() + radius) / cell_)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      for (std::size_t i : cells_[static_cast<std::size_t>(y) * cols_ + x]) {
        const Keypoint& kp = keypoints[i];
        if (kp.level < min_level || kp.level > max_level) continue;
        if ((kp.position - center).squaredNorm() <= r2) out.push_back(i);
      }
  std::sort(out.begin(), out.end());
  return out;
}

Frame make_frame(GrayImage image, std::uint64_t id, double timestamp, const CameraModel& cam,
                 const FrameOptions& options) {
  Frame f;
  f.id = id;
  f.timestamp = timestamp;
  const int width = image.width(), height = image.height();
  f.pyramid = std::make_shared<const ImagePyramid>(std::move(image), options.n_levels,
                                                   options.scale_factor);
  const std::vector<Keypoint> detected = detect(*f.pyramid, options.detector);
  DescribeResult described = describe(*f.pyramid, detected);
  for (std::size_t k = 0; k < described.kept.size(); ++k) {
    const Keypoint& kp = detected[described.kept[k]];
    const auto xn = cam.pixel_to_normalized(kp.position);
    if (!xn) continue;
    f.keypoints.push_back(kp);
    f.descriptors.push_back(described.descriptors[k]);
    f.normalized.push_back(*xn);
  }
  f.grid = FeatureGrid(f.keypoints, width, height);
  f.matched.assign(f.keypoints.size(), kNoPoint);
  f.outlier.assign(f.keypoints.size(), false);
  return f;
}

}  // namespace endoslam
