#pragma once

#include <vector>

#include "endoslam/image/image.h"

namespace endoslam {

class ImagePyramid {
 public:
  ImagePyramid() = default;
  // Throws kImageTooSmall if level 0 cannot hold one descriptor patch and
  // kInvalidArgument for n_levels < 1 or scale_factor <= 1.
  ImagePyramid(GrayImage image, int n_levels, double scale_factor);

  int n_levels() const { return static_cast<int>(levels_.size()); }
  double scale_factor() const { return scale_factor_; }
  const GrayImage& level(int i) const { return levels_[i]; }
  // scale_factor^i
  double scale(int i) const { return scales_[i]; }
  // scale_factor^(2i), the per-level observation variance.
  double variance(int i) const { return scales_[i] * scales_[i]; }

 private:
  std::vector<GrayImage> levels_;
  std::vector<double> scales_;
  double scale_factor_ = 1.0;
};

// floor(dim / scale_factor^level)
int pyramid_level_size(int dim0, double scale_factor, int level);

}  // namespace endoslam
