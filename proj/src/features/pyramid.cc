#include "endoslam/features/pyramid.h"

#include <cmath>

#include "endoslam/util/error.h"

namespace endoslam {

namespace {
constexpr int kPatchSize = 31;
}

int pyramid_level_size(int dim0, double scale_factor, int level) {
  return static_cast<int>(std::floor(dim0 / std::pow(scale_factor, level) + 1e-9));
}

ImagePyramid::ImagePyramid(GrayImage image, int n_levels, double scale_factor)
    : scale_factor_(scale_factor) {
  if (n_levels < 1) fail(ErrorCode::kInvalidArgument, "pyramid needs >= 1 level");
  if (!(scale_factor > 1.0)) fail(ErrorCode::kInvalidArgument, "scale factor must be > 1");
  if (image.width() < kPatchSize || image.height() < kPatchSize)
    fail(ErrorCode::kImageTooSmall, "image smaller than the descriptor patch");
  const int w0 = image.width(), h0 = image.height();
  levels_.reserve(n_levels);
  scales_.reserve(n_levels);
  levels_.push_back(std::move(image));
  scales_.push_back(1.0);
  for (int i = 1; i < n_levels; ++i) {
    const int w = std::max(1, pyramid_level_size(w0, scale_factor, i));
    const int h = std::max(1, pyramid_level_size(h0, scale_factor, i));
    levels_.push_back(resize_area(levels_.back(), w, h));
    scales_.push_back(scales_.back() * scale_factor);
  }
}

}  // namespace endoslam
