#pragma once

#include <cstdint>
#include <vector>

#include "endoslam/geometry/camera.h"
#include "endoslam/image/image.h"
#include "endoslam/synth/surface.h"

namespace endoslam {

struct RenderOptions {
  // Additive per-pixel noise (gray levels), reproducible from seed + frame.
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  std::uint8_t background = 0;
};

struct Rendering {
  GrayImage image;
  Image<double> depth;  // camera z of the hit, 0 where no surface is hit
};

// Ray caster with the per-pixel viewing rays of one camera precomputed.
class Renderer {
 public:
  explicit Renderer(const CameraModel& cam);
  const CameraModel& camera() const { return cam_; }
  // Unit camera-frame ray through the center of pixel (x, y).
  const Vec3& ray(int x, int y) const { return rays_[static_cast<std::size_t>(y) * cam_.width + x]; }

  // Throws kCameraInsideSurface when the camera is not on the viewing side.
  Rendering render(const SyntheticSurface& surface, const Pose& pose,
                   const RenderOptions& options, std::uint64_t frame_index = 0) const;

 private:
  CameraModel cam_;
  std::vector<Vec3> rays_;
};

// Dark capsule from a to b (pixels) of the given half width.
struct Occluder {
  Pixel a = Pixel::Zero();
  Pixel b = Pixel::Zero();
  double half_width = 0.0;
  std::uint8_t intensity = 20;
};

// Paints the occluder and clears the matching entries of `visible` (when
// given). Returns the number of pixels covered.
std::size_t paint_occluder(GrayImage& image, const Occluder& occluder,
                           GrayImage* visible = nullptr);

}  // namespace endoslam
