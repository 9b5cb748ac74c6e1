#include "endoslam/synth/render.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "endoslam/util/error.h"
#include "endoslam/util/random.h"

namespace endoslam {

Renderer::Renderer(const CameraModel& cam) : cam_(cam) {
  cam_.validate();
  rays_.resize(static_cast<std::size_t>(cam.width) * cam.height, Vec3::Zero());
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const auto r = unproject(Pixel(x, y), cam_);
      if (r) rays_[static_cast<std::size_t>(y) * cam.width + x] = *r;
    }
}

Rendering Renderer::render(const SyntheticSurface& surface, const Pose& pose,
                           const RenderOptions& options, std::uint64_t frame_index) const {
  const Vec3 center = pose.center();
  if (!surface.is_viewable_from(center))
    fail(ErrorCode::kCameraInsideSurface, "camera center is not on the viewing side of the surface");
  Rendering out{GrayImage(cam_.width, cam_.height, options.background),
                Image<double>(cam_.width, cam_.height, 0.0)};
  const Mat3 rwc = pose.rotation.transpose();
  const std::uint64_t noise_key = mix64(options.noise_seed ^ mix64(frame_index + 1));
  for (int y = 0; y < cam_.height; ++y)
    for (int x = 0; x < cam_.width; ++x) {
      const Vec3& ray = rays_[static_cast<std::size_t>(y) * cam_.width + x];
      if (ray.z() <= 0.0) continue;
      const auto t = surface.intersect(center, rwc * ray);
      if (!t) continue;
      double v = surface.intensity(center + *t * (rwc * ray));
      if (options.noise_sigma > 0.0) {
        // Box-Muller from two hashed uniforms.
        const double u1 = 1.0 - hash_unit(noise_key, x, y, 0);
        const double u2 = hash_unit(noise_key, x, y, 1);
        v += options.noise_sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
      }
      out.image(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      out.depth(x, y) = *t * ray.z();
    }
  return out;
}

std::size_t paint_occluder(GrayImage& image, const Occluder& occ, GrayImage* visible) {
  if (!(occ.half_width > 0.0)) return 0;
  const Vec2 ab = occ.b - occ.a;
  const double len2 = ab.squaredNorm();
  std::size_t painted = 0;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      const Vec2 p(x, y);
      const double t = len2 > 0.0 ? std::clamp((p - occ.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
      if ((p - (occ.a + t * ab)).norm() >= occ.half_width) continue;
      image(x, y) = occ.intensity;
      if (visible) (*visible)(x, y) = 0;
      ++painted;
    }
  return painted;
}

}  // namespace endoslam
