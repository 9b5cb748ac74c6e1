#pragma once

#include <cstdint>
#include <optional>

#include "endoslam/eval/mesh.h"
#include "endoslam/image/image.h"

namespace endoslam {

enum class SurfaceKind { kPlane, kHemisphere, kRelief };

// Texture painted on the surface, indexed by world (x, y) in millimeters.
struct TextureParams {
  std::uint64_t seed = 1;
  // Scales every intensity deviation from mid-gray.
  double contrast = 1.0;
  double texel_mm = 0.1;
  // Smooth value-noise component.
  double blob_mm = 2.0;
  double blob_amplitude = 50.0;
  // Fine value-noise component, a few pixels across at working distance.
  double fine_mm = 0.3;
  double fine_amplitude = 12.0;
  // Sharp-edged rectangles; density per 100 mm^2.
  double spot_density = 25.0;
  double spot_min_mm = 0.4;
  double spot_max_mm = 2.5;
  double spot_amplitude = 80.0;
};

struct SurfaceParams {
  SurfaceKind kind = SurfaceKind::kPlane;
  // Side length for plane and relief, radius for the hemisphere.
  double extent = 200.0;
  // Relief: Gaussian bumps on the z = 0 plane.
  int bumps = 8;
  double bump_height = 8.0;
  double bump_sigma = 12.0;
  std::uint64_t seed = 1;
  TextureParams texture;
  // Edge length of the evaluation mesh.
  double mesh_step = 2.0;
};

// Analytic height-field surface. The plane and relief lie around z = 0 and
// are viewed from above; the hemisphere is the bowl
// z = -sqrt(r^2 - x^2 - y^2) centered at the origin and viewed from inside.
class SyntheticSurface {
 public:
  explicit SyntheticSurface(const SurfaceParams& params);

  const SurfaceParams& params() const { return params_; }
  const GrayImage& texture() const { return texture_; }

  // Surface height at (x, y); nullopt outside the domain.
  std::optional<double> height(double x, double y) const;
  // True when p is strictly on the viewing side of the surface.
  bool is_viewable_from(const Point3& p) const;
  // Ray parameter of the first hit along origin + t * dir (dir unit).
  std::optional<double> intersect(const Point3& origin, const Vec3& dir) const;
  // Bilinear texture intensity at the surface point p.
  double intensity(const Point3& p) const;
  // Triangulated surface for evaluation.
  TriangleMesh mesh() const;

 private:
  double relief(double x, double y) const;

  SurfaceParams params_;
  GrayImage texture_;
  double half_ = 0.0;
  struct Bump {
    double x, y, amplitude, sigma;
  };
  std::vector<Bump> bumps_;
  double relief_slope_ = 0.0;
  double relief_min_ = 0.0, relief_max_ = 0.0;
};

GrayImage make_texture(const TextureParams& params, double half_extent);

}  // namespace endoslam
