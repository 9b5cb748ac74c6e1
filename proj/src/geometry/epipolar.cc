#include "endoslam/geometry/epipolar.h"

#include <cmath>
#include <limits>

#include "endoslam/util/error.h"

namespace endoslam {

std::vector<EpipolarSample> epipolar_segment(const Pixel& px, const Pose& pose_a,
                                             const Pose& pose_b,
                                             const CameraModel& cam,
                                             DepthRange depths, double margin) {
  if (!(depths.min > 0.0) || !(depths.min < depths.max))
    fail(ErrorCode::kInvalidArgument, "epipolar_segment: bad depth range");
  const auto xn = cam.pixel_to_normalized(px);
  if (!xn) return {};

  // Point at z-depth d in A, mapped into B's camera frame: q(d) = d*m + o.
  const Pose a_to_b = pose_b * pose_a.inverse();
  const Vec3 m = a_to_b.rotation * Vec3(xn->x(), xn->y(), 1.0);
  const Vec3 o = a_to_b.translation;

  // Uniform in inverse depth, refined by doubling until the spacing holds.
  const double inv_near = 1.0 / depths.min;
  const double inv_far = 1.0 / depths.max;
  std::vector<EpipolarSample> out;
  for (int n = 64; n <= (1 << 17); n *= 2) {
    out.clear();
    double max_gap = 0.0;
    bool have_prev = false;
    Pixel prev;
    for (int i = 0; i < n; ++i) {
      // Descending inverse depth = ascending depth.
      const double inv = inv_near + (inv_far - inv_near) * i / (n - 1);
      const double d = 1.0 / inv;
      const auto q = cam.project_camera(d * m + o);
      if (!q || !cam.in_bounds(*q, margin)) {
        have_prev = false;
        continue;
      }
      if (have_prev) max_gap = std::max(max_gap, (*q - prev).norm());
      prev = *q;
      have_prev = true;
      out.push_back({*q, d});
    }
    if (max_gap <= kEpipolarMaxStep) break;
  }
  return out;
}

double distance_to_polyline(const Pixel& q, const std::vector<EpipolarSample>& line) {
  if (line.empty()) return std::numeric_limits<double>::infinity();
  double best = (q - line.front().px).norm();
  for (size_t i = 1; i < line.size(); ++i) {
    const Vec2 a = line[i - 1].px, b = line[i].px;
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0.0 ? (q - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, (q - (a + t * ab)).norm());
  }
  return best;
}

}  // namespace endoslam
