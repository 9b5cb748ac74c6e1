#include "endoslam/geometry/triangulation.h"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace endoslam {

std::optional<Point3> triangulate_normalized(const Vec2& xa, const Pose& pose_a,
                                             const Vec2& xb, const Pose& pose_b) {
  const Vec3 ca = pose_a.center(), cb = pose_b.center();
  if (!((ca - cb).norm() > 1e-12 * std::max({1.0, ca.norm(), cb.norm()})))
    return std::nullopt;
  Eigen::Matrix<double, 3, 4> pa, pb;
  pa << pose_a.rotation, pose_a.translation;
  pb << pose_b.rotation, pose_b.translation;

  // Each row is normalized so both views weigh equally.
  Eigen::Matrix4d a;
  a.row(0) = xa.x() * pa.row(2) - pa.row(0);
  a.row(1) = xa.y() * pa.row(2) - pa.row(1);
  a.row(2) = xb.x() * pb.row(2) - pb.row(0);
  a.row(3) = xb.y() * pb.row(2) - pb.row(1);
  for (int i = 0; i < 4; ++i) {
    const double n = a.row(i).norm();
    if (n > 0.0) a.row(i) /= n;
  }

  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(2) > 1e-12 * sv(0))) return std::nullopt;
  const Eigen::Vector4d h = svd.matrixV().col(3);
  const double scale = h.head<3>().norm();
  if (!(std::abs(h(3)) > 1e-12 * scale)) return std::nullopt;
  const Point3 p = h.head<3>() / h(3);
  if (!p.allFinite()) return std::nullopt;
  return p;
}

std::optional<Point3> triangulate(const Pixel& px_a, const Pose& pose_a,
                                  const Pixel& px_b, const Pose& pose_b,
                                  const CameraModel& cam) {
  const auto xa = cam.pixel_to_normalized(px_a);
  const auto xb = cam.pixel_to_normalized(px_b);
  if (!xa || !xb) return std::nullopt;
  return triangulate_normalized(*xa, pose_a, *xb, pose_b);
}

double parallax_deg(const Point3& p, const Point3& center_a, const Point3& center_b) {
  const Vec3 ra = p - center_a;
  const Vec3 rb = p - center_b;
  // atan2 form is accurate for tiny and near-180 degree angles alike.
  const double angle = std::atan2(ra.cross(rb).norm(), ra.dot(rb));
  return std::clamp(angle * 180.0 / std::numbers::pi, 0.0, 180.0);
}

std::optional<double> reprojection_error2(const Point3& p, const Pose& pose,
                                          const CameraModel& cam,
                                          const Pixel& observed) {
  const auto px = cam.project_camera(pose.transform(p));
  if (!px) return std::nullopt;
  return (*px - observed).squaredNorm();
}

}  // namespace endoslam
