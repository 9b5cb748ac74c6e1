#pragma once

#include <optional>

#include "endoslam/geometry/camera.h"

namespace endoslam {

// Linear (DLT) two-view triangulation on normalized image coordinates.
// nullopt signals a degenerate system: coincident centers or parallel rays.
std::optional<Point3> triangulate_normalized(const Vec2& xa, const Pose& pose_a,
                                             const Vec2& xb, const Pose& pose_b);

std::optional<Point3> triangulate(const Pixel& px_a, const Pose& pose_a,
                                  const Pixel& px_b, const Pose& pose_b,
                                  const CameraModel& cam);

// Angle in degrees, in [0, 180], subtended at p by the two centers.
double parallax_deg(const Point3& p, const Point3& center_a, const Point3& center_b);

// Squared reprojection error of p in a view, in pixels^2. nullopt when p is
// behind the camera.
std::optional<double> reprojection_error2(const Point3& p, const Pose& pose,
                                          const CameraModel& cam,
                                          const Pixel& observed);

}  // namespace endoslam
