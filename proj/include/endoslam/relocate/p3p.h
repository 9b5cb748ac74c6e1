#pragma once

#include <array>
#include <vector>

#include "endoslam/geometry/camera.h"

namespace endoslam {

// Absolute pose from three bearing/point pairs (bearings are camera-frame
// directions, any length). Returns up to four world-to-camera poses, each
// reproducing the three bearings. Throws kDegenerate for collinear points.
std::vector<Pose> p3p(const std::array<Vec3, 3>& bearings, const std::array<Point3, 3>& points);

// Same from pixels; pixels that cannot be undistorted give no solution.
std::vector<Pose> p3p(const std::array<Pixel, 3>& pixels, const std::array<Point3, 3>& points,
                      const CameraModel& cam);

// Rigid transform mapping `from` onto `to` in the least-squares sense.
Pose rigid_align(const std::vector<Point3>& from, const std::vector<Point3>& to);

}  // namespace endoslam
