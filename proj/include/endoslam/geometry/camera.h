#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "endoslam/geometry/pose.h"
#include "endoslam/geometry/types.h"

namespace endoslam {

// Pinhole camera with two radial (k1, k2) and two tangential (p1, p2)
// distortion coefficients.
struct CameraModel {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  double k1 = 0.0, k2 = 0.0;
  double p1 = 0.0, p2 = 0.0;
  int width = 0, height = 0;

  // Throws kInvalidArgument when the intrinsics are inconsistent.
  void validate() const;

  bool has_distortion() const {
    return k1 != 0.0 || k2 != 0.0 || p1 != 0.0 || p2 != 0.0;
  }

  // Normalized image plane -> distorted normalized coordinates.
  Vec2 distort(const Vec2& xn) const;
  // d(distort)/d(xn).
  Eigen::Matrix2d distort_jacobian(const Vec2& xn) const;
  // Inverse of distort by Newton iteration; nullopt when it does not
  // converge within the iteration cap.
  std::optional<Vec2> undistort(const Vec2& xd) const;

  // Largest squared normalized radius on which the radial polynomial is
  // monotone. Points beyond it fold back into the image and are rejected.
  double max_radius2() const;

  // Camera-frame point -> pixel, ignoring image bounds. nullopt when the
  // point is behind the camera or outside the monotone distortion zone.
  std::optional<Pixel> project_camera(const Vec3& pc) const;
  // d(pixel)/d(camera point).
  Mat23 projection_jacobian(const Vec3& pc) const;

  Pixel normalized_to_pixel(const Vec2& xn) const;
  std::optional<Vec2> pixel_to_normalized(const Pixel& px) const;

  // in-view test against [-margin, width + margin) x [-margin, height + margin).
  bool in_bounds(const Pixel& px, double margin = 0.0) const {
    return px.x() >= -margin && px.y() >= -margin &&
           px.x() < width + margin && px.y() < height + margin;
  }
};

// World point -> pixel. nullopt when depth <= 0 or outside the image
// extended by `margin` pixels (negative margin shrinks the valid area).
std::optional<Pixel> project(const Point3& p, const Pose& pose,
                             const CameraModel& cam, double margin = 0.0);

// Pixel -> unit viewing ray in the camera frame. nullopt when the pixel is
// out of bounds or the distortion inversion fails.
std::optional<Vec3> unproject(const Pixel& px, const CameraModel& cam);

// Calibration file: key=value lines (fx fy cx cy k1 k2 p1 p2 width height).
// Blank lines and lines starting with '#' are ignored; unknown keys, missing
// required keys and malformed values throw kParse.
CameraModel parse_calibration(const std::string& text);
CameraModel load_calibration(const std::filesystem::path& path);
std::string format_calibration(const CameraModel& cam);
void save_calibration(const CameraModel& cam, const std::filesystem::path& path);

}  // namespace endoslam
