#pragma once

#include <Eigen/Geometry>

#include "endoslam/geometry/types.h"

namespace endoslam {

Mat3 skew(const Vec3& v);

// Rotation exponential (Rodrigues).
Mat3 so3_exp(const Vec3& omega);
// Inverse of so3_exp, angle in [0, pi].
Vec3 so3_log(const Mat3& rotation);

// Rigid world-to-camera transform: x_cam = rotation * x_world + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose identity() { return {}; }
  // Builds the world-to-camera pose of a camera with the given orientation
  // (camera-to-world rotation) and center.
  static Pose from_center(const Mat3& rotation_cw, const Vec3& center);
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);

  Vec3 transform(const Vec3& p) const { return rotation * p + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }
  // Camera viewing direction in world coordinates.
  Vec3 optical_axis() const { return rotation.row(2).transpose(); }

  Pose inverse() const;
  Eigen::Quaterniond quaternion() const;

  // Left-multiplicative update exp(delta) * this, delta = (omega, v).
  Pose retract(const Vec6& delta) const;

  bool is_valid(double tol = 1e-9) const;

  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
};

// Re-projects a nearly orthonormal matrix onto SO(3).
Mat3 orthonormalize(const Mat3& m);

// Rotation looking from `eye` towards `target`, camera z along the view
// direction and camera y roughly opposite `up`. Returns the world-to-camera
// pose.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

double rotation_angle_deg(const Mat3& a, const Mat3& b);

}  // namespace endoslam
