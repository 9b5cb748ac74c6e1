#include "endoslam/geometry/pose.h"

#include <Eigen/SVD>
#include <cmath>
#include <numbers>

namespace endoslam {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const Mat3 k = skew(omega);
  if (theta2 < 1e-20) return Mat3::Identity() + k;
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * k + b * k * k;
}

Vec3 so3_log(const Mat3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

Pose Pose::from_center(const Mat3& rotation_cw, const Vec3& center) {
  const Mat3 r = rotation_cw.transpose();
  return {r, -r * center};
}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  return {q.normalized().toRotationMatrix(), t};
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation.transpose();
  return {rt, -rt * translation};
}

Eigen::Quaterniond Pose::quaternion() const {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

Pose Pose::retract(const Vec6& delta) const {
  const Mat3 dr = so3_exp(delta.head<3>());
  return {orthonormalize(dr * rotation), dr * translation + delta.tail<3>()};
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).norm();
  return ortho < tol && std::abs(rotation.determinant() - 1.0) < tol;
}

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) = -u.col(2);
    r = u * svd.matrixV().transpose();
  }
  return r;
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 rotation_cw;
  rotation_cw.col(0) = x;
  rotation_cw.col(1) = y;
  rotation_cw.col(2) = z;
  return Pose::from_center(rotation_cw, eye);
}

double rotation_angle_deg(const Mat3& a, const Mat3& b) {
  const Mat3 d = a.transpose() * b;
  const double c = std::clamp((d.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace endoslam
