#include "endoslam/relocate/p3p.h"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>

#include "endoslam/util/error.h"

namespace endoslam {

namespace {

using Poly = std::vector<double>;  // coefficients, lowest degree first

Poly mul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

Poly add(const Poly& a, const Poly& b, double sb = 1.0) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] += sb * b[i];
  return r;
}

Poly scale(Poly a, double s) {
  for (double& x : a) x *= s;
  return a;
}

double eval(const Poly& p, double x) {
  double r = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) r = r * x + *it;
  return r;
}

// Real roots via the companion matrix, polished by Newton steps.
std::vector<double> real_roots(Poly p) {
  while (p.size() > 1 && std::abs(p.back()) < 1e-14 * std::abs(p.front()) + 1e-300) p.pop_back();
  const int n = static_cast<int>(p.size()) - 1;
  if (n < 1) return {};
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) c(0, i) = -p[n - 1 - i] / p[n];
  for (int i = 1; i < n; ++i) c(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(c, false);
  Poly dp(n);
  for (int i = 1; i <= n; ++i) dp[i - 1] = i * p[i];
  std::vector<double> roots;
  for (int i = 0; i < n; ++i) {
    const std::complex<double> z = es.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-6 * std::max(1.0, std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 8; ++it) {
      const double d = eval(dp, x);
      if (d == 0.0) break;
      x -= eval(p, x) / d;
    }
    roots.push_back(x);
  }
  return roots;
}

}  // namespace

Pose rigid_align(const std::vector<Point3>& from, const std::vector<Point3>& to) {
  Vec3 mf = Vec3::Zero(), mt = Vec3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    mf += from[i];
    mt += to[i];
  }
  mf /= static_cast<double>(from.size());
  mt /= static_cast<double>(to.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) h += (to[i] - mt) * (from[i] - mf).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  return Pose(r, mt - r * mf);
}

std::vector<Pose> p3p(const std::array<Vec3, 3>& bearings, const std::array<Point3, 3>& points) {
  const Vec3 n = (points[1] - points[0]).cross(points[2] - points[0]);
  const double span = std::max({(points[1] - points[0]).squaredNorm(),
                                (points[2] - points[0]).squaredNorm(),
                                (points[2] - points[1]).squaredNorm()});
  if (span == 0.0 || n.norm() <= 1e-10 * span) fail(ErrorCode::kDegenerate, "collinear P3P points");

  const Vec3 j1 = bearings[0].normalized(), j2 = bearings[1].normalized(), j3 = bearings[2].normalized();
  const double ca = j2.dot(j3), cb = j1.dot(j3), cg = j1.dot(j2);
  const double a2 = (points[1] - points[2]).squaredNorm();
  const double b2 = (points[0] - points[2]).squaredNorm();
  const double c2 = (points[0] - points[1]).squaredNorm();

  // Depths s2 = u s1, s3 = v s1. Subtracting the two conics in (u, v)
  // leaves u = N(v) / D(v); substituting into the second gives a quartic.
  const Poly q{1.0, -2.0 * cb, 1.0};  // 1 + v^2 - 2 v cos(beta)
  const Poly num = add(scale(q, a2 - c2), scale(Poly{-1.0, 0.0, 1.0}, -b2));
  const Poly den{2.0 * b2 * cg, -2.0 * b2 * ca};
  // b^2 (D^2 + N^2 - 2 cos(gamma) N D) - c^2 q D^2 = 0
  const Poly dd = mul(den, den);
  const Poly inner = add(add(dd, mul(num, num)), scale(mul(num, den), -2.0 * cg));
  const Poly quartic = add(scale(inner, b2), scale(mul(q, dd), -c2));

  std::vector<Pose> out;
  for (double v : real_roots(quartic)) {
    const double d = eval(den, v);
    if (std::abs(d) < 1e-12 * b2) continue;
    const double u = eval(num, v) / d;
    const double qv = eval(q, v);
    if (qv <= 0.0) continue;
    Vec3 s(std::sqrt(b2 / qv), 0.0, 0.0);
    s[1] = u * s[0];
    s[2] = v * s[0];
    if (s.minCoeff() <= 0.0) continue;
    // Newton polish on the three law-of-cosines equations.
    for (int it = 0; it < 5; ++it) {
      Vec3 f(s[1] * s[1] + s[2] * s[2] - 2 * s[1] * s[2] * ca - a2,
             s[0] * s[0] + s[2] * s[2] - 2 * s[0] * s[2] * cb - b2,
             s[0] * s[0] + s[1] * s[1] - 2 * s[0] * s[1] * cg - c2);
      Mat3 jac;
      jac << 0, 2 * s[1] - 2 * s[2] * ca, 2 * s[2] - 2 * s[1] * ca,  //
          2 * s[0] - 2 * s[2] * cb, 0, 2 * s[2] - 2 * s[0] * cb,      //
          2 * s[0] - 2 * s[1] * cg, 2 * s[1] - 2 * s[0] * cg, 0;
      const Vec3 step = jac.fullPivLu().solve(f);
      if (!step.allFinite()) break;
      s -= step;
    }
    if (s.minCoeff() <= 0.0) continue;
    const std::vector<Point3> cam_pts{s[0] * j1, s[1] * j2, s[2] * j3};
    const Pose pose = rigid_align({points[0], points[1], points[2]}, cam_pts);
    // Keep only solutions that really reproduce the bearings.
    bool consistent = true;
    for (int i = 0; i < 3; ++i)
      consistent = consistent && pose.transform(points[i]).normalized().dot(bearings[i].normalized()) >
                                     1.0 - 1e-9;
    if (!consistent) continue;
    bool duplicate = false;
    for (const Pose& o : out)
      duplicate = duplicate || ((o.rotation - pose.rotation).norm() < 1e-9 &&
                                (o.translation - pose.translation).norm() < 1e-9 * (1.0 + pose.translation.norm()));
    if (!duplicate) out.push_back(pose);
  }
  return out;
}

std::vector<Pose> p3p(const std::array<Pixel, 3>& pixels, const std::array<Point3, 3>& points,
                      const CameraModel& cam) {
  std::array<Vec3, 3> bearings;
  for (int i = 0; i < 3; ++i) {
    const auto xn = cam.pixel_to_normalized(pixels[i]);
    if (!xn) return {};
    bearings[i] = Vec3(xn->x(), xn->y(), 1.0);
  }
  return p3p(bearings, points);
}

}  // namespace endoslam
