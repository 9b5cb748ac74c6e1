#include "endoslam/eval/trajectory_error.h"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "endoslam/util/error.h"

namespace endoslam {

// Umeyama's closed form.
Similarity align_points(const std::vector<Vec3>& from, const std::vector<Vec3>& to,
                        bool with_scale) {
  if (from.size() != to.size()) fail(ErrorCode::kInvalidArgument, "point count mismatch");
  if (from.size() < 2) fail(ErrorCode::kInsufficientData, "need at least two point pairs");
  const double n = static_cast<double>(from.size());
  Vec3 mu_a = Vec3::Zero(), mu_b = Vec3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    mu_a += from[i];
    mu_b += to[i];
  }
  mu_a /= n;
  mu_b /= n;
  Mat3 cov = Mat3::Zero();
  double var_a = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const Vec3 a = from[i] - mu_a, b = to[i] - mu_b;
    cov += b * a.transpose();
    var_a += a.squaredNorm();
  }
  cov /= n;
  var_a /= n;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) s(2, 2) = -1.0;
  Similarity out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  if (with_scale) {
    if (!(var_a > 0.0)) fail(ErrorCode::kDegenerate, "all source points coincide");
    out.scale = (svd.singularValues().asDiagonal() * s).trace() / var_a;
  }
  out.translation = mu_b - out.scale * out.rotation * mu_a;
  return out;
}

TrajectoryError trajectory_error(const Trajectory& estimate, const Trajectory& truth,
                                 bool align_scale) {
  std::vector<Vec3> a, b;
  TrajectoryError out;
  for (const auto& e : estimate) {
    const auto it = std::lower_bound(
        truth.begin(), truth.end(), e.timestamp - 1e-6,
        [](const StampedPose& s, double t) { return s.timestamp < t; });
    if (it == truth.end() || std::abs(it->timestamp - e.timestamp) > 1e-6) continue;
    a.push_back(e.pose.center());
    b.push_back(it->pose.center());
    out.timestamps.push_back(e.timestamp);
  }
  out.alignment = align_points(a, b, align_scale);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double err = (out.alignment.apply(a[i]) - b[i]).norm();
    out.errors.push_back(err);
    sum += err * err;
  }
  out.ate_rmse = std::sqrt(sum / static_cast<double>(a.size()));
  return out;
}

std::vector<double> principal_motion(const Trajectory& trajectory) {
  if (trajectory.empty()) return {};
  Vec3 mean = Vec3::Zero();
  for (const auto& p : trajectory) mean += p.pose.center();
  mean /= static_cast<double>(trajectory.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : trajectory) {
    const Vec3 d = p.pose.center() - mean;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 axis = es.eigenvectors().col(2);
  std::vector<double> out;
  out.reserve(trajectory.size());
  for (const auto& p : trajectory) out.push_back(axis.dot(p.pose.center() - mean));
  return out;
}

double dominant_period(const std::vector<double>& t, const std::vector<double>& x,
                       double min_period, double max_period) {
  const std::size_t n = t.size();
  if (n < 4 || x.size() != n) fail(ErrorCode::kInsufficientData, "period estimation needs four samples");
  if (!(min_period > 0.0) || !(max_period > min_period))
    fail(ErrorCode::kInvalidArgument, "period range must satisfy 0 < min < max");
  // Linear detrend.
  double st = 0, sx = 0, stt = 0, stx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    st += t[i];
    sx += x[i];
    stt += t[i] * t[i];
    stx += t[i] * x[i];
  }
  const double den = n * stt - st * st;
  const double slope = den != 0.0 ? (n * stx - st * sx) / den : 0.0;
  const double icpt = (sx - slope * st) / n;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - slope * t[i] - icpt;

  const auto power = [&](double f) {
    double c = 0, s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = 2.0 * M_PI * f * t[i];
      c += y[i] * std::cos(a);
      s += y[i] * std::sin(a);
    }
    return c * c + s * s;
  };
  const double f_lo = 1.0 / max_period, f_hi = 1.0 / min_period;
  const int steps = 2000;
  const double df = (f_hi - f_lo) / steps;
  int best = 0;
  double best_p = -1.0;
  for (int k = 0; k <= steps; ++k) {
    const double p = power(f_lo + k * df);
    if (p > best_p) {
      best_p = p;
      best = k;
    }
  }
  double a = std::max(f_lo, f_lo + (best - 1) * df), b = std::min(f_hi, f_lo + (best + 1) * df);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (power(c) > power(d)) b = d;
    else a = c;
  }
  return 2.0 / (a + b);
}

}  // namespace endoslam
