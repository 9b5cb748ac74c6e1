#include "endoslam/tracking/initializer.h"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "endoslam/geometry/triangulation.h"
#include "endoslam/tracking/pose_optimizer.h"
#include "endoslam/util/random.h"

namespace endoslam {

std::vector<InitialMatch> match_for_initialization(const Frame& ref, const Frame& cur,
                                                   const InitializerOptions& options) {
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best_for_cur(cur.size(), none);
  std::vector<int> best_dist_cur(cur.size(), std::numeric_limits<int>::max());
  std::vector<std::size_t> choice(ref.size(), none);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const Keypoint& kp = ref.keypoints[i];
    const auto idx = cur.grid.query(cur.keypoints, kp.position, options.search_radius,
                                    kp.level - 1, kp.level + 1);
    int best = std::numeric_limits<int>::max(), second = best;
    std::size_t best_j = none;
    for (std::size_t j : idx) {
      const int d = hamming(ref.descriptors[i], cur.descriptors[j]);
      if (d < best) {
        second = best;
        best = d;
        best_j = j;
      } else if (d < second) {
        second = d;
      }
    }
    if (best_j == none || best > options.max_hamming) continue;
    if (second != std::numeric_limits<int>::max() &&
        static_cast<double>(best) > options.match_ratio * second)
      continue;
    choice[i] = best_j;
    if (best < best_dist_cur[best_j]) {
      best_dist_cur[best_j] = best;
      best_for_cur[best_j] = i;
    }
  }
  std::vector<InitialMatch> out;
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (choice[i] != none && best_for_cur[choice[i]] == i) out.push_back({i, choice[i]});
  return out;
}

std::optional<Mat3> essential_eight_point(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.size() < 8 || a.size() != b.size()) return std::nullopt;
  Eigen::MatrixXd m(a.size(), 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec3 x(a[i].x(), a[i].y(), 1.0), y(b[i].x(), b[i].y(), 1.0);
    // y^T E x = 0
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(static_cast<Eigen::Index>(i), 3 * r + c) = y(r) * x(c);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd e = svd.matrixV().col(8);
  Mat3 em;
  em << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  Eigen::JacobiSVD<Mat3> s(em, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 out = s.matrixU() * Vec3(1.0, 1.0, 0.0).asDiagonal() * s.matrixV().transpose();
  if (!out.allFinite()) return std::nullopt;
  return out;
}

double sampson_error2(const Mat3& e, const Vec2& a, const Vec2& b) {
  const Vec3 x(a.x(), a.y(), 1.0), y(b.x(), b.y(), 1.0);
  const Vec3 ex = e * x, ety = e.transpose() * y;
  const double num = y.dot(ex);
  const double den = ex.head<2>().squaredNorm() + ety.head<2>().squaredNorm();
  if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
  return num * num / den;
}

std::vector<Pose> decompose_essential(const Mat3& e) {
  Eigen::JacobiSVD<Mat3> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU(), v = svd.matrixV();
  if (u.determinant() < 0) u = -u;
  if (v.determinant() < 0) v = -v;
  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 r1 = u * w * v.transpose(), r2 = u * w.transpose() * v.transpose();
  const Vec3 t = u.col(2).normalized();
  return {Pose(r1, t), Pose(r1, -t), Pose(r2, t), Pose(r2, -t)};
}

std::optional<Mat3> homography_dlt(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.size() < 4 || a.size() != b.size()) return std::nullopt;
  Eigen::MatrixXd m(2 * a.size(), 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i].x(), y = a[i].y(), u = b[i].x(), v = b[i].y();
    const auto r = static_cast<Eigen::Index>(2 * i);
    m.row(r) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    m.row(r + 1) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 out;
  out << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  if (!out.allFinite() || std::abs(out.determinant()) < 1e-12) return std::nullopt;
  return out;
}

double homography_transfer_error2(const Mat3& h, const Vec2& a, const Vec2& b) {
  const Vec3 fb = h * Vec3(a.x(), a.y(), 1.0);
  const Vec3 ba = h.inverse() * Vec3(b.x(), b.y(), 1.0);
  if (!(std::abs(fb.z()) > 1e-12) || !(std::abs(ba.z()) > 1e-12))
    return std::numeric_limits<double>::infinity();
  return (fb.head<2>() / fb.z() - b).squaredNorm() + (ba.head<2>() / ba.z() - a).squaredNorm();
}

std::vector<Pose> decompose_homography(const Mat3& h) {
  // Motion and plane hypotheses of a calibrated homography, after Faugeras.
  // H = R + t n^T / d has positive determinant for a camera that stays on
  // one side of the plane; fix the sign of the DLT solution accordingly.
  const Mat3 hs = h.determinant() < 0.0 ? Mat3(-h) : h;
  Eigen::JacobiSVD<Mat3> svd(hs, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  const double s = u.determinant() * v.determinant();
  const double d1 = svd.singularValues()(0), d2 = svd.singularValues()(1),
               d3 = svd.singularValues()(2);
  if (d1 / d2 < 1.00001 || d2 / d3 < 1.00001) return {};
  const double aux1 = std::sqrt((d1 * d1 - d2 * d2) / (d1 * d1 - d3 * d3));
  const double aux3 = std::sqrt((d2 * d2 - d3 * d3) / (d1 * d1 - d3 * d3));
  const double x1[] = {aux1, aux1, -aux1, -aux1};
  const double x3[] = {aux3, -aux3, aux3, -aux3};
  const double root = std::sqrt((d1 * d1 - d2 * d2) * (d2 * d2 - d3 * d3));
  std::vector<Pose> out;
  // d' = d2
  const double st = root / ((d1 + d3) * d2), ct = (d2 * d2 + d1 * d3) / ((d1 + d3) * d2);
  const double sts[] = {st, -st, -st, st};
  for (int i = 0; i < 4; ++i) {
    Mat3 rp;
    rp << ct, 0, -sts[i], 0, 1, 0, sts[i], 0, ct;
    const Mat3 r = s * u * rp * v.transpose();
    const Vec3 t = u * Vec3(x1[i], 0, -x3[i]) * (d1 - d3);
    out.emplace_back(orthonormalize(r), t.normalized());
  }
  // d' = -d2
  const double sp = root / ((d1 - d3) * d2), cp = (d1 * d3 - d2 * d2) / ((d1 - d3) * d2);
  const double sps[] = {sp, -sp, -sp, sp};
  for (int i = 0; i < 4; ++i) {
    Mat3 rp;
    rp << cp, 0, sps[i], 0, -1, 0, sps[i], 0, -cp;
    const Mat3 r = s * u * rp * v.transpose();
    const Vec3 t = u * Vec3(x1[i], 0, x3[i]) * (d1 + d3);
    out.emplace_back(orthonormalize(r), t.normalized());
  }
  return out;
}

namespace {

struct Hypothesis {
  Pose pose;
  std::vector<std::optional<Point3>> points;
  std::vector<double> parallax;
  int good = 0;
};

Hypothesis check_motion(const Pose& pose, const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                        const std::vector<std::size_t>& inliers, const CameraModel& cam,
                        const std::vector<Pixel>& pa, const std::vector<Pixel>& pb,
                        const InitializerOptions& options) {
  Hypothesis h;
  h.pose = pose;
  h.points.assign(a.size(), std::nullopt);
  const Pose ref = Pose::identity();
  const Vec3 c0 = ref.center(), c1 = pose.center();
  for (std::size_t i : inliers) {
    const auto p = triangulate_normalized(a[i], ref, b[i], pose);
    if (!p || !p->allFinite()) continue;
    if (!(p->z() > 0.0) || !(pose.transform(*p).z() > 0.0)) continue;
    const auto e0 = reprojection_error2(*p, ref, cam, pa[i]);
    const auto e1 = reprojection_error2(*p, pose, cam, pb[i]);
    if (!e0 || !e1 || *e0 > options.max_reprojection_sq || *e1 > options.max_reprojection_sq)
      continue;
    h.points[i] = *p;
    h.parallax.push_back(parallax_deg(*p, c0, c1));
    ++h.good;
  }
  return h;
}

}  // namespace

Pose refine_relative_pose(const Pose& initial, const std::vector<Vec2>& a,
                          const std::vector<Vec2>& b, double huber_delta, int iterations) {
  const auto residuals = [&](const Mat3& r, const Vec3& t, Eigen::VectorXd& out) {
    const Mat3 e = skew(t) * r;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Vec3 x(a[i].x(), a[i].y(), 1.0), y(b[i].x(), b[i].y(), 1.0);
      const Vec3 ex = e * x, ety = e.transpose() * y;
      const double den = std::sqrt(ex.head<2>().squaredNorm() + ety.head<2>().squaredNorm());
      out(static_cast<Eigen::Index>(i)) = den > 0.0 ? y.dot(ex) / den : 0.0;
    }
  };
  const auto cost = [&](const Eigen::VectorXd& res) {
    double c = 0.0;
    for (Eigen::Index i = 0; i < res.size(); ++i) c += huber(std::abs(res(i)), huber_delta);
    return c;
  };
  Mat3 r = initial.rotation;
  Vec3 t = initial.translation.normalized();
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::VectorXd res(n), res_p(n), res_m(n);
  residuals(r, t, res);
  double current = cost(res);
  double lambda = 1e-3;
  const auto apply = [](const Mat3& r0, const Vec3& t0, const Eigen::Matrix<double, 5, 1>& d,
                        Mat3& r1, Vec3& t1) {
    // Tangent basis of the unit sphere at t0.
    Vec3 u = t0.unitOrthogonal();
    const Vec3 v = t0.cross(u);
    r1 = so3_exp(d.head<3>()) * r0;
    t1 = (t0 + d(3) * u + d(4) * v).normalized();
  };
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix<double, Eigen::Dynamic, 5> j(n, 5);
    for (int k = 0; k < 5; ++k) {
      Eigen::Matrix<double, 5, 1> d = Eigen::Matrix<double, 5, 1>::Zero();
      const double step = 1e-6;
      Mat3 rp, rm;
      Vec3 tp, tm;
      d(k) = step;
      apply(r, t, d, rp, tp);
      d(k) = -step;
      apply(r, t, d, rm, tm);
      residuals(rp, tp, res_p);
      residuals(rm, tm, res_m);
      j.col(k) = (res_p - res_m) / (2.0 * step);
    }
    Eigen::Matrix<double, 5, 5> h = Eigen::Matrix<double, 5, 5>::Zero();
    Eigen::Matrix<double, 5, 1> g = Eigen::Matrix<double, 5, 1>::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = huber_weight(std::abs(res(i)), huber_delta);
      h += w * j.row(i).transpose() * j.row(i);
      g += w * j.row(i).transpose() * res(i);
    }
    bool accepted = false;
    for (int retry = 0; retry < 8 && !accepted; ++retry) {
      Eigen::Matrix<double, 5, 5> hd = h;
      hd.diagonal() *= 1.0 + lambda;
      const Eigen::Matrix<double, 5, 1> d = hd.ldlt().solve(-g);
      Mat3 r1;
      Vec3 t1;
      apply(r, t, d, r1, t1);
      residuals(r1, t1, res_p);
      const double c = cost(res_p);
      if (c < current) {
        r = r1;
        t = t1;
        res = res_p;
        current = c;
        lambda = std::max(1e-9, lambda * 0.1);
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  return Pose(orthonormalize(r), t);
}

std::optional<TwoViewReconstruction> initialize_two_view(const Frame& ref, const Frame& cur,
                                                         const CameraModel& cam,
                                                         const InitializerOptions& options) {
  const std::vector<InitialMatch> matches = match_for_initialization(ref, cur, options);
  if (static_cast<int>(matches.size()) < options.min_matches) return std::nullopt;
  const std::size_t n = matches.size();
  std::vector<Vec2> a(n), b(n);
  std::vector<Pixel> pa(n), pb(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = ref.normalized[matches[i].ref];
    b[i] = cur.normalized[matches[i].cur];
    pa[i] = ref.keypoints[matches[i].ref].position;
    pb[i] = cur.keypoints[matches[i].cur].position;
  }

  const double f = 0.5 * (cam.fx + cam.fy);
  const double thr2 = std::pow(options.ransac_threshold_px / f, 2);
  Rng rng(options.seed);

  // Generic RANSAC over a minimal solver; returns the inliers of the model
  // re-estimated from the best consensus set.
  const auto ransac = [&](std::size_t sample_size, auto solve, auto error2, double gate2) {
    std::vector<std::size_t> best;
    std::vector<Vec2> sa(sample_size), sb(sample_size);
    for (int it = 0; it < options.ransac_iterations; ++it) {
      std::vector<std::size_t> sample;
      while (sample.size() < sample_size) {
        const std::size_t k = rng.index(n);
        if (std::find(sample.begin(), sample.end(), k) == sample.end()) sample.push_back(k);
      }
      for (std::size_t k = 0; k < sample_size; ++k) {
        sa[k] = a[sample[k]];
        sb[k] = b[sample[k]];
      }
      const auto model = solve(sa, sb);
      if (!model) continue;
      std::vector<std::size_t> inl;
      for (std::size_t i = 0; i < n; ++i)
        if (error2(*model, a[i], b[i]) <= gate2) inl.push_back(i);
      if (inl.size() > best.size()) best = std::move(inl);
    }
    std::optional<Mat3> model;
    std::vector<std::size_t> inliers;
    if (best.size() < sample_size) return std::make_pair(model, inliers);
    std::vector<Vec2> ia, ib;
    for (std::size_t i : best) {
      ia.push_back(a[i]);
      ib.push_back(b[i]);
    }
    model = solve(ia, ib);
    if (model)
      for (std::size_t i = 0; i < n; ++i)
        if (error2(*model, a[i], b[i]) <= gate2) inliers.push_back(i);
    return std::make_pair(model, inliers);
  };

  // Both an essential matrix and a homography: the former degenerates on
  // near-planar scenes, the latter on strongly non-planar ones. Every
  // factorization is scored by the points it reconstructs.
  // Linear estimates from noisy, near-degenerate data are biased, so every
  // candidate motion is refined on the Sampson error of the consensus set
  // and tried with both translation signs.
  std::vector<Pose> candidates;
  std::vector<std::size_t> consensus;
  const auto [e, e_inliers] = ransac(8, essential_eight_point, sampson_error2, thr2);
  if (e) {
    for (const Pose& p : decompose_essential(*e)) candidates.push_back(p);
    consensus = e_inliers;
  }
  const auto [h, h_inliers] =
      ransac(4, homography_dlt, homography_transfer_error2, 2.0 * thr2);
  if (h) {
    for (const Pose& p : decompose_homography(*h)) candidates.push_back(p);
    if (h_inliers.size() > consensus.size()) consensus = h_inliers;
  }
  if (consensus.size() < 8) return std::nullopt;
  std::vector<Vec2> ca, cb;
  for (std::size_t i : consensus) {
    ca.push_back(a[i]);
    cb.push_back(b[i]);
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  std::vector<Hypothesis> hyps;
  for (const Pose& c : candidates) {
    const Pose r = refine_relative_pose(c, ca, cb, options.ransac_threshold_px / f, 20);
    hyps.push_back(check_motion(r, a, b, all, cam, pa, pb, options));
    hyps.push_back(check_motion(Pose(r.rotation, -r.translation), a, b, all, cam, pa, pb, options));
  }
  if (hyps.empty()) return std::nullopt;
  std::stable_sort(hyps.begin(), hyps.end(),
                   [](const Hypothesis& x, const Hypothesis& y) { return x.good > y.good; });
  const Hypothesis& best = hyps[0];
  if (best.good < options.min_points) return std::nullopt;
  // Reject when a clearly different motion explains the data almost as well.
  for (std::size_t k = 1; k < hyps.size(); ++k) {
    const bool same_motion =
        rotation_angle_deg(hyps[k].pose.rotation, best.pose.rotation) < 1.0 &&
        hyps[k].pose.translation.normalized().dot(best.pose.translation.normalized()) >
            std::cos(10.0 * std::numbers::pi / 180.0);
    if (!same_motion && hyps[k].good > 0.7 * best.good) return std::nullopt;
  }

  std::vector<double> par = best.parallax;
  std::nth_element(par.begin(), par.begin() + par.size() / 2, par.end());
  const double median_parallax = par[par.size() / 2];
  if (median_parallax < options.min_parallax_deg) return std::nullopt;

  TwoViewReconstruction out;
  out.median_parallax_deg = median_parallax;
  const Vec3 c0 = Vec3::Zero(), c1 = best.pose.center();
  std::vector<double> depths;
  for (std::size_t i = 0; i < n; ++i) {
    if (!best.points[i] || parallax_deg(*best.points[i], c0, c1) < options.min_parallax_deg)
      continue;
    out.pairs.push_back(matches[i]);
    out.points.push_back(*best.points[i]);
    depths.push_back(best.points[i]->z());
  }
  if (static_cast<int>(out.points.size()) < options.min_points) return std::nullopt;
  std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
  const double s = 1.0 / depths[depths.size() / 2];
  for (Point3& p : out.points) p *= s;
  out.pose_cur = Pose(best.pose.rotation, best.pose.translation * s);
  return out;
}

}  // namespace endoslam
