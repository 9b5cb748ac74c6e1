#include "endoslam/densify/epipolar_search.h"

#include <algorithm>
#include <cmath>

namespace endoslam {
namespace {

bool patch_fits(const GrayImage& img, double x, double y, int half) {
  return bilinear_inside(img, x - half, y - half) && bilinear_inside(img, x + half, y + half);
}

}  // namespace

bool PatchCorrelator::set_template(const GrayImage& img, double x, double y) {
  if (!patch_fits(img, x, y, half_)) return false;
  double mean = 0.0;
  int k = 0;
  for (int dy = -half_; dy <= half_; ++dy)
    for (int dx = -half_; dx <= half_; ++dx) {
      tmpl_[k] = bilinear(img, x + dx, y + dy);
      mean += tmpl_[k++];
    }
  mean /= n_;
  double ss = 0.0;
  for (double& v : tmpl_) {
    v -= mean;
    ss += v * v;
  }
  if (!(ss > 1e-12 * n_)) return false;
  const double inv = 1.0 / std::sqrt(ss);
  for (double& v : tmpl_) v *= inv;
  return true;
}

std::optional<double> PatchCorrelator::score(const GrayImage& img, double x, double y) const {
  if (!patch_fits(img, x, y, half_)) return std::nullopt;
  // Single pass: sum b, sum b^2, sum t*b; the template is zero-mean.
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double ax = x - x0, ay = y - y0;
  const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;
  double sb = 0.0, sbb = 0.0, stb = 0.0;
  int k = 0;
  for (int dy = -half_; dy <= half_; ++dy) {
    const std::uint8_t* r0 = img.row(y0 + dy) + x0 - half_;
    const std::uint8_t* r1 = img.row(y0 + dy + 1) + x0 - half_;
    for (int dx = 0; dx <= 2 * half_; ++dx) {
      const double b = w00 * r0[dx] + w10 * r0[dx + 1] + w01 * r1[dx] + w11 * r1[dx + 1];
      sb += b;
      sbb += b * b;
      stb += tmpl_[k++] * b;
    }
  }
  const double var = sbb - sb * sb / n_;
  if (!(var > 1e-12 * n_)) return std::nullopt;
  return std::clamp(stb / std::sqrt(var), -1.0, 1.0);
}

std::optional<EpipolarMatch> epipolar_zncc_search(const GrayImage& source, const Pixel& source_px,
                                                  const Pose& source_pose, const GrayImage& target,
                                                  const Pose& target_pose, const CameraModel& cam,
                                                  DepthRange depths,
                                                  const EpipolarSearchOptions& options) {
  const int half = options.patch_half;
  PatchCorrelator corr(half);
  if (!corr.set_template(source, source_px.x(), source_px.y())) return std::nullopt;
  const auto segment =
      epipolar_segment(source_px, source_pose, target_pose, cam, depths, -(half + 2.0));
  if (segment.empty()) return std::nullopt;

  std::vector<double> scores(segment.size(), -2.0);
  std::size_t best = segment.size();
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const auto s = corr.score(target, segment[i].px.x(), segment[i].px.y());
    if (!s) continue;
    scores[i] = *s;
    if (best == segment.size() || *s > scores[best]) best = i;
  }
  if (best == segment.size()) return std::nullopt;

  EpipolarMatch m;
  m.score = scores[best];
  m.depth = segment[best].depth;
  const Pixel peak = segment[best].px;
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (scores[i] < -1.5 || (segment[i].px - peak).norm() <= options.peak_exclusion) continue;
    const bool left = i == 0 || scores[i - 1] <= scores[i];
    const bool right = i + 1 == segment.size() || scores[i + 1] <= scores[i];
    if (left && right) m.second = std::max(m.second, scores[i]);
  }

  // 2-D refinement around the best sample.
  double s[3][3];
  bool full = true;
  for (int dy = -1; dy <= 1 && full; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const auto v = corr.score(target, peak.x() + dx, peak.y() + dy);
      if (!v) {
        full = false;
        break;
      }
      s[dy + 1][dx + 1] = *v;
    }
  Pixel refined = peak;
  if (full) {
    // Quadratic surface fit on the 3x3 stencil.
    const double gx = (s[1][2] - s[1][0]) / 2.0, gy = (s[2][1] - s[0][1]) / 2.0;
    const double hxx = s[1][2] - 2.0 * s[1][1] + s[1][0];
    const double hyy = s[2][1] - 2.0 * s[1][1] + s[0][1];
    const double hxy = (s[2][2] - s[2][0] - s[0][2] + s[0][0]) / 4.0;
    const double det = hxx * hyy - hxy * hxy;
    if (hxx < 0.0 && det > 0.0) {
      const Vec2 off(-(hyy * gx - hxy * gy) / det, -(hxx * gy - hxy * gx) / det);
      if (off.cwiseAbs().maxCoeff() <= 1.0) refined = peak + off;
    }
  }
  m.pixel = refined;
  m.segment_distance = distance_to_polyline(refined, segment);
  return m;
}

}  // namespace endoslam
