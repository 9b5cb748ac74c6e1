#include "endoslam/tracking/optical_flow.h"

#include <cmath>

#include <Eigen/Core>

namespace endoslam {

namespace {

FloatImage half_size(const FloatImage& src) {
  const int w = src.width() / 2, h = src.height() / 2;
  FloatImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out(x, y) = 0.25f * (src(2 * x, 2 * y) + src(2 * x + 1, 2 * y) + src(2 * x, 2 * y + 1) +
                           src(2 * x + 1, 2 * y + 1));
  return out;
}

void gradients(const FloatImage& img, FloatImage& gx, FloatImage& gy) {
  const int w = img.width(), h = img.height();
  gx = FloatImage(w, h);
  gy = FloatImage(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int xl = x > 0 ? x - 1 : x, xr = x + 1 < w ? x + 1 : x;
      const int yu = y > 0 ? y - 1 : y, yd = y + 1 < h ? y + 1 : y;
      gx(x, y) = (img(xr, y) - img(xl, y)) / static_cast<float>(xr - xl);
      gy(x, y) = (img(x, yd) - img(x, yu)) / static_cast<float>(yd - yu);
    }
}

}  // namespace

FlowPyramid::FlowPyramid(const GrayImage& image, int levels) {
  images_.push_back(to_float(image));
  for (int l = 1; l < levels; ++l) {
    if (images_.back().width() < 40 || images_.back().height() < 40) break;
    images_.push_back(half_size(images_.back()));
  }
  gx_.resize(images_.size());
  gy_.resize(images_.size());
  for (std::size_t l = 0; l < images_.size(); ++l) gradients(images_[l], gx_[l], gy_[l]);
}

namespace {

// Bilinear samples of the (2 half + 1)^2 window centred at (cx, cy). All
// samples share the same fractional offset, so the weights are computed once.
void sample_window(const FloatImage& img, double cx, double cy, int half, float* out) {
  const double x0 = cx - half, y0 = cy - half;
  const int ix = static_cast<int>(std::floor(x0)), iy = static_cast<int>(std::floor(y0));
  const float ax = static_cast<float>(x0 - ix), ay = static_cast<float>(y0 - iy);
  const float w00 = (1.0f - ax) * (1.0f - ay), w01 = ax * (1.0f - ay);
  const float w10 = (1.0f - ax) * ay, w11 = ax * ay;
  const int side = 2 * half + 1;
  for (int r = 0; r < side; ++r) {
    const float* r0 = img.row(iy + r) + ix;
    const float* r1 = img.row(iy + r + 1) + ix;
    float* o = out + r * side;
    for (int c = 0; c < side; ++c)
      o[c] = w00 * r0[c] + w01 * r0[c + 1] + w10 * r1[c] + w11 * r1[c + 1];
  }
}

}  // namespace

std::optional<Pixel> lk_track_one(const FlowPyramid& from, const FlowPyramid& to, const Pixel& p,
                                  const Pixel& guess, const LkOptions& options) {
  const int half = options.window / 2;
  const int n = (2 * half + 1) * (2 * half + 1);
  const auto window_fits = [&](const FloatImage& img, const Vec2& c) {
    return bilinear_inside(img, c.x() - half, c.y() - half) &&
           bilinear_inside(img, c.x() + half, c.y() + half);
  };
  // Coarsest level on which the window fits around p.
  int top = std::min(from.levels(), to.levels()) - 1;
  while (top >= 0 && !window_fits(from.image(top), p * std::pow(2.0, -top))) --top;
  if (top < 0) return std::nullopt;
  Eigen::VectorXf tmpl(n), tx(n), ty(n), cur(n);
  Vec2 d = (guess - p) / std::pow(2.0, top);
  for (int l = top; l >= 0; --l) {
    const double s = std::pow(2.0, -l);
    const Vec2 pl = p * s;
    const FloatImage& b = to.image(l);
    sample_window(from.image(l), pl.x(), pl.y(), half, tmpl.data());
    sample_window(from.gx(l), pl.x(), pl.y(), half, tx.data());
    sample_window(from.gy(l), pl.x(), pl.y(), half, ty.data());
    const double gxx = tx.squaredNorm(), gxy = tx.dot(ty), gyy = ty.squaredNorm();
    const double det = gxx * gyy - gxy * gxy;
    const double tr = gxx + gyy;
    const double min_eig = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4.0 * det))) / n;
    // Texture is judged on the full-resolution window only; coarse levels
    // without structure just pass the estimate down.
    if (l == 0 && (!(min_eig >= options.min_eigenvalue) || det <= 0.0)) return std::nullopt;
    for (int it = 0; it < options.max_iterations && det > 0.0; ++it) {
      const Vec2 q = pl + d;
      if (!window_fits(b, q)) {
        if (l == 0) return std::nullopt;
        break;
      }
      sample_window(b, q.x(), q.y(), half, cur.data());
      cur = tmpl - cur;
      const double bx = cur.dot(tx), by = cur.dot(ty);
      const Vec2 step((gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det);
      d += step;
      if (step.norm() < options.epsilon) break;
    }
    if (l > 0) d *= 2.0;
  }
  const Pixel out = p + d;
  if (!d.allFinite()) return std::nullopt;
  return out;
}

std::vector<std::optional<Pixel>> lk_track(const FlowPyramid& prev, const FlowPyramid& cur,
                                           const std::vector<Pixel>& points,
                                           const std::vector<Pixel>& guesses,
                                           const LkOptions& options) {
  std::vector<std::optional<Pixel>> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto fwd = lk_track_one(prev, cur, points[i], guesses[i], options);
    if (!fwd) continue;
    const auto back = lk_track_one(cur, prev, *fwd, points[i], options);
    if (!back || (*back - points[i]).norm() > options.fb_threshold) continue;
    out[i] = fwd;
  }
  return out;
}

}  // namespace endoslam
