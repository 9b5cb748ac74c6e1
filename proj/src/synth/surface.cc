#include "endoslam/synth/surface.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "endoslam/util/error.h"
#include "endoslam/util/random.h"

namespace endoslam {

namespace {

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise in [-1, 1] on a lattice of the given cell size (texels).
double value_noise(std::uint64_t seed, double x, double y, double cell) {
  const double fx = x / cell, fy = y / cell;
  const double gx = std::floor(fx), gy = std::floor(fy);
  const auto ix = static_cast<std::int64_t>(gx), iy = static_cast<std::int64_t>(gy);
  const double ax = smooth(fx - gx), ay = smooth(fy - gy);
  const auto v = [&](std::int64_t i, std::int64_t j) { return 2.0 * hash_unit(seed, i, j) - 1.0; };
  return (1 - ay) * ((1 - ax) * v(ix, iy) + ax * v(ix + 1, iy)) +
         ay * ((1 - ax) * v(ix, iy + 1) + ax * v(ix + 1, iy + 1));
}

}  // namespace

GrayImage make_texture(const TextureParams& p, double half_extent) {
  if (!(p.texel_mm > 0.0) || !(half_extent > 0.0))
    fail(ErrorCode::kInvalidArgument, "texture size must be positive");
  const int size = static_cast<int>(std::ceil(2.0 * half_extent / p.texel_mm)) + 2;
  std::vector<double> acc(static_cast<std::size_t>(size) * size, 0.0);
  const double blob_cell = p.blob_mm / p.texel_mm, fine_cell = p.fine_mm / p.texel_mm;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double v = 0.0;
      if (p.blob_amplitude != 0.0)
        v += p.blob_amplitude * (0.7 * value_noise(p.seed, x, y, blob_cell) +
                                 0.3 * value_noise(p.seed + 1, x, y, 0.5 * blob_cell));
      if (p.fine_amplitude != 0.0) v += p.fine_amplitude * value_noise(p.seed + 2, x, y, fine_cell);
      acc[static_cast<std::size_t>(y) * size + x] = v;
    }

  Rng rng(mix64(p.seed ^ 0x5707));
  const double area = 4.0 * half_extent * half_extent;
  const auto n_spots = static_cast<long>(p.spot_density * area / 100.0);
  for (long s = 0; s < n_spots; ++s) {
    const double cx = rng.uniform(0.0, size), cy = rng.uniform(0.0, size);
    const double w = rng.uniform(p.spot_min_mm, p.spot_max_mm) / p.texel_mm / 2.0;
    const double h = rng.uniform(p.spot_min_mm, p.spot_max_mm) / p.texel_mm / 2.0;
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double amp = p.spot_amplitude * rng.uniform(0.5, 1.0) * (rng.uniform() < 0.5 ? -1 : 1);
    const double c = std::cos(angle), sn = std::sin(angle);
    const double reach = std::hypot(w, h);
    const int x0 = std::max(0, static_cast<int>(cx - reach));
    const int x1 = std::min(size - 1, static_cast<int>(cx + reach) + 1);
    const int y0 = std::max(0, static_cast<int>(cy - reach));
    const int y1 = std::min(size - 1, static_cast<int>(cy + reach) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - cx, dy = y - cy;
        if (std::abs(c * dx + sn * dy) <= w && std::abs(-sn * dx + c * dy) <= h)
          acc[static_cast<std::size_t>(y) * size + x] += amp;
      }
  }

  GrayImage tex(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double v = 128.0 + p.contrast * acc[static_cast<std::size_t>(y) * size + x];
      tex(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  return tex;
}

SyntheticSurface::SyntheticSurface(const SurfaceParams& params) : params_(params) {
  if (!(params.extent > 0.0)) fail(ErrorCode::kInvalidArgument, "surface extent must be positive");
  half_ = params.kind == SurfaceKind::kHemisphere ? params.extent : params.extent / 2.0;
  texture_ = make_texture(params.texture, half_);
  if (params.kind == SurfaceKind::kRelief) {
    Rng rng(mix64(params.seed ^ 0xbu));
    for (int i = 0; i < params.bumps; ++i) {
      Bump b;
      b.x = rng.uniform(-0.6, 0.6) * half_;
      b.y = rng.uniform(-0.6, 0.6) * half_;
      b.amplitude = params.bump_height * rng.uniform(0.5, 1.0) * (i % 2 == 0 ? 1.0 : -1.0);
      b.sigma = params.bump_sigma * rng.uniform(0.7, 1.3);
      bumps_.push_back(b);
      (b.amplitude > 0 ? relief_max_ : relief_min_) += b.amplitude;
      // Largest slope of one bump: |A| / sigma * exp(-1/2).
      relief_slope_ += std::abs(b.amplitude) / b.sigma * std::exp(-0.5);
    }
    // Tighter slab from a 1 mm sampling, padded by the slope bound.
    double lo = 0.0, hi = 0.0;
    for (double y = -half_; y <= half_; y += 1.0)
      for (double x = -half_; x <= half_; x += 1.0) {
        const double z = relief(x, y);
        lo = std::min(lo, z);
        hi = std::max(hi, z);
      }
    relief_min_ = std::max(relief_min_, lo - relief_slope_);
    relief_max_ = std::min(relief_max_, hi + relief_slope_);
  }
}

double SyntheticSurface::relief(double x, double y) const {
  double z = 0.0;
  for (const Bump& b : bumps_) {
    const double dx = x - b.x, dy = y - b.y;
    z += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
  }
  return z;
}

std::optional<double> SyntheticSurface::height(double x, double y) const {
  switch (params_.kind) {
    case SurfaceKind::kPlane:
    case SurfaceKind::kRelief:
      if (std::abs(x) > half_ || std::abs(y) > half_) return std::nullopt;
      return params_.kind == SurfaceKind::kPlane ? 0.0 : relief(x, y);
    case SurfaceKind::kHemisphere: {
      const double r2 = half_ * half_ - x * x - y * y;
      if (r2 < 0.0) return std::nullopt;
      return -std::sqrt(r2);
    }
  }
  return std::nullopt;
}

bool SyntheticSurface::is_viewable_from(const Point3& p) const {
  if (params_.kind == SurfaceKind::kHemisphere) return p.norm() < half_;
  const auto h = height(p.x(), p.y());
  return h && p.z() > *h;
}

std::optional<double> SyntheticSurface::intersect(const Point3& o, const Vec3& d) const {
  const auto inside = [&](const Point3& q) { return std::abs(q.x()) <= half_ && std::abs(q.y()) <= half_; };
  switch (params_.kind) {
    case SurfaceKind::kPlane: {
      if (!(d.z() < 0.0) || !(o.z() > 0.0)) return std::nullopt;
      const double t = -o.z() / d.z();
      if (!inside(o + t * d)) return std::nullopt;
      return t;
    }
    case SurfaceKind::kHemisphere: {
      const double b = o.dot(d), c = o.squaredNorm() - half_ * half_;
      const double disc = b * b - c;
      if (disc < 0.0) return std::nullopt;
      const double t = -b + std::sqrt(disc);
      if (!(t > 0.0) || (o + t * d).z() > 0.0) return std::nullopt;
      return t;
    }
    case SurfaceKind::kRelief: {
      const double top = relief_max_ + 1e-6, bottom = relief_min_ - 1e-6;
      if (!(d.z() < 0.0)) return std::nullopt;
      double t0 = o.z() > top ? (top - o.z()) / d.z() : 0.0;
      const double t1 = (bottom - o.z()) / d.z();
      const auto f = [&](double t) {
        const Point3 q = o + t * d;
        return q.z() - relief(q.x(), q.y());
      };
      if (f(t0) <= 0.0) return std::nullopt;
      // Conservative stepping: the vertical clearance shrinks by at most
      // rate per unit of ray length, so stepping clearance / rate never
      // crosses the surface.
      const double rate = -d.z() + relief_slope_ * d.head<2>().norm();
      double t = t0, g = f(t0);
      while (g > 0.05 && t < t1) {
        t += g / rate;
        g = f(t);
      }
      // Bracket with short fixed steps, then regula falsi (Illinois).
      double lo = t, flo = g, hi = t, fhi = g;
      while (fhi > 0.0) {
        if (hi >= t1) return std::nullopt;
        lo = hi;
        flo = fhi;
        hi = std::min(hi + 0.05, t1);
        fhi = f(hi);
      }
      int side = 0;
      double th = hi;
      for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
        const double m = (lo * fhi - hi * flo) / (fhi - flo);
        const double fm = f(m);
        th = m;
        if (fm > 0.0) {
          lo = m;
          flo = fm;
          if (side == 1) fhi *= 0.5;
          side = 1;
        } else {
          hi = m;
          fhi = fm;
          if (side == -1) flo *= 0.5;
          side = -1;
        }
        if (std::abs(fm) < 1e-12) break;
      }
      if (!inside(o + th * d)) return std::nullopt;
      return th;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

double SyntheticSurface::intensity(const Point3& p) const {
  const double texel = params_.texture.texel_mm;
  const double u = std::clamp((p.x() + half_) / texel, 0.0, texture_.width() - 1.000001);
  const double v = std::clamp((p.y() + half_) / texel, 0.0, texture_.height() - 1.000001);
  return bilinear(texture_, u, v);
}

TriangleMesh SyntheticSurface::mesh() const {
  TriangleMesh m;
  const double step = params_.mesh_step;
  if (params_.kind != SurfaceKind::kHemisphere) {
    const int n = std::max(1, static_cast<int>(std::ceil(2.0 * half_ / step)));
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        const double x = -half_ + 2.0 * half_ * i / n, y = -half_ + 2.0 * half_ * j / n;
        m.vertices.emplace_back(x, y, *height(x, y));
      }
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int a = j * (n + 1) + i, b = a + 1, c = a + n + 1, d = c + 1;
        m.faces.push_back({a, b, d});
        m.faces.push_back({a, d, c});
      }
    return m;
  }
  // Bowl: rings of constant polar angle from the bottom pole, stitched by
  // azimuth so that edge lengths stay close to `step` everywhere.
  const double r = half_;
  const int n_rings = std::max(2, static_cast<int>(std::ceil(std::numbers::pi / 2.0 * r / step)));
  std::vector<int> first{0}, count{1};
  m.vertices.emplace_back(0.0, 0.0, -r);
  for (int i = 1; i <= n_rings; ++i) {
    const double alpha = std::numbers::pi / 2.0 * i / n_rings;
    const int n = std::max(6, static_cast<int>(std::ceil(2.0 * std::numbers::pi * r * std::sin(alpha) / step)));
    first.push_back(static_cast<int>(m.vertices.size()));
    count.push_back(n);
    for (int k = 0; k < n; ++k) {
      const double phi = 2.0 * std::numbers::pi * k / n;
      m.vertices.emplace_back(r * std::sin(alpha) * std::cos(phi), r * std::sin(alpha) * std::sin(phi),
                              -r * std::cos(alpha));
    }
  }
  for (int ring = 0; ring < n_rings; ++ring) {
    const int f0 = first[ring], m0 = count[ring], f1 = first[ring + 1], m1 = count[ring + 1];
    if (m0 == 1) {
      for (int j = 0; j < m1; ++j) m.faces.push_back({f0, f1 + j, f1 + (j + 1) % m1});
      continue;
    }
    int i = 0, j = 0;
    while (i < m0 || j < m1) {
      const double a0 = i < m0 ? static_cast<double>(i + 1) / m0 : 2.0;
      const double a1 = j < m1 ? static_cast<double>(j + 1) / m1 : 2.0;
      if (a0 < a1) {
        m.faces.push_back({f0 + i % m0, f1 + j % m1, f0 + (i + 1) % m0});
        ++i;
      } else {
        m.faces.push_back({f0 + i % m0, f1 + j % m1, f1 + (j + 1) % m1});
        ++j;
      }
    }
  }
  return m;
}

}  // namespace endoslam
