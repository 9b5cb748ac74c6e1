#include "endoslam/features/orb.h"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace endoslam {
namespace {

#include "orb_pattern.inc"

constexpr int kRingX[16] = {0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1};
constexpr int kRingY[16] = {-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3};
constexpr int kArc = 9;

bool has_arc(std::uint32_t mask16) {
  std::uint32_t m = mask16 | (mask16 << 16);
  std::uint32_t run = m;
  for (int i = 1; i < kArc; ++i) run &= m >> i;
  return run != 0;
}

struct Candidate {
  int x, y, score;
};

bool stronger(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.y != b.y) return a.y < b.y;
  return a.x < b.x;
}

// Features per level, geometric in 1/scale_factor, summing to total.
std::vector<int> level_budgets(int total, int n_levels, double scale_factor) {
  std::vector<int> out(n_levels, 0);
  const double f = 1.0 / scale_factor;
  double per = total * (1.0 - f) / (1.0 - std::pow(f, n_levels));
  int sum = 0;
  for (int l = 0; l + 1 < n_levels; ++l) {
    out[l] = static_cast<int>(std::lround(per));
    sum += out[l];
    per *= f;
  }
  out[n_levels - 1] = std::max(total - sum, 0);
  return out;
}

std::vector<Candidate> detect_level(const GrayImage& img, const DetectorOptions& opt,
                                    int budget) {
  const int w = img.width(), h = img.height();
  const int b = kKeypointBorder;
  if (budget <= 0 || w - 2 * b < 1 || h - 2 * b < 1) return {};
  const int region_w = w - 2 * b, region_h = h - 2 * b;
  const int n_cols = std::max(1, region_w / opt.cell_size);
  const int n_rows = std::max(1, region_h / opt.cell_size);

  Image<std::int16_t> score(w, h, 0);
  const auto scan = [&](int x0, int x1, int y0, int y1, int threshold) {
    bool any = false;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        if (score(x, y) == 0 && fast_is_corner(img, x, y, threshold)) {
          score(x, y) = static_cast<std::int16_t>(std::max(corner_strength(img, x, y, threshold), 1));
          any = true;
        }
    return any;
  };

  const auto cell_x = [&](int c) { return b + c * region_w / n_cols; };
  const auto cell_y = [&](int r) { return b + r * region_h / n_rows; };
  for (int r = 0; r < n_rows; ++r)
    for (int c = 0; c < n_cols; ++c) {
      const int x0 = cell_x(c), x1 = cell_x(c + 1), y0 = cell_y(r), y1 = cell_y(r + 1);
      if (!scan(x0, x1, y0, y1, opt.fast_threshold) && opt.min_fast_threshold < opt.fast_threshold)
        scan(x0, x1, y0, y1, opt.min_fast_threshold);
    }

  // 3x3 non-maximum suppression with raster-order tie-break, bucketed.
  std::vector<std::vector<Candidate>> cells(static_cast<size_t>(n_cols) * n_rows);
  for (int r = 0; r < n_rows; ++r)
    for (int c = 0; c < n_cols; ++c) {
      auto& bucket = cells[static_cast<size_t>(r) * n_cols + c];
      for (int y = cell_y(r); y < cell_y(r + 1); ++y)
        for (int x = cell_x(c); x < cell_x(c + 1); ++x) {
          const int s = score(x, y);
          if (s == 0) continue;
          bool is_max = true;
          for (int dy = -1; dy <= 1 && is_max; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (dx == 0 && dy == 0) continue;
              const int n = score(x + dx, y + dy);
              const bool before = dy < 0 || (dy == 0 && dx < 0);
              if (n > s || (n == s && before)) {
                is_max = false;
                break;
              }
            }
          if (is_max) bucket.push_back({x, y, s});
        }
      std::sort(bucket.begin(), bucket.end(), stronger);
    }

  // Round-robin over cells: every cell contributes its k-th best before any
  // cell contributes its (k+1)-th.
  std::vector<Candidate> selected;
  for (size_t round = 0; static_cast<int>(selected.size()) < budget; ++round) {
    std::vector<Candidate> tier;
    for (const auto& bucket : cells)
      if (bucket.size() > round) tier.push_back(bucket[round]);
    if (tier.empty()) break;
    const size_t room = static_cast<size_t>(budget) - selected.size();
    if (tier.size() > room) {
      std::sort(tier.begin(), tier.end(), stronger);
      tier.resize(room);
    }
    selected.insert(selected.end(), tier.begin(), tier.end());
  }
  return selected;
}

}  // namespace

int corner_strength(const GrayImage& img, int x, int y, int threshold) {
  const int c = img(x, y);
  int bright = 0, dark = 0;
  for (int k = 0; k < 16; ++k) {
    const int v = img(x + kRingX[k], y + kRingY[k]);
    if (v > c + threshold) bright += v - c - threshold;
    if (v < c - threshold) dark += c - v - threshold;
  }
  return std::min(std::max(bright, dark), 32767);
}

bool fast_is_corner(const GrayImage& img, int x, int y, int threshold) {
  const int c = img(x, y);
  const int hi = c + threshold, lo = c - threshold;
  // Any 9-arc covers at least two of the four compass pixels.
  int bright = 0, dark = 0;
  for (int k = 0; k < 16; k += 4) {
    const int v = img(x + kRingX[k], y + kRingY[k]);
    bright += v > hi;
    dark += v < lo;
  }
  if (bright < 2 && dark < 2) return false;
  std::uint32_t bmask = 0, dmask = 0;
  for (int k = 0; k < 16; ++k) {
    const int v = img(x + kRingX[k], y + kRingY[k]);
    if (v > hi) bmask |= 1u << k;
    if (v < lo) dmask |= 1u << k;
  }
  return has_arc(bmask) || has_arc(dmask);
}

int fast_score(const GrayImage& img, int x, int y) {
  const int c = img(x, y);
  int d[16];
  for (int k = 0; k < 16; ++k) d[k] = img(x + kRingX[k], y + kRingY[k]) - c;
  // Best arc minimum for "brighter" and "darker"; the segment test with
  // threshold t passes iff that minimum exceeds t.
  int best = 0;
  for (int s = 0; s < 16; ++s) {
    int bmin = 1 << 20, dmin = 1 << 20;
    for (int k = 0; k < kArc; ++k) {
      const int v = d[(s + k) & 15];
      bmin = std::min(bmin, v);
      dmin = std::min(dmin, -v);
    }
    best = std::max({best, bmin, dmin});
  }
  return std::max(best - 1, 0);
}

float intensity_centroid_angle(const GrayImage& img, int x, int y) {
  const int r = kOrientationRadius;
  long long m10 = 0, m01 = 0;
  for (int v = -r; v <= r; ++v) {
    const int umax = static_cast<int>(std::sqrt(static_cast<double>(r * r - v * v)));
    const std::uint8_t* row = img.row(y + v) + x;
    for (int u = -umax; u <= umax; ++u) {
      m10 += static_cast<long long>(u) * row[u];
      m01 += static_cast<long long>(v) * row[u];
    }
  }
  return static_cast<float>(std::atan2(static_cast<double>(m01), static_cast<double>(m10)));
}

std::vector<Keypoint> detect(const ImagePyramid& pyramid, const DetectorOptions& options) {
  std::vector<Keypoint> out;
  if (options.target_count <= 0) return out;
  const auto budgets =
      level_budgets(options.target_count, pyramid.n_levels(), pyramid.scale_factor());
  for (int l = 0; l < pyramid.n_levels(); ++l) {
    const GrayImage& img = pyramid.level(l);
    const double s = pyramid.scale(l);
    for (const Candidate& c : detect_level(img, options, budgets[l])) {
      Keypoint kp;
      kp.position = Pixel(c.x * s, c.y * s);
      kp.level = l;
      kp.angle = intensity_centroid_angle(img, c.x, c.y);
      kp.response = static_cast<float>(c.score);
      out.push_back(kp);
    }
  }
  return out;
}

GrayImage descriptor_blur(const GrayImage& level) { return box_blur(level, 2, 2); }

Descriptor256 describe_one(const GrayImage& blurred, int x, int y, float angle) {
  const double c = std::cos(static_cast<double>(angle));
  const double s = std::sin(static_cast<double>(angle));
  Descriptor256 d;
  for (int i = 0; i < 256; ++i) {
    const auto& p = kOrbPattern[i];
    const int x1 = static_cast<int>(std::lround(p[0] * c - p[1] * s));
    const int y1 = static_cast<int>(std::lround(p[0] * s + p[1] * c));
    const int x2 = static_cast<int>(std::lround(p[2] * c - p[3] * s));
    const int y2 = static_cast<int>(std::lround(p[2] * s + p[3] * c));
    if (blurred(x + x1, y + y1) < blurred(x + x2, y + y2)) d.set_bit(i);
  }
  return d;
}

DescribeResult describe(const ImagePyramid& pyramid, std::span<const Keypoint> keypoints) {
  DescribeResult result;
  std::vector<GrayImage> blurred(pyramid.n_levels());
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const Keypoint& kp = keypoints[i];
    if (kp.level < 0 || kp.level >= pyramid.n_levels()) {
      result.dropped.push_back(i);
      continue;
    }
    const GrayImage& level = pyramid.level(kp.level);
    const double s = pyramid.scale(kp.level);
    const int x = static_cast<int>(std::lround(kp.position.x() / s));
    const int y = static_cast<int>(std::lround(kp.position.y() / s));
    if (x < kKeypointBorder || y < kKeypointBorder || x >= level.width() - kKeypointBorder ||
        y >= level.height() - kKeypointBorder) {
      result.dropped.push_back(i);
      continue;
    }
    if (blurred[kp.level].empty()) blurred[kp.level] = descriptor_blur(level);
    result.descriptors.push_back(describe_one(blurred[kp.level], x, y, kp.angle));
    result.kept.push_back(i);
  }
  return result;
}

}  // namespace endoslam
