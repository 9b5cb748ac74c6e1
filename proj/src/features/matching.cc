#include "endoslam/features/matching.h"

#include <cmath>

namespace endoslam {

std::optional<RegionMatch> match_in_region(const Descriptor256& query,
                                           std::span<const MatchCandidate> candidates,
                                           const Pixel& center, double radius,
                                           int max_hamming) {
  const double r2 = radius * radius;
  std::optional<RegionMatch> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if ((candidates[i].keypoint->position - center).squaredNorm() > r2) continue;
    const int d = hamming(query, *candidates[i].descriptor);
    if (!best || d < best->distance) best = RegionMatch{i, d};
  }
  if (best && best->distance <= max_hamming) return best;
  return std::nullopt;
}

NormalizedPatch normalize_patch(std::span<const double> patch) {
  NormalizedPatch out;
  if (patch.empty()) return out;
  double mean = 0.0;
  for (double v : patch) mean += v;
  mean /= static_cast<double>(patch.size());
  out.values.resize(patch.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < patch.size(); ++i) {
    out.values[i] = patch[i] - mean;
    ss += out.values[i] * out.values[i];
  }
  if (!(ss > 1e-12 * static_cast<double>(patch.size()))) return out;
  const double inv = 1.0 / std::sqrt(ss);
  for (double& v : out.values) v *= inv;
  out.valid = true;
  return out;
}

std::optional<double> zncc_normalized(const NormalizedPatch& tmpl, std::span<const double> b) {
  if (!tmpl.valid || tmpl.values.size() != b.size()) return std::nullopt;
  const NormalizedPatch nb = normalize_patch(b);
  if (!nb.valid) return std::nullopt;
  double dot = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) dot += tmpl.values[i] * nb.values[i];
  return std::clamp(dot, -1.0, 1.0);
}

std::optional<double> zncc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) return std::nullopt;
  return zncc_normalized(normalize_patch(a), b);
}

std::optional<std::vector<double>> extract_patch(const GrayImage& img, double x, double y,
                                                 int half) {
  if (!bilinear_inside(img, x - half, y - half) || !bilinear_inside(img, x + half, y + half))
    return std::nullopt;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(2 * half + 1) * (2 * half + 1));
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) out.push_back(bilinear(img, x + dx, y + dy));
  return out;
}

}  // namespace endoslam
