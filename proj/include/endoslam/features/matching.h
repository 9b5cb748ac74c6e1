#pragma once

#include <optional>
#include <span>
#include <vector>

#include "endoslam/features/keypoint.h"
#include "endoslam/image/image.h"

namespace endoslam {

struct MatchCandidate {
  const Keypoint* keypoint;
  const Descriptor256* descriptor;
};

struct RegionMatch {
  std::size_t index;  // into the candidate list
  int distance;
};

// Minimum-Hamming candidate within `radius` of `center`, accepted iff its
// distance <= max_hamming. Ties go to the lower candidate index.
std::optional<RegionMatch> match_in_region(const Descriptor256& query,
                                           std::span<const MatchCandidate> candidates,
                                           const Pixel& center, double radius,
                                           int max_hamming);

// Zero-mean normalized cross-correlation of two equally sized patches.
// nullopt when either patch has zero variance (or sizes differ).
std::optional<double> zncc(std::span<const double> a, std::span<const double> b);

// Square (2*half+1)^2 patch sampled bilinearly around (x, y) in level
// coordinates; nullopt when it does not fit inside the image.
std::optional<std::vector<double>> extract_patch(const GrayImage& img, double x, double y,
                                                 int half);

// Precomputed zero-mean, unit-norm patch for repeated correlation.
struct NormalizedPatch {
  std::vector<double> values;
  bool valid = false;
};
NormalizedPatch normalize_patch(std::span<const double> patch);
// Correlation of a normalized template against a raw patch.
std::optional<double> zncc_normalized(const NormalizedPatch& tmpl, std::span<const double> b);

}  // namespace endoslam
