#pragma once

#include <span>
#include <vector>

#include "endoslam/features/keypoint.h"
#include "endoslam/features/pyramid.h"

namespace endoslam {

struct DetectorOptions {
  int target_count = 1000;
  // Bucketing cell side, in pixels of the level being processed.
  int cell_size = 30;
  int fast_threshold = 20;
  // Per-cell fallback threshold when the cell has no corner at fast_threshold.
  int min_fast_threshold = 7;
};

// Distance from the level border inside which keypoints are never reported.
inline constexpr int kKeypointBorder = 16;
inline constexpr int kOrientationRadius = 15;

// Segment-test (FAST-9) corners on every pyramid level, bucketed per grid
// cell, oriented by intensity centroid. Output ordered by level, then by
// selection order; at most target_count keypoints.
std::vector<Keypoint> detect(const ImagePyramid& pyramid, const DetectorOptions& options);

// FAST-9 score at (x, y): largest t such that the segment test passes with
// threshold t, or 0 when it fails at t = 1. Exposed for tests.
int fast_score(const GrayImage& img, int x, int y);
bool fast_is_corner(const GrayImage& img, int x, int y, int threshold);
// Sum of absolute ring differences beyond the threshold on the dominant side;
// ranks corners for suppression and bucketing.
int corner_strength(const GrayImage& img, int x, int y, int threshold);

// Intensity-centroid orientation over a radius-15 disc.
float intensity_centroid_angle(const GrayImage& img, int x, int y);

struct DescribeResult {
  std::vector<Descriptor256> descriptors;  // one per kept keypoint
  std::vector<std::size_t> kept;           // indices into the input keypoints
  std::vector<std::size_t> dropped;        // too close to the level border
};

// Rotated binary descriptor over a 31x31 patch of the box-blurred level.
DescribeResult describe(const ImagePyramid& pyramid, std::span<const Keypoint> keypoints);

// Descriptor for one keypoint on an already blurred level image; the caller
// checks the border.
Descriptor256 describe_one(const GrayImage& blurred, int x, int y, float angle);

// The smoothing applied before descriptor comparisons.
GrayImage descriptor_blur(const GrayImage& level);

}  // namespace endoslam
