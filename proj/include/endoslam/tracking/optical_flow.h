#pragma once

#include <optional>
#include <vector>

#include "endoslam/image/image.h"

namespace endoslam {

struct LkOptions {
  int levels = 3;
  int window = 21;
  int max_iterations = 30;
  // Stop when the update is below this many pixels.
  double epsilon = 0.01;
  // Forward-backward round-trip tolerance, pixels.
  double fb_threshold = 0.5;
  // Minimum eigenvalue of the mean gradient structure tensor.
  double min_eigenvalue = 1.0;
};

// Factor-two float pyramid with central-difference gradients.
class FlowPyramid {
 public:
  FlowPyramid() = default;
  FlowPyramid(const GrayImage& image, int levels);
  int levels() const { return static_cast<int>(images_.size()); }
  const FloatImage& image(int l) const { return images_[l]; }
  const FloatImage& gx(int l) const { return gx_[l]; }
  const FloatImage& gy(int l) const { return gy_[l]; }

 private:
  std::vector<FloatImage> images_, gx_, gy_;
};

// One-way pyramidal tracking of p (in `from`) into `to`, starting at guess.
std::optional<Pixel> lk_track_one(const FlowPyramid& from, const FlowPyramid& to, const Pixel& p,
                                  const Pixel& guess, const LkOptions& options);

// Forward tracking followed by the backward check; nullopt for points that
// fail either direction or do not return within fb_threshold.
std::vector<std::optional<Pixel>> lk_track(const FlowPyramid& prev, const FlowPyramid& cur,
                                           const std::vector<Pixel>& points,
                                           const std::vector<Pixel>& guesses,
                                           const LkOptions& options);

}  // namespace endoslam
