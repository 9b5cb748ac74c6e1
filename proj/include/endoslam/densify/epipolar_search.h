#pragma once

#include <optional>

#include "endoslam/geometry/epipolar.h"
#include "endoslam/image/image.h"

namespace endoslam {

struct EpipolarSearchOptions {
  int patch_half = 5;
  // Samples within this distance of the best one belong to its peak and
  // are ignored when looking for the runner-up.
  double peak_exclusion = 1.5;
};

struct EpipolarMatch {
  Pixel pixel = Pixel::Zero();  // sub-pixel refined position in the target
  double score = -1.0;          // best correlation on the segment
  double second = -1.0;         // best separate peak, -1 when none
  double depth = 0.0;           // z-depth in the source view at the best sample
  double segment_distance = 0.0;
};

// Scans the epipolar segment of `source_px` in `target` over the given
// source-view depth range with a ZNCC template taken around `source_px`.
// The best sample is refined in 2-D by a quadratic fit of the correlation
// over its 3x3 pixel neighbourhood. nullopt when the template is flat or
// the segment leaves no valid sample.
std::optional<EpipolarMatch> epipolar_zncc_search(const GrayImage& source, const Pixel& source_px,
                                                  const Pose& source_pose, const GrayImage& target,
                                                  const Pose& target_pose, const CameraModel& cam,
                                                  DepthRange depths,
                                                  const EpipolarSearchOptions& options = {});

// Fixed-size patch correlator with reusable buffers.
class PatchCorrelator {
 public:
  explicit PatchCorrelator(int half) : half_(half), n_((2 * half + 1) * (2 * half + 1)) {
    tmpl_.resize(n_);
  }
  // False when the template does not fit or has no texture.
  bool set_template(const GrayImage& img, double x, double y);
  // nullopt when the patch does not fit or is flat.
  std::optional<double> score(const GrayImage& img, double x, double y) const;
  int half() const { return half_; }

 private:
  int half_, n_;
  std::vector<double> tmpl_;
};

}  // namespace endoslam
