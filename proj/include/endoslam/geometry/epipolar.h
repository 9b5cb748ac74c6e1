#pragma once

#include <vector>

#include "endoslam/geometry/camera.h"

namespace endoslam {

struct EpipolarSample {
  Pixel px;      // position in image B
  double depth;  // z-depth of the generating point in camera A
};

struct DepthRange {
  double min = 0.0;
  double max = 0.0;
};

// Maximum spacing between consecutive samples of an epipolar segment.
inline constexpr double kEpipolarMaxStep = 0.7;

// Samples the viewing ray of `px` (image A) over `depths`, projected into
// image B with full distortion. Samples falling outside image B are
// dropped; consecutive kept samples are at most kEpipolarMaxStep apart.
// Ordered by increasing depth.
std::vector<EpipolarSample> epipolar_segment(const Pixel& px, const Pose& pose_a,
                                             const Pose& pose_b,
                                             const CameraModel& cam,
                                             DepthRange depths,
                                             double margin = 0.0);

// Distance from q to the polyline through the samples.
double distance_to_polyline(const Pixel& q, const std::vector<EpipolarSample>& line);

}  // namespace endoslam
