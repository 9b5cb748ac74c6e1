#pragma once

#include <vector>

#include "endoslam/geometry/pose.h"

namespace endoslam {

enum class TrajectoryKind { kArc, kOrbit, kBreathing, kKidnap };

struct TrajectoryParams {
  TrajectoryKind kind = TrajectoryKind::kArc;
  int n_frames = 200;
  // Point the camera hovers over and its height above it.
  Vec3 base = Vec3::Zero();
  double height = 60.0;
  // Arc: lateral sweep length; orbit: circle radius and swept fraction.
  double arc_length = 30.0;
  double orbit_radius = 15.0;
  double orbit_fraction = 0.5;
  // Breathing: arc for the first settle_frames, then a fixed base with
  // amplitude * sin(2 pi k / period) displacement along the optical axis.
  int settle_frames = 60;
  double amplitude = 0.0;
  double period_frames = 40.0;
  // Kidnap: an arc of kidnap_start frames, kidnap_length frames displaced
  // by kidnap_offset, then the arc traversed backwards.
  int kidnap_start = 200;
  int kidnap_length = 60;
  Vec3 kidnap_offset = Vec3(70.0, 0.0, 0.0);
};

struct SyntheticTrajectory {
  std::vector<Pose> poses;  // world-to-camera
  std::vector<bool> off_scene;
};

// Throws kInvalidArgument for fewer than two frames.
SyntheticTrajectory make_trajectory(const TrajectoryParams& params);

}  // namespace endoslam
