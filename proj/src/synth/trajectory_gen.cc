#include "endoslam/synth/trajectory_gen.h"

#include <cmath>
#include <numbers>

#include "endoslam/util/error.h"

namespace endoslam {

namespace {

const Vec3 kUp(0.0, 1.0, 0.0);

Pose arc_pose(const TrajectoryParams& p, int k, int n) {
  const double s = n > 1 ? static_cast<double>(k) / (n - 1) : 0.0;
  const double x = p.arc_length * (s - 0.5);
  const double y = 0.12 * p.arc_length * std::sin(std::numbers::pi * s);
  const double z = p.height * (1.0 + 0.03 * std::sin(2.0 * std::numbers::pi * s));
  const Vec3 eye = p.base + Vec3(x, y, z);
  const Vec3 target = p.base + Vec3(0.5 * x, 0.5 * y, 0.0);
  return look_at(eye, target, kUp);
}

Pose orbit_pose(const TrajectoryParams& p, int k, int n) {
  const double s = n > 1 ? static_cast<double>(k) / (n - 1) : 0.0;
  const double phi = 2.0 * std::numbers::pi * p.orbit_fraction * s;
  const Vec3 eye = p.base + Vec3(p.orbit_radius * std::cos(phi), p.orbit_radius * std::sin(phi), p.height);
  return look_at(eye, p.base, kUp);
}

// Moves the camera center by `offset` keeping the orientation.
Pose shifted(const Pose& pose, const Vec3& offset) {
  return Pose::from_center(pose.rotation.transpose(), pose.center() + offset);
}

}  // namespace

SyntheticTrajectory make_trajectory(const TrajectoryParams& p) {
  if (p.n_frames < 2) fail(ErrorCode::kInvalidArgument, "trajectory needs at least two frames");
  SyntheticTrajectory out;
  out.poses.reserve(static_cast<std::size_t>(p.n_frames));
  out.off_scene.assign(static_cast<std::size_t>(p.n_frames), false);
  switch (p.kind) {
    case TrajectoryKind::kArc:
      for (int k = 0; k < p.n_frames; ++k) out.poses.push_back(arc_pose(p, k, p.n_frames));
      break;
    case TrajectoryKind::kOrbit:
      for (int k = 0; k < p.n_frames; ++k) out.poses.push_back(orbit_pose(p, k, p.n_frames));
      break;
    case TrajectoryKind::kBreathing: {
      const int settle = std::clamp(p.settle_frames, 1, p.n_frames);
      for (int k = 0; k < p.n_frames; ++k) {
        if (k < settle) {
          out.poses.push_back(arc_pose(p, k, settle));
          continue;
        }
        const Pose base = arc_pose(p, settle - 1, settle);
        const double d = p.amplitude * std::sin(2.0 * std::numbers::pi * (k - settle) / p.period_frames);
        out.poses.push_back(shifted(base, d * base.optical_axis()));
      }
      break;
    }
    case TrajectoryKind::kKidnap: {
      const int start = p.kidnap_start, len = p.kidnap_length;
      if (start < 2 || len < 0 || start + len >= p.n_frames)
        fail(ErrorCode::kInvalidArgument, "kidnap block does not fit the sequence");
      for (int k = 0; k < p.n_frames; ++k) {
        if (k < start) {
          out.poses.push_back(arc_pose(p, k, start));
        } else if (k < start + len) {
          out.poses.push_back(shifted(arc_pose(p, start - 1, start), p.kidnap_offset));
          out.off_scene[static_cast<std::size_t>(k)] = true;
        } else {
          const int back = std::max(0, start - 1 - (k - start - len));
          out.poses.push_back(arc_pose(p, back, start));
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace endoslam
