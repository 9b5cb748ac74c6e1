#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "endoslam/geometry/pose.h"

namespace endoslam {

// One trajectory line: "timestamp tx ty tz qx qy qz qw", the pose being
// camera-to-world (t is the camera center).
struct StampedPose {
  double timestamp = 0.0;
  Pose pose;  // world-to-camera
};

using Trajectory = std::vector<StampedPose>;

std::string format_trajectory(const Trajectory& trajectory);
// Blank lines and '#' comments are skipped; malformed lines throw kParse.
Trajectory parse_trajectory(const std::string& text);
Trajectory load_trajectory(const std::filesystem::path& path);
void save_trajectory(const Trajectory& trajectory, const std::filesystem::path& path);

}  // namespace endoslam
