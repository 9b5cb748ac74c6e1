#pragma once

#include "endoslam/geometry/pose.h"

namespace endoslam {

enum class TrackStatus { kInitializing, kTracking, kLost };

const char* to_string(TrackStatus status);

struct TrackState {
  TrackStatus status = TrackStatus::kInitializing;
  // Relative motion between the last two tracked frames:
  // last_pose = velocity * previous pose.
  Pose velocity;
  bool has_velocity = false;
  Pose last_pose;
  int matched_count = 0;
};

// Constant-velocity prediction velocity * last_pose (last_pose when no
// velocity is known).
Pose predict_pose(const TrackState& state);

// Records a newly tracked pose and updates the velocity.
void advance_state(TrackState& state, const Pose& pose);

}  // namespace endoslam
