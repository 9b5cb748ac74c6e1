#include "endoslam/tracking/motion.h"

namespace endoslam {

const char* to_string(TrackStatus status) {
  switch (status) {
    case TrackStatus::kInitializing:
      return "initializing";
    case TrackStatus::kTracking:
      return "tracking";
    case TrackStatus::kLost:
      return "lost";
  }
  return "unknown";
}

Pose predict_pose(const TrackState& state) {
  return state.has_velocity ? state.velocity * state.last_pose : state.last_pose;
}

void advance_state(TrackState& state, const Pose& pose) {
  if (state.status == TrackStatus::kTracking) {
    state.velocity = pose * state.last_pose.inverse();
    state.has_velocity = true;
  } else {
    state.has_velocity = false;
    state.velocity = Pose();
  }
  state.last_pose = pose;
  state.status = TrackStatus::kTracking;
}

}  // namespace endoslam
