#pragma once

#include <array>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "endoslam/relocate/keyframe_database.h"
#include "endoslam/relocate/vocabulary.h"
#include "endoslam/system/config.h"
#include "endoslam/tracking/motion.h"
#include "endoslam/tracking/trajectory.h"

namespace endoslam {

enum class TimingCategory {
  kNewPointsTriangulation,
  kOrbTriangulation,
  kOrbMatching,
  kFlowAndCorrelation,
  kTotalTracking,
};
inline constexpr std::size_t kNumTimingCategories = 5;
const char* timing_label(TimingCategory category);

struct TimingStat {
  double total_ms = 0.0;
  long count = 0;
  double mean_ms() const { return count > 0 ? total_ms / static_cast<double>(count) : 0.0; }
};

struct SystemStats {
  long frames = 0;
  long initialized_frame = -1;  // index of the frame completing the bootstrap
  long tracked_frames = 0;
  long lost_frames = 0;
  long relocalizations = 0;
  long init_resets = 0;
  long keyframes_created = 0;
  long keyframes_culled = 0;
  long points_triangulated = 0;
  long points_densified = 0;
  long points_culled = 0;
  long ba_observations = 0;
  long ba_flagged = 0;
  // Sums over tracked frames of matched / predicted-visible local points.
  long matched_points = 0;
  long visible_points = 0;
  long semidense_tracks = 0;
  std::array<TimingStat, kNumTimingCategories> timing{};
};

struct FrameReport {
  std::uint64_t frame = 0;
  TrackStatus status = TrackStatus::kInitializing;
  int n_inliers = 0;
  int semidense = 0;
  bool keyframe = false;
  bool relocalized = false;
};

// Monocular keyframe SLAM: a tracker fed frame by frame and a mapper
// consuming keyframes. In concurrent mode the mapper owns a thread and a
// bounded queue; otherwise each keyframe is mapped before process returns.
class SlamSystem {
 public:
  // `vocabulary` may be null, which disables relocalization.
  SlamSystem(CameraModel cam, SystemConfig config, std::shared_ptr<const Vocabulary> vocabulary,
             bool concurrent);
  ~SlamSystem();
  SlamSystem(const SlamSystem&) = delete;
  SlamSystem& operator=(const SlamSystem&) = delete;

  FrameReport process(GrayImage image, double timestamp);
  // Drains the keyframe queue and stops the mapper thread.
  void finish();

  // One pose per tracked frame, each expressed through its reference
  // keyframe's current pose; lost and bootstrap-waiting frames are omitted.
  Trajectory trajectory() const;
  std::string map_export() const;
  SystemStats stats() const;
  const SharedMap& map() const { return map_; }
  TrackStatus status() const { return state_.status; }

 private:
  struct KeyframeMessage {
    KeyFrame keyframe;
    std::map<PointId, std::pair<int, int>> counts;  // point -> (visible, found)
    std::uint64_t frame = 0;
  };
  struct TrackedPose {
    double timestamp;
    KeyFrameId reference;
    Pose relative;  // frame pose times the inverse reference pose
  };

  FrameReport initialize(Frame frame);
  FrameReport track(Frame frame);
  KeyFrame make_keyframe(const Frame& frame, const std::vector<std::pair<PointId, Pixel>>& extra) const;
  void record_pose(const Frame& frame);
  void submit(KeyframeMessage message);
  void map_keyframe(KeyframeMessage& message);
  void mapper_loop();
  bool mapper_idle();
  void add_time(TimingCategory category, double ms);

  CameraModel cam_;
  SystemConfig config_;
  std::shared_ptr<const Vocabulary> vocabulary_;
  bool concurrent_;

  SharedMap map_;
  KeyframeDatabase database_;  // mapper-owned, read under the map lock
  TrackState state_;
  std::optional<Frame> init_reference_;
  SemidenseTracker semidense_;
  KeyFrameId reference_ = 0;
  std::uint64_t frame_counter_ = 0;
  std::uint64_t last_keyframe_frame_ = 0;
  // Inliers of the frame that became the last keyframe; the keyframe
  // policy compares the current inlier count against it.
  int keyframe_inliers_ = 0;
  double inline_mapping_ms_ = 0.0;
  std::map<PointId, std::pair<int, int>> pending_counts_;
  std::vector<TrackedPose> poses_;

  // Last known pose of keyframes removed by culling.
  std::map<KeyFrameId, Pose> culled_poses_;

  mutable std::mutex stats_mutex_;
  SystemStats stats_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<KeyframeMessage> queue_;
  bool mapper_busy_ = false;
  bool stopping_ = false;
  std::thread mapper_;
};

// Plain-text summary; timing values are replaced by "-" when
// include_timing is false so that the text depends only on the input.
std::string format_stats(const SystemStats& stats, const SystemConfig& config, bool include_timing);
std::string format_timing(const SystemStats& stats);

}  // namespace endoslam
