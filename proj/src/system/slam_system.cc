#include "endoslam/system/slam_system.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <sstream>
#include <tuple>

#include "endoslam/densify/densify.h"
#include "endoslam/mapping/local_mapping.h"
#include "endoslam/relocate/relocalizer.h"
#include "endoslam/tracking/initializer.h"
#include "endoslam/tracking/tracking.h"
#include "endoslam/util/strings.h"

namespace endoslam {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void split_by_provenance(const WorldMap& map, const std::vector<PointId>& ids,
                         std::vector<PointId>& orb, std::vector<PointId>& dense) {
  for (PointId id : ids)
    (map.point(id).provenance == Provenance::kDensified ? dense : orb).push_back(id);
}

// Keyframe sharing the most inlier points with the frame; ties go to the
// newest keyframe.
std::optional<KeyFrameId> best_reference(const WorldMap& map, const TrackResult& tr) {
  std::map<KeyFrameId, int> votes;
  for (const FrameMatch& m : tr.matches)
    if (m.inlier && map.has_point(m.point))
      for (const auto& [kid, idx] : map.point(m.point).observations) ++votes[kid];
  std::optional<KeyFrameId> best;
  int best_votes = 0;
  for (const auto& [kid, v] : votes)
    if (v >= best_votes) {
      best_votes = v;
      best = kid;
    }
  return best;
}

}  // namespace

const char* timing_label(TimingCategory category) {
  switch (category) {
    case TimingCategory::kNewPointsTriangulation: return "New points triangulation";
    case TimingCategory::kOrbTriangulation: return "ORB triangulation";
    case TimingCategory::kOrbMatching: return "ORB matching";
    case TimingCategory::kFlowAndCorrelation: return "LK-flow + cross-correlation";
    case TimingCategory::kTotalTracking: return "Total tracking time";
  }
  return "?";
}

SlamSystem::SlamSystem(CameraModel cam, SystemConfig config,
                       std::shared_ptr<const Vocabulary> vocabulary, bool concurrent)
    : cam_(cam),
      config_(std::move(config)),
      vocabulary_(std::move(vocabulary)),
      concurrent_(concurrent),
      map_(config_.n_levels, config_.scale_factor),
      semidense_(config_.semidense_options()) {
  if (concurrent_) mapper_ = std::thread([this] { mapper_loop(); });
}

SlamSystem::~SlamSystem() { finish(); }

void SlamSystem::finish() {
  if (!mapper_.joinable()) return;
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  mapper_.join();
}

void SlamSystem::add_time(TimingCategory category, double ms) {
  std::lock_guard lock(stats_mutex_);
  TimingStat& t = stats_.timing[static_cast<std::size_t>(category)];
  t.total_ms += ms;
  ++t.count;
}

FrameReport SlamSystem::process(GrayImage image, double timestamp) {
  const auto start = Clock::now();
  const bool initializing = state_.status == TrackStatus::kInitializing;
  Frame frame = make_frame(std::move(image), frame_counter_++, timestamp, cam_,
                           config_.frame_options());
  inline_mapping_ms_ = 0.0;
  FrameReport report = initializing ? initialize(std::move(frame)) : track(std::move(frame));
  // Keyframes mapped synchronously are not tracking time.
  if (!initializing)
    add_time(TimingCategory::kTotalTracking, elapsed_ms(start) - inline_mapping_ms_);
  std::lock_guard lock(stats_mutex_);
  ++stats_.frames;
  return report;
}

KeyFrame SlamSystem::make_keyframe(const Frame& frame,
                                   const std::vector<std::pair<PointId, Pixel>>& extra) const {
  KeyFrame kf;
  kf.frame_id = frame.id;
  kf.timestamp = frame.timestamp;
  kf.pose = frame.pose;
  kf.pyramid = frame.pyramid;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    kf.add_keypoint(frame.keypoints[i], frame.descriptors[i], frame.normalized[i], false);
    if (!frame.outlier[i]) kf.point_of[i] = frame.matched[i];
  }
  if (extra.empty()) return kf;
  map_.read([&](const WorldMap& map) {
    for (const auto& [pid, px] : extra) {
      const auto xn = cam_.pixel_to_normalized(px);
      if (!xn || !map.has_point(pid)) continue;
      Keypoint kp;
      kp.position = px;
      const std::size_t k = kf.add_keypoint(kp, map.point(pid).descriptor, *xn, true);
      kf.point_of[k] = pid;
    }
    return 0;
  });
  return kf;
}

void SlamSystem::record_pose(const Frame& frame) {
  const Pose ref = map_.read([&](const WorldMap& map) {
    if (!map.has_keyframe(reference_)) reference_ = *map.last_keyframe();
    return map.keyframe(reference_).pose;
  });
  poses_.push_back({frame.timestamp, reference_, frame.pose * ref.inverse()});
}

FrameReport SlamSystem::initialize(Frame frame) {
  FrameReport report{frame.id, TrackStatus::kInitializing};
  const InitializerOptions opts = config_.initializer_options();
  if (!init_reference_ || static_cast<int>(init_reference_->size()) < opts.min_matches) {
    init_reference_ = std::move(frame);
    return report;
  }
  if (frame.id - init_reference_->id > static_cast<std::uint64_t>(config_.init_max_frames)) {
    init_reference_ = std::move(frame);
    std::lock_guard lock(stats_mutex_);
    ++stats_.init_resets;
    return report;
  }
  const auto rec = initialize_two_view(*init_reference_, frame, cam_, opts);
  if (!rec) return report;

  Frame& ref = *init_reference_;
  ref.pose = Pose::identity();
  ref.has_pose = true;
  frame.pose = rec->pose_cur;
  frame.has_pose = true;

  const std::size_t n_points = map_.write([&](WorldMap& map) {
    const KeyFrameId k0 = map.insert_keyframe(make_keyframe(ref, {}));
    const KeyFrameId k1 = map.insert_keyframe(make_keyframe(frame, {}));
    for (std::size_t j = 0; j < rec->pairs.size(); ++j) {
      MapPoint mp;
      mp.position = rec->points[j];
      mp.descriptor = ref.descriptors[rec->pairs[j].ref];
      mp.observations = {{k0, rec->pairs[j].ref}, {k1, rec->pairs[j].cur}};
      mp.anchor_keyframe = k0;
      mp.created_frame = frame.id;
      const PointId id = map.insert_point(std::move(mp));
      map.update_point_descriptor(id);
      map.update_point_geometry(id);
    }
    local_bundle_adjust(map, k1, cam_, config_.local_ba_options());

    // Median depth of the first keyframe back to one.
    std::vector<double> depths;
    for (PointId p : map.keyframe(k0).point_of)
      if (p != kNoPoint) depths.push_back(map.keyframe(k0).pose.transform(map.point(p).position).z());
    if (depths.size() < static_cast<std::size_t>(opts.min_points)) {
      map = WorldMap(config_.n_levels, config_.scale_factor);
      return std::size_t{0};
    }
    std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
    const double s = 1.0 / depths[depths.size() / 2];
    for (const auto& [id, mp] : map.points()) map.point(id).position *= s;
    map.keyframe(k1).pose.translation *= s;
    for (const auto& [id, mp] : map.points()) map.update_point_geometry(id);
    for (KeyFrameId k : {k0, k1}) {
      map.update_median_depth(k);
      KeyFrame& kf = map.keyframe(k);
      if (vocabulary_) {
        kf.bow = vocabulary_->bow(kf.descriptors, config_.reloc_node_depth, &kf.features);
        database_.add(k, kf.bow);
      }
    }
    ref.pose = map.keyframe(k0).pose;
    frame.pose = map.keyframe(k1).pose;
    reference_ = k0;
    return map.num_points();
  });
  if (n_points == 0) {
    init_reference_ = std::move(frame);
    std::lock_guard lock(stats_mutex_);
    ++stats_.init_resets;
    return report;
  }

  record_pose(ref);
  reference_ = map_.read([](const WorldMap& map) { return *map.last_keyframe(); });
  record_pose(frame);
  state_.status = TrackStatus::kTracking;
  state_.has_velocity = false;
  state_.last_pose = frame.pose;
  last_keyframe_frame_ = frame.id;
  keyframe_inliers_ = static_cast<int>(n_points);
  semidense_.reset();
  semidense_.track(frame, WorldMap(), {}, cam_);
  init_reference_.reset();
  {
    std::lock_guard lock(stats_mutex_);
    stats_.initialized_frame = static_cast<long>(frame.id);
    stats_.keyframes_created += 2;
    stats_.points_triangulated += static_cast<long>(n_points);
    stats_.tracked_frames += 2;
  }
  report.status = TrackStatus::kTracking;
  report.keyframe = true;
  return report;
}

FrameReport SlamSystem::track(Frame frame) {
  FrameReport report{frame.id, state_.status};
  const TrackingOptions topts = config_.tracking_options();
  std::vector<PointId> dense_local;

  // Local map matching around `ref` from `predicted`; timed as ORB matching.
  auto track_local = [&](KeyFrameId ref, const Pose& predicted) {
    const auto start = Clock::now();
    TrackResult tr = map_.read([&](const WorldMap& map) {
      if (!map.has_keyframe(ref)) ref = *map.last_keyframe();
      std::vector<PointId> orb;
      dense_local.clear();
      split_by_provenance(map, local_map_points(map, ref, topts.local_keyframes), orb, dense_local);
      return track_frame(frame, map, orb, predicted, cam_, topts);
    });
    add_time(TimingCategory::kOrbMatching, elapsed_ms(start));
    return tr;
  };

  TrackResult tr;
  if (state_.status == TrackStatus::kLost) {
    if (!vocabulary_) {
      std::lock_guard lock(stats_mutex_);
      ++stats_.lost_frames;
      return report;
    }
    const RelocalizationResult rr = map_.read([&](const WorldMap& map) {
      return relocalize(frame, map, database_, *vocabulary_, cam_, config_.relocalization_options());
    });
    if (rr.ok) tr = track_local(rr.keyframe, rr.pose);
    if (!rr.ok || !tr.ok) {
      std::lock_guard lock(stats_mutex_);
      ++stats_.lost_frames;
      return report;
    }
    reference_ = rr.keyframe;
    state_.has_velocity = false;
    semidense_.reset();
    report.relocalized = true;
    std::lock_guard lock(stats_mutex_);
    ++stats_.relocalizations;
  } else {
    tr = track_local(reference_, predict_pose(state_));
    if (!tr.ok) {
      state_.status = TrackStatus::kLost;
      state_.has_velocity = false;
      semidense_.reset();
      report.status = TrackStatus::kLost;
      report.n_inliers = tr.n_inliers;
      std::lock_guard lock(stats_mutex_);
      ++stats_.lost_frames;
      return report;
    }
  }

  state_.status = TrackStatus::kTracking;
  advance_state(state_, frame.pose);
  state_.matched_count = tr.n_inliers;
  report.status = TrackStatus::kTracking;
  report.n_inliers = tr.n_inliers;

  int matched = 0;
  for (PointId id : tr.visible) ++pending_counts_[id].first;
  for (const FrameMatch& m : tr.matches)
    if (m.inlier) {
      ++pending_counts_[m.point].second;
      ++matched;
    }

  std::vector<std::pair<PointId, Pixel>> dense_tracks;
  if (config_.semidense && config_.densify) {
    const auto start = Clock::now();
    map_.read([&](const WorldMap& map) {
      for (PointId id : dense_local)
        if (map.has_point(id) && project(map.point(id).position, frame.pose, cam_)) ++pending_counts_[id].first;
      for (const SemidenseTrack& t : semidense_.track(frame, map, dense_local, cam_)) {
        ++pending_counts_[t.point].second;
        dense_tracks.emplace_back(t.point, t.pixel);
      }
      return 0;
    });
    add_time(TimingCategory::kFlowAndCorrelation, elapsed_ms(start));
  }
  report.semidense = static_cast<int>(dense_tracks.size());

  const KeyFrameId new_ref = map_.read(
      [&](const WorldMap& map) { return best_reference(map, tr).value_or(reference_); });

  KeyframeDecisionInput in;
  in.frames_since_keyframe = static_cast<int>(frame.id - last_keyframe_frame_);
  in.tracked_reference_points = tr.n_inliers;
  in.reference_points = keyframe_inliers_;
  in.mapper_idle = mapper_idle();
  in.inliers = tr.n_inliers;
  if (need_keyframe(in, config_.keyframe_policy())) {
    KeyframeMessage msg;
    msg.keyframe = make_keyframe(frame, dense_tracks);
    msg.counts = std::move(pending_counts_);
    msg.frame = frame.id;
    pending_counts_.clear();
    last_keyframe_frame_ = frame.id;
    keyframe_inliers_ = tr.n_inliers;
    report.keyframe = true;
    submit(std::move(msg));
  }

  reference_ = new_ref;
  record_pose(frame);
  std::lock_guard lock(stats_mutex_);
  ++stats_.tracked_frames;
  stats_.matched_points += matched;
  stats_.visible_points += static_cast<long>(tr.visible.size());
  stats_.semidense_tracks += static_cast<long>(dense_tracks.size());
  return report;
}

bool SlamSystem::mapper_idle() {
  if (!concurrent_) return true;
  std::lock_guard lock(queue_mutex_);
  return queue_.empty() && !mapper_busy_;
}

void SlamSystem::submit(KeyframeMessage message) {
  if (!concurrent_) {
    const auto start = Clock::now();
    map_keyframe(message);
    inline_mapping_ms_ += elapsed_ms(start);
    return;
  }
  std::unique_lock lock(queue_mutex_);
  queue_cv_.wait(lock, [&] {
    return queue_.size() < static_cast<std::size_t>(config_.queue_capacity);
  });
  queue_.push_back(std::move(message));
  lock.unlock();
  queue_cv_.notify_all();
}

void SlamSystem::mapper_loop() {
  for (;;) {
    std::unique_lock lock(queue_mutex_);
    queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) return;
    KeyframeMessage msg = std::move(queue_.front());
    queue_.pop_front();
    mapper_busy_ = true;
    lock.unlock();
    queue_cv_.notify_all();
    map_keyframe(msg);
    lock.lock();
    mapper_busy_ = false;
  }
}

void SlamSystem::map_keyframe(KeyframeMessage& message) {
  // Insertion: tracking statistics, observations of still-existing points.
  const KeyFrameId id = map_.write([&](WorldMap& map) {
    for (const auto& [pid, c] : message.counts)
      if (map.has_point(pid)) {
        map.point(pid).visible_count += c.first;
        map.point(pid).found_count += c.second;
      }
    KeyFrame& kf = message.keyframe;
    std::set<PointId> used;
    for (PointId& p : kf.point_of)
      if (p != kNoPoint && (!map.has_point(p) || !used.insert(p).second)) p = kNoPoint;
    if (vocabulary_) kf.bow = vocabulary_->bow(kf.descriptors, config_.reloc_node_depth, &kf.features);
    const KeyFrameId kid = map.insert_keyframe(std::move(kf));
    for (PointId p : used) {
      map.update_point_descriptor(p);
      map.update_point_geometry(p);
    }
    map.update_median_depth(kid);
    return kid;
  });

  auto start = Clock::now();
  const std::size_t triangulated = map_.write([&](WorldMap& map) {
    return insert_and_triangulate(map, id, cam_, config_.triangulation_options()).size();
  });
  add_time(TimingCategory::kOrbTriangulation, elapsed_ms(start));

  const LocalBaReport ba = map_.write(
      [&](WorldMap& map) { return local_bundle_adjust(map, id, cam_, config_.local_ba_options()); });

  std::size_t densified = 0;
  if (config_.densify) {
    start = Clock::now();
    densified = map_.write([&](WorldMap& map) {
      return densify_keyframe(map, id, cam_, config_.densify_options()).size();
    });
    add_time(TimingCategory::kNewPointsTriangulation, elapsed_ms(start));
  }

  const auto [culled_points, culled_kfs] = map_.write([&](WorldMap& map) {
    const std::size_t points = map.cull_points(config_.point_culling(), cam_, message.frame).size();
    std::map<KeyFrameId, Pose> before;
    for (const auto& [kid, kf] : map.keyframes()) before.emplace(kid, kf.pose);
    const std::vector<KeyFrameId> removed = map.cull_keyframes(config_.keyframe_culling());
    {
      std::lock_guard lock(stats_mutex_);
      for (KeyFrameId k : removed) culled_poses_[k] = before.at(k);
    }
    for (KeyFrameId k : removed) database_.erase(k);
    if (vocabulary_ && map.has_keyframe(id)) database_.add(id, map.keyframe(id).bow);
    return std::pair{points, removed.size()};
  });

  std::lock_guard lock(stats_mutex_);
  ++stats_.keyframes_created;
  stats_.keyframes_culled += static_cast<long>(culled_kfs);
  stats_.points_triangulated += static_cast<long>(triangulated);
  stats_.points_densified += static_cast<long>(densified);
  stats_.points_culled += static_cast<long>(culled_points);
  stats_.ba_observations += static_cast<long>(ba.observations);
  stats_.ba_flagged += static_cast<long>(ba.flagged);
}

Trajectory SlamSystem::trajectory() const {
  Trajectory out;
  out.reserve(poses_.size());
  std::lock_guard lock(stats_mutex_);
  map_.read([&](const WorldMap& map) {
    for (const TrackedPose& p : poses_) {
      const Pose ref = map.has_keyframe(p.reference) ? map.keyframe(p.reference).pose
                                                     : culled_poses_.at(p.reference);
      out.push_back({p.timestamp, p.relative * ref});
    }
    return 0;
  });
  return out;
}

std::string SlamSystem::map_export() const {
  return map_.read([](const WorldMap& map) { return format_map_export(map); });
}

SystemStats SlamSystem::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

std::string format_stats(const SystemStats& s, const SystemConfig& config, bool include_timing) {
  std::ostringstream out;
  out << "frames " << s.frames << '\n'
      << "initialized_frame " << s.initialized_frame << '\n'
      << "tracked_frames " << s.tracked_frames << '\n'
      << "lost_frames " << s.lost_frames << '\n'
      << "relocalizations " << s.relocalizations << '\n'
      << "initialization_resets " << s.init_resets << '\n'
      << "keyframes_created " << s.keyframes_created << '\n'
      << "keyframes_culled " << s.keyframes_culled << '\n'
      << "points_triangulated " << s.points_triangulated << '\n'
      << "points_densified " << s.points_densified << '\n'
      << "points_culled " << s.points_culled << '\n'
      << "semidense_tracks " << s.semidense_tracks << '\n'
      << "matched_fraction "
      << format_double(s.visible_points > 0
                           ? static_cast<double>(s.matched_points) / static_cast<double>(s.visible_points)
                           : 0.0)
      << '\n'
      << "ba_flagged_fraction "
      << format_double(s.ba_observations > 0
                           ? static_cast<double>(s.ba_flagged) / static_cast<double>(s.ba_observations)
                           : 0.0)
      << '\n'
      << "densify " << (config.densify ? "on" : "off") << '\n';
  out << "# mean milliseconds per call (calls)\n";
  for (std::size_t c = 0; c < kNumTimingCategories; ++c) {
    const TimingStat& t = s.timing[c];
    out << timing_label(static_cast<TimingCategory>(c)) << ": ";
    if (include_timing) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", t.mean_ms());
      out << buf;
    } else {
      out << '-';
    }
    out << " ms (" << t.count << ")\n";
  }
  return out.str();
}

std::string format_timing(const SystemStats& s) {
  std::ostringstream out;
  for (std::size_t c = 0; c < kNumTimingCategories; ++c) {
    const TimingStat& t = s.timing[c];
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s: %.3f ms (%ld)\n", timing_label(static_cast<TimingCategory>(c)),
                  t.mean_ms(), t.count);
    out << buf;
  }
  return out.str();
}

}  // namespace endoslam
