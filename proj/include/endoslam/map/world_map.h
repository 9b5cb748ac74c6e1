#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "endoslam/geometry/camera.h"
#include "endoslam/map/map_types.h"

namespace endoslam {

struct PointCullingOptions {
  double min_found_ratio = 0.25;
  // Points younger than this many frames are provisional.
  int provisional_frames = 25;
  double min_parallax_deg = 1.4035;
  // Squared reprojection error normalized by the level variance.
  double max_reprojection_sq = 0.5991;
};

struct KeyFrameCullingOptions {
  double redundant_fraction = 0.9;
  int min_other_observers = 3;
  int protected_recent = 2;
};

using CovisibilityGraph = std::map<KeyFrameId, std::map<KeyFrameId, int>>;

// Store of keyframes, map points and the covisibility graph. Not internally
// synchronized; see SharedMap.
class WorldMap {
 public:
  WorldMap() = default;
  WorldMap(int n_levels, double scale_factor)
      : n_levels_(n_levels), scale_factor_(scale_factor) {}

  // Assigns a fresh id. Every non-empty point_of entry must name an
  // existing point whose keyframe slot is free.
  KeyFrameId insert_keyframe(KeyFrame kf);
  // Assigns a fresh id; observations must name existing keyframes and free
  // keypoint slots.
  PointId insert_point(MapPoint mp);
  void remove_point(PointId id);
  // Detaches all observations; points left with fewer than two
  // observations are removed too.
  void remove_keyframe(KeyFrameId id);

  void add_observation(PointId pid, KeyFrameId kid, std::size_t keypoint);
  void remove_observation(PointId pid, KeyFrameId kid);
  // Moves all observations of `from` onto `into` (slots already observing
  // `into` are skipped) and removes `from`.
  void merge_points(PointId from, PointId into);

  bool has_keyframe(KeyFrameId id) const { return keyframes_.count(id) != 0; }
  bool has_point(PointId id) const { return points_.count(id) != 0; }
  const KeyFrame& keyframe(KeyFrameId id) const;
  KeyFrame& keyframe(KeyFrameId id);
  const MapPoint& point(PointId id) const;
  MapPoint& point(PointId id);

  const std::map<KeyFrameId, KeyFrame>& keyframes() const { return keyframes_; }
  const std::map<PointId, MapPoint>& points() const { return points_; }
  std::size_t num_keyframes() const { return keyframes_.size(); }
  std::size_t num_points() const { return points_.size(); }
  std::optional<KeyFrameId> first_keyframe() const;
  std::optional<KeyFrameId> last_keyframe() const;

  // Top-k neighbours by weight (descending), ties by ascending id.
  std::vector<KeyFrameId> covisible(KeyFrameId id, std::size_t k) const;
  int covisibility_weight(KeyFrameId a, KeyFrameId b) const;
  const CovisibilityGraph& covisibility() const { return covisibility_; }
  // Graph recomputed from the observation links alone.
  CovisibilityGraph rebuild_covisibility() const;

  // Referential integrity and graph consistency; returns a description of
  // the first problem found, empty when consistent.
  std::string audit() const;

  // Representative descriptor, viewing normal and distance band.
  void update_point_descriptor(PointId id);
  void update_point_geometry(PointId id);
  // Median camera-frame depth of the keyframe's points.
  void update_median_depth(KeyFrameId id);

  // Maximum pairwise parallax over (up to the first 10) observing centers.
  double point_parallax_deg(PointId id) const;
  // Largest squared reprojection error over the observations, normalized by
  // each observation's level variance.
  double point_max_normalized_error2(PointId id, const CameraModel& cam) const;

  std::vector<PointId> cull_points(const PointCullingOptions& opt, const CameraModel& cam,
                                   std::uint64_t current_frame);
  std::vector<KeyFrameId> cull_keyframes(const KeyFrameCullingOptions& opt);

  int n_levels() const { return n_levels_; }
  double scale_factor() const { return scale_factor_; }
  double level_variance(int level) const;

 private:
  void link(PointId pid, MapPoint& mp, KeyFrameId kid, std::size_t keypoint);
  void unlink(PointId pid, MapPoint& mp, KeyFrameId kid);
  void bump_covisibility(KeyFrameId a, KeyFrameId b, int delta);

  std::map<KeyFrameId, KeyFrame> keyframes_;
  std::map<PointId, MapPoint> points_;
  CovisibilityGraph covisibility_;
  KeyFrameId next_keyframe_id_ = 0;
  PointId next_point_id_ = 0;
  int n_levels_ = 8;
  double scale_factor_ = 1.2;
};

// One writer, many readers. Readers hold a shared lock for the duration of
// their read and never see a half-applied mutation.
class SharedMap {
 public:
  SharedMap(int n_levels, double scale_factor) : map_(n_levels, scale_factor) {}

  template <typename F>
  auto read(F&& f) const {
    std::shared_lock lock(mutex_);
    return f(static_cast<const WorldMap&>(map_));
  }
  template <typename F>
  auto write(F&& f) {
    std::unique_lock lock(mutex_);
    return f(map_);
  }

 private:
  mutable std::shared_mutex mutex_;
  WorldMap map_;
};

// Map export, line oriented:
//   endoslam-map 1
//   points <N> keyframes <M>
//   P <id> <x> <y> <z> <O|D> <n_obs>            (N lines)
//   K <id> <tx> <ty> <tz> <qw> <qx> <qy> <qz> <timestamp>   (M lines)
// Keyframe poses are camera-to-world: t is the camera center, q the
// camera-to-world rotation.
struct ExportedPoint {
  PointId id;
  Point3 position;
  Provenance provenance;
  int n_observations;
};
struct ExportedKeyFrame {
  KeyFrameId id;
  Pose pose;  // world-to-camera
  double timestamp;
};
struct MapExport {
  std::vector<ExportedPoint> points;
  std::vector<ExportedKeyFrame> keyframes;
};

std::string format_map_export(const WorldMap& map);
MapExport parse_map_export(const std::string& text);
MapExport load_map_export(const std::filesystem::path& path);

}  // namespace endoslam
