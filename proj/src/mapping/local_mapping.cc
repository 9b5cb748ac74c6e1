#include "endoslam/mapping/local_mapping.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "endoslam/geometry/triangulation.h"

namespace endoslam {

bool need_keyframe(const KeyframeDecisionInput& in, const KeyframePolicyOptions& o) {
  const bool elapsed = in.frames_since_keyframe >= o.max_frames_between;
  const bool weak =
      in.reference_points > 0 && in.tracked_reference_points < o.min_tracked_ratio * in.reference_points;
  return (elapsed || weak) && in.mapper_idle && in.inliers >= o.min_inliers;
}

namespace {

Mat3 essential_between(const Pose& a, const Pose& b) {
  // x_b^T E x_a = 0 for normalized coordinates.
  const Pose rel = b * a.inverse();
  return skew(rel.translation) * rel.rotation;
}

double sampson2(const Mat3& e, const Vec2& xa, const Vec2& xb) {
  const Vec3 a(xa.x(), xa.y(), 1.0), b(xb.x(), xb.y(), 1.0);
  const Vec3 ea = e * a, etb = e.transpose() * b;
  const double num = b.dot(ea);
  const double den = ea.head<2>().squaredNorm() + etb.head<2>().squaredNorm();
  return den > 0.0 ? num * num / den : std::numeric_limits<double>::infinity();
}

double normalized_error2(const KeyFrame& kf, std::size_t i, const Point3& x,
                         const CameraModel& cam, double scale_factor) {
  const auto e2 = reprojection_error2(x, kf.pose, cam, kf.keypoints[i].position);
  if (!e2) return std::numeric_limits<double>::infinity();
  return *e2 / std::pow(scale_factor, 2 * kf.keypoints[i].level);
}

}  // namespace

std::optional<Point3> triangulate_checked(const KeyFrame& a, std::size_t ia, const KeyFrame& b,
                                          std::size_t ib, const CameraModel& cam,
                                          double scale_factor, double min_parallax_deg,
                                          double max_reprojection_sq) {
  const auto x = triangulate_normalized(a.normalized[ia], a.pose, b.normalized[ib], b.pose);
  if (!x) return std::nullopt;
  if (a.pose.transform(*x).z() <= 0.0 || b.pose.transform(*x).z() <= 0.0) return std::nullopt;
  if (parallax_deg(*x, a.pose.center(), b.pose.center()) < min_parallax_deg) return std::nullopt;
  if (normalized_error2(a, ia, *x, cam, scale_factor) > max_reprojection_sq) return std::nullopt;
  if (normalized_error2(b, ib, *x, cam, scale_factor) > max_reprojection_sq) return std::nullopt;
  return x;
}

std::vector<PointId> insert_and_triangulate(WorldMap& map, KeyFrameId kid, const CameraModel& cam,
                                            const TriangulationOptions& o) {
  std::vector<PointId> created;
  const double s = map.scale_factor();
  // Sampson distances are computed in normalized units.
  const double f2 = cam.fx * cam.fy;
  for (KeyFrameId nid : map.covisible(kid, o.covisible_keyframes)) {
    const KeyFrame& kf = map.keyframe(kid);
    const KeyFrame& nb = map.keyframe(nid);
    const double baseline = (kf.pose.center() - nb.pose.center()).norm();
    if (baseline < o.min_baseline_ratio * nb.median_depth) continue;
    const Mat3 e = essential_between(kf.pose, nb.pose);

    std::vector<std::size_t> free_a, free_b;
    for (std::size_t i = 0; i < kf.size(); ++i)
      if (kf.point_of[i] == kNoPoint && !kf.synthetic[i]) free_a.push_back(i);
    for (std::size_t j = 0; j < nb.size(); ++j)
      if (nb.point_of[j] == kNoPoint && !nb.synthetic[j]) free_b.push_back(j);
    if (free_a.empty() || free_b.empty()) continue;

    // Best epipolar-consistent candidate in each direction; keep mutual.
    std::vector<int> best_b(free_a.size(), -1), best_a(free_b.size(), -1);
    std::vector<int> dist_b(free_a.size(), o.max_hamming + 1), dist_a(free_b.size(), o.max_hamming + 1);
    for (std::size_t u = 0; u < free_a.size(); ++u) {
      const std::size_t i = free_a[u];
      const int la = kf.keypoints[i].level;
      for (std::size_t v = 0; v < free_b.size(); ++v) {
        const std::size_t j = free_b[v];
        const int d = hamming(kf.descriptors[i], nb.descriptors[j]);
        if (d > o.max_hamming || (d >= dist_b[u] && d >= dist_a[v])) continue;
        const double sigma2 = std::pow(s, 2 * std::max(la, nb.keypoints[j].level));
        if (f2 * sampson2(e, kf.normalized[i], nb.normalized[j]) > o.max_epipolar_sq * sigma2)
          continue;
        if (d < dist_b[u]) {
          dist_b[u] = d;
          best_b[u] = static_cast<int>(v);
        }
        if (d < dist_a[v]) {
          dist_a[v] = d;
          best_a[v] = static_cast<int>(u);
        }
      }
    }
    for (std::size_t u = 0; u < free_a.size(); ++u) {
      if (best_b[u] < 0 || best_a[best_b[u]] != static_cast<int>(u)) continue;
      const std::size_t i = free_a[u], j = free_b[best_b[u]];
      const auto x = triangulate_checked(kf, i, nb, j, cam, s, o.min_parallax_deg,
                                         o.max_reprojection_sq);
      if (!x) continue;
      MapPoint mp;
      mp.position = *x;
      mp.descriptor = kf.descriptors[i];
      mp.provenance = Provenance::kOrbTriangulated;
      mp.observations = {{kid, i}, {nid, j}};
      mp.anchor_keyframe = kid;
      mp.created_frame = kf.frame_id;
      const PointId pid = map.insert_point(std::move(mp));
      map.update_point_descriptor(pid);
      map.update_point_geometry(pid);
      created.push_back(pid);
    }
  }
  return created;
}

MapBaWindow build_ba_window(const WorldMap& map, const std::vector<KeyFrameId>& free,
                            const std::vector<KeyFrameId>& fixed) {
  MapBaWindow w;
  std::map<KeyFrameId, std::size_t> pose_index;
  auto add_pose = [&](KeyFrameId id, bool is_fixed) {
    if (pose_index.count(id)) return;
    pose_index[id] = w.keyframes.size();
    w.keyframes.push_back(id);
    w.problem.poses.push_back(map.keyframe(id).pose);
    w.problem.pose_fixed.push_back(is_fixed);
  };
  for (KeyFrameId id : free) add_pose(id, false);
  for (KeyFrameId id : fixed) add_pose(id, true);

  std::set<PointId> point_set;
  for (KeyFrameId id : free)
    for (PointId pid : map.keyframe(id).point_of)
      if (pid != kNoPoint) point_set.insert(pid);
  std::map<PointId, std::size_t> point_index;
  for (PointId pid : point_set) {
    point_index[pid] = w.points.size();
    w.points.push_back(pid);
    w.problem.points.push_back(map.point(pid).position);
  }
  for (PointId pid : w.points) {
    for (const auto& [kid, idx] : map.point(pid).observations) {
      const auto it = pose_index.find(kid);
      if (it == pose_index.end()) continue;
      const Keypoint& kp = map.keyframe(kid).keypoints[idx];
      w.problem.observations.push_back({it->second, point_index[pid], kp.position, kp.level});
      w.links.emplace_back(pid, kid);
    }
  }
  return w;
}

LocalBaReport local_bundle_adjust(WorldMap& map, KeyFrameId center, const CameraModel& cam,
                                  const LocalBaOptions& o) {
  LocalBaReport report;
  const auto first = map.first_keyframe();
  std::vector<KeyFrameId> free, fixed;
  std::set<KeyFrameId> window;
  window.insert(center);
  for (KeyFrameId id : map.covisible(center, o.window)) window.insert(id);
  for (KeyFrameId id : window) (first && id == *first ? fixed : free).push_back(id);
  std::set<KeyFrameId> anchors;
  for (KeyFrameId id : window)
    for (PointId pid : map.keyframe(id).point_of)
      if (pid != kNoPoint)
        for (const auto& [kid, idx] : map.point(pid).observations)
          if (!window.count(kid)) anchors.insert(kid);
  fixed.insert(fixed.end(), anchors.begin(), anchors.end());
  // Two fixed poses pin down rotation, translation and scale; without them
  // the monocular gauge is free and the window can drift or shrink.
  while (fixed.size() < 2 && free.size() > 1) {
    const auto oldest = std::find_if(free.begin(), free.end(), [&](KeyFrameId id) { return id != center; });
    fixed.push_back(*oldest);
    free.erase(oldest);
  }

  MapBaWindow w = build_ba_window(map, free, fixed);
  BaOptions ba = o.ba;
  ba.scale_factor = map.scale_factor();
  const BaResult r = bundle_adjust(w.problem, cam, ba);
  report.free_keyframes = free.size();
  report.fixed_keyframes = fixed.size();
  report.points = w.points.size();
  report.observations = w.problem.observations.size();
  report.initial_cost = r.initial_cost;
  report.final_cost = r.final_cost;
  report.iterations = r.iterations;
  report.diagnostic = r.diagnostic;
  if (!r.diagnostic.empty()) return report;

  for (std::size_t i = 0; i < w.keyframes.size(); ++i)
    if (!w.problem.pose_fixed[i]) map.keyframe(w.keyframes[i]).pose = r.poses[i];
  for (std::size_t j = 0; j < w.points.size(); ++j) map.point(w.points[j]).position = r.points[j];

  std::set<PointId> touched;
  for (std::size_t k = 0; k < w.links.size(); ++k) {
    if (!r.outlier[k]) continue;
    const auto [pid, kid] = w.links[k];
    ++report.flagged;
    touched.insert(pid);
    if (map.has_point(pid) && map.point(pid).observations.count(kid)) map.remove_observation(pid, kid);
  }
  report.flagged_points = touched.size();
  for (PointId pid : touched) {
    if (!map.has_point(pid)) continue;
    if (map.point(pid).observations.size() < 2) {
      map.remove_point(pid);
      ++report.removed_points;
    }
  }
  for (PointId pid : w.points)
    if (map.has_point(pid)) map.update_point_geometry(pid);
  for (KeyFrameId id : free) map.update_median_depth(id);
  return report;
}

}  // namespace endoslam
