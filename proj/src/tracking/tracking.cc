#include "endoslam/tracking/tracking.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "endoslam/densify/epipolar_search.h"

namespace endoslam {

std::vector<PointId> local_map_points(const WorldMap& map, KeyFrameId reference,
                                      int n_neighbors) {
  std::set<PointId> ids;
  if (!map.has_keyframe(reference)) return {};
  std::vector<KeyFrameId> kfs = map.covisible(reference, static_cast<std::size_t>(n_neighbors));
  kfs.insert(kfs.begin(), reference);
  for (KeyFrameId k : kfs)
    for (PointId p : map.keyframe(k).point_of)
      if (p != kNoPoint) ids.insert(p);
  return {ids.begin(), ids.end()};
}

int predict_level(const MapPoint& point, double distance, int n_levels, double scale_factor) {
  if (!(point.max_distance > 0.0) || !(distance > 0.0)) return 0;
  const int level =
      static_cast<int>(std::ceil(std::log(point.max_distance / distance) / std::log(scale_factor) - 1e-9));
  return std::clamp(level, 0, n_levels - 1);
}

namespace {

struct Projected {
  PointId id;
  Pixel px;
  int level;
};

std::vector<Projected> project_local(const WorldMap& map, const std::vector<PointId>& ids,
                                     const Pose& pose, const CameraModel& cam,
                                     const TrackingOptions& options) {
  std::vector<Projected> out;
  out.reserve(ids.size());
  const Vec3 center = pose.center();
  for (PointId id : ids) {
    if (!map.has_point(id)) continue;
    const MapPoint& mp = map.point(id);
    const auto px = project(mp.position, pose, cam);
    if (!px) continue;
    const Vec3 ray = mp.position - center;
    const double dist = ray.norm();
    if (mp.max_distance > 0.0 &&
        (dist < 0.8 * mp.min_distance || dist > 1.2 * mp.max_distance))
      continue;
    if (mp.normal.squaredNorm() > 0.0 && ray.dot(mp.normal) < options.min_view_cos * dist)
      continue;
    out.push_back({id, *px, predict_level(mp, dist, map.n_levels(), map.scale_factor())});
  }
  return out;
}

// Region matching of the projected points against free keypoints. Each
// keypoint keeps the point with the smallest distance (earlier id on ties).
void match_projected(const Frame& frame, const WorldMap& map, const std::vector<Projected>& proj,
                     double radius_multiplier, const TrackingOptions& options,
                     std::vector<PointId>& owner, std::vector<int>& owner_dist,
                     std::set<PointId>& matched_points) {
  const double scale = map.scale_factor();
  for (const Projected& p : proj) {
    if (matched_points.count(p.id)) continue;
    const double radius = options.base_search_radius * options.search_factor *
                          std::pow(scale, p.level) * radius_multiplier;
    const auto idx = frame.grid.query(frame.keypoints, p.px, radius, p.level - 1, p.level + 1);
    const Descriptor256& d = map.point(p.id).descriptor;
    int best = options.max_hamming + 1;
    std::size_t best_k = 0;
    for (std::size_t k : idx) {
      const int h = hamming(d, frame.descriptors[k]);
      if (h < best && (owner[k] == kNoPoint || h < owner_dist[k])) {
        best = h;
        best_k = k;
      }
    }
    if (best > options.max_hamming) continue;
    if (owner[best_k] != kNoPoint) matched_points.erase(owner[best_k]);
    owner[best_k] = p.id;
    owner_dist[best_k] = best;
    matched_points.insert(p.id);
  }
}

struct Refined {
  bool ok = false;
  Pose pose;
  std::vector<std::size_t> keypoints;
  std::vector<bool> inlier;
  int n_inliers = 0;
};

Refined refine(const Frame& frame, const WorldMap& map, const std::vector<PointId>& owner,
               const Pose& initial, const CameraModel& cam, const TrackingOptions& options) {
  Refined r;
  r.pose = initial;
  std::vector<PoseObservation> obs;
  for (std::size_t k = 0; k < owner.size(); ++k) {
    if (owner[k] == kNoPoint) continue;
    obs.push_back({map.point(owner[k]).position, frame.keypoints[k].position,
                   frame.keypoints[k].level});
    r.keypoints.push_back(k);
  }
  if (obs.size() < 4) {
    r.inlier.assign(obs.size(), false);
    return r;
  }
  const PoseOptimizationResult res = pose_optimize(initial, obs, cam, options.optimizer);
  r.ok = true;
  r.pose = res.pose;
  r.inlier = res.inlier;
  r.n_inliers = res.n_inliers;
  return r;
}

}  // namespace

TrackResult track_frame(Frame& frame, const WorldMap& map, const std::vector<PointId>& local_points,
                        const Pose& predicted, const CameraModel& cam,
                        const TrackingOptions& options) {
  TrackResult out;
  out.pose = predicted;
  const std::size_t n = frame.size();
  std::vector<PointId> owner(n, kNoPoint);
  std::vector<int> owner_dist(n, 0);
  std::set<PointId> matched;

  std::vector<Projected> proj = project_local(map, local_points, predicted, cam, options);
  match_projected(frame, map, proj, 1.0, options, owner, owner_dist, matched);
  if (static_cast<int>(matched.size()) < 2 * options.min_inliers) {
    std::fill(owner.begin(), owner.end(), kNoPoint);
    matched.clear();
    match_projected(frame, map, proj, options.wide_search_multiplier, options, owner, owner_dist,
                    matched);
  }
  Refined r = refine(frame, map, owner, predicted, cam, options);

  if (r.ok && r.n_inliers >= options.min_inliers) {
    // Second pass from the refined pose: drop outliers, look for the points
    // the prediction missed, optimize again.
    for (std::size_t i = 0; i < r.keypoints.size(); ++i)
      if (!r.inlier[i]) {
        matched.erase(owner[r.keypoints[i]]);
        owner[r.keypoints[i]] = kNoPoint;
      }
    proj = project_local(map, local_points, r.pose, cam, options);
    match_projected(frame, map, proj, 1.0, options, owner, owner_dist, matched);
    Refined r2 = refine(frame, map, owner, r.pose, cam, options);
    if (r2.ok) r = std::move(r2);
  }

  out.visible.reserve(proj.size());
  for (const Projected& p : proj) out.visible.push_back(p.id);
  std::fill(frame.matched.begin(), frame.matched.end(), kNoPoint);
  std::fill(frame.outlier.begin(), frame.outlier.end(), false);
  for (std::size_t i = 0; i < r.keypoints.size(); ++i) {
    const std::size_t k = r.keypoints[i];
    out.matches.push_back({owner[k], k, r.inlier[i]});
    frame.matched[k] = owner[k];
    frame.outlier[k] = !r.inlier[i];
  }
  out.n_inliers = r.n_inliers;
  out.pose = r.pose;
  out.ok = r.ok && r.n_inliers >= options.min_inliers;
  if (out.ok) {
    frame.pose = out.pose;
    frame.has_pose = true;
  }
  return out;
}

void SemidenseTracker::reset() {
  has_prev_ = false;
  last_.clear();
}

std::vector<SemidenseTrack> SemidenseTracker::track(const Frame& frame, const WorldMap& map,
                                                    const std::vector<PointId>& candidates,
                                                    const CameraModel& cam) {
  FlowPyramid cur(frame.image(), options_.lk.levels);
  std::vector<SemidenseTrack> out;
  if (!has_prev_) {
    prev_ = std::move(cur);
    prev_pose_ = frame.pose;
    has_prev_ = true;
    last_.clear();
    return out;
  }
  const double margin = -(options_.patch_half + 2.0);
  struct Item {
    PointId id;
    Pixel predicted;
    bool has_start;
    Pixel start;
  };
  std::vector<Item> items;
  for (PointId id : candidates) {
    if (!map.has_point(id)) continue;
    const MapPoint& mp = map.point(id);
    if (mp.provenance != Provenance::kDensified) continue;
    const auto px = project(mp.position, frame.pose, cam, margin);
    if (!px) continue;
    Item it{id, *px, false, Pixel::Zero()};
    if (auto f = last_.find(id); f != last_.end()) {
      it.has_start = true;
      it.start = f->second;
    } else if (const auto q = project(mp.position, prev_pose_, cam, margin)) {
      it.has_start = true;
      it.start = *q;
    }
    items.push_back(it);
  }

  std::vector<Pixel> starts, guesses;
  std::vector<std::size_t> flow_items;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].has_start) {
      starts.push_back(items[i].start);
      guesses.push_back(items[i].predicted);
      flow_items.push_back(i);
    }
  const auto flowed = lk_track(prev_, cur, starts, guesses, options_.lk);
  std::vector<std::optional<Pixel>> result(items.size());
  for (std::size_t j = 0; j < flow_items.size(); ++j) {
    const Item& it = items[flow_items[j]];
    if (flowed[j] && (*flowed[j] - it.predicted).norm() <= options_.max_flow_deviation)
      result[flow_items[j]] = flowed[j];
  }

  EpipolarSearchOptions search;
  search.patch_half = options_.patch_half;
  std::map<PointId, Pixel> next;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Item& it = items[i];
    if (result[i]) {
      out.push_back({it.id, *result[i], true});
      next[it.id] = *result[i];
      continue;
    }
    const MapPoint& mp = map.point(it.id);
    if (!map.has_keyframe(mp.anchor_keyframe)) continue;
    const KeyFrame& anchor = map.keyframe(mp.anchor_keyframe);
    const auto obs = mp.observations.find(anchor.id);
    if (obs == mp.observations.end() || !anchor.pyramid) continue;
    const double depth = anchor.pose.transform(mp.position).z();
    if (!(depth > 0.0)) continue;
    const auto m = epipolar_zncc_search(
        anchor.pyramid->level(0), anchor.keypoints[obs->second].position, anchor.pose,
        frame.image(), frame.pose, cam,
        {depth / options_.depth_band, depth * options_.depth_band}, search);
    if (!m || m->score < options_.min_zncc ||
        m->segment_distance > options_.max_epipolar_distance)
      continue;
    out.push_back({it.id, m->pixel, false});
    next[it.id] = m->pixel;
  }
  last_ = std::move(next);
  prev_ = std::move(cur);
  prev_pose_ = frame.pose;
  return out;
}

}  // namespace endoslam
