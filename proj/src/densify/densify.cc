#include "endoslam/densify/densify.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "endoslam/geometry/triangulation.h"

namespace endoslam {

std::vector<KeyFrameId> select_neighbors(const WorldMap& map, KeyFrameId id,
                                         const DensifyOptions& o) {
  const KeyFrame& kf = map.keyframe(id);
  std::vector<KeyFrameId> out;
  // covisible() already orders by weight then id.
  for (KeyFrameId other : map.covisible(id, std::numeric_limits<std::size_t>::max())) {
    const double baseline = (map.keyframe(other).pose.center() - kf.pose.center()).norm();
    if (baseline < o.min_baseline_ratio * kf.median_depth) continue;
    out.push_back(other);
    if (out.size() == o.max_neighbors) break;
  }
  return out;
}

namespace {

std::optional<double> normalized_error2(const Point3& x, const Pose& pose, const CameraModel& cam,
                                        const Pixel& observed, int level, double scale_factor) {
  const auto e2 = reprojection_error2(x, pose, cam, observed);
  if (!e2) return std::nullopt;
  return *e2 / std::pow(scale_factor, 2 * level);
}

}  // namespace

DensifyCandidate densify_candidate(const KeyFrame& kf, std::size_t i, const KeyFrame& nb,
                                   const CameraModel& cam, double scale_factor,
                                   const DensifyOptions& o) {
  DensifyCandidate c;
  const Keypoint& kp = kf.keypoints[i];
  const DepthRange depths{o.min_depth_factor * kf.median_depth, o.max_depth_factor * kf.median_depth};
  const auto m = epipolar_zncc_search(kf.pyramid->level(0), kp.position, kf.pose,
                                      nb.pyramid->level(0), nb.pose, cam, depths, o.search);
  if (!m || m->score < o.min_zncc) {
    c.reject = DensifyReject::kNoMatch;
    return c;
  }
  if (m->second > o.max_second_ratio * m->score) {
    c.reject = DensifyReject::kAmbiguous;
    return c;
  }
  if (m->segment_distance > o.max_epipolar_distance) {
    c.reject = DensifyReject::kEpipolar;
    return c;
  }
  c.target_pixel = m->pixel;
  const auto xn = cam.pixel_to_normalized(m->pixel);
  const auto x = xn ? triangulate_normalized(kf.normalized[i], kf.pose, *xn, nb.pose) : std::nullopt;
  if (!x || kf.pose.transform(*x).z() <= 0.0 || nb.pose.transform(*x).z() <= 0.0) {
    c.reject = DensifyReject::kDepthSign;
    return c;
  }
  c.position = *x;
  const auto ea = normalized_error2(*x, kf.pose, cam, kp.position, kp.level, scale_factor);
  const auto eb = normalized_error2(*x, nb.pose, cam, m->pixel, 0, scale_factor);
  if (!ea || !eb || *ea > o.max_reprojection_sq || *eb > o.max_reprojection_sq) {
    c.reject = DensifyReject::kReprojection;
    return c;
  }
  c.mean_error2 = 0.5 * (*ea + *eb);
  const double z = kf.pose.transform(*x).z();
  if (z < kf.median_depth / o.depth_band || z > kf.median_depth * o.depth_band) {
    c.reject = DensifyReject::kMedianDepth;
    return c;
  }
  return c;
}

std::vector<PointId> densify_keyframe(WorldMap& map, KeyFrameId id, const CameraModel& cam,
                                      const DensifyOptions& o, DensifyStats* stats) {
  DensifyStats local;
  DensifyStats& st = stats ? *stats : local;
  std::vector<PointId> created;
  const std::vector<KeyFrameId> neighbors = select_neighbors(map, id, o);
  if (neighbors.empty()) return created;
  const double s = map.scale_factor();

  std::vector<std::size_t> unmatched;
  {
    const KeyFrame& kf = map.keyframe(id);
    for (std::size_t i = 0; i < kf.size(); ++i)
      if (kf.point_of[i] == kNoPoint && !kf.synthetic[i]) unmatched.push_back(i);
  }
  for (std::size_t i : unmatched) {
    ++st.candidates;
    const KeyFrame& kf = map.keyframe(id);
    std::vector<std::pair<KeyFrameId, DensifyCandidate>> accepted;
    for (KeyFrameId nid : neighbors) {
      DensifyCandidate c = densify_candidate(kf, i, map.keyframe(nid), cam, s, o);
      if (c.reject != DensifyReject::kNone) {
        ++st.rejected[static_cast<int>(c.reject)];
        continue;
      }
      accepted.emplace_back(nid, c);
    }
    if (accepted.empty()) continue;
    // Lowest mean error wins; first neighbour on ties.
    const auto best = std::min_element(accepted.begin(), accepted.end(), [](const auto& a, const auto& b) {
      return a.second.mean_error2 < b.second.mean_error2;
    });
    const Point3 x = best->second.position;

    MapPoint mp;
    mp.position = x;
    mp.descriptor = kf.descriptors[i];
    mp.provenance = Provenance::kDensified;
    mp.anchor_keyframe = id;
    mp.created_frame = kf.frame_id;
    mp.observations[id] = i;
    std::vector<std::pair<KeyFrameId, Pixel>> observers{{best->first, best->second.target_pixel}};
    for (const auto& [nid, c] : accepted) {
      if (nid == best->first) continue;
      // Other matches join when the chosen point also explains them.
      const auto e = normalized_error2(x, map.keyframe(nid).pose, cam, c.target_pixel, 0, s);
      if (e && *e <= o.max_reprojection_sq) observers.emplace_back(nid, c.target_pixel);
    }
    const Descriptor256 descriptor = kf.descriptors[i];
    for (const auto& [nid, px] : observers) {
      KeyFrame& nb = map.keyframe(nid);
      Keypoint kp;
      kp.position = px;
      kp.level = 0;
      mp.observations[nid] = nb.add_keypoint(kp, descriptor, *cam.pixel_to_normalized(px), true);
    }
    st.extra_observations += observers.size() - 1;
    const PointId pid = map.insert_point(std::move(mp));
    map.update_point_geometry(pid);
    created.push_back(pid);
    ++st.created;
  }
  return created;
}

}  // namespace endoslam
