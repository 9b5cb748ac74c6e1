#include "endoslam/relocate/relocalizer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "endoslam/relocate/p3p.h"
#include "endoslam/util/error.h"
#include "endoslam/util/random.h"

namespace endoslam {

namespace {

double normalized_error2(const Pose& pose, const PoseObservation& o, const CameraModel& cam,
                         double scale_factor) {
  const auto px = cam.project_camera(pose.transform(o.point));
  if (!px) return std::numeric_limits<double>::infinity();
  return (*px - o.pixel).squaredNorm() / std::pow(scale_factor, 2 * o.level);
}

}  // namespace

std::optional<PnpRansacResult> pnp_ransac(const std::vector<PoseObservation>& obs,
                                          const CameraModel& cam, const PnpRansacOptions& o) {
  const std::size_t n = obs.size();
  if (n < 3) return std::nullopt;
  std::vector<Vec3> bearings(n);
  std::vector<bool> usable(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xn = cam.pixel_to_normalized(obs[i].pixel);
    if (!xn) continue;
    bearings[i] = Vec3(xn->x(), xn->y(), 1.0);
    usable[i] = true;
  }
  Rng rng(o.seed);
  std::optional<PnpRansacResult> best;
  int needed = o.max_iterations;
  int it = 0;
  for (; it < needed && it < o.max_iterations; ++it) {
    std::array<std::size_t, 3> s;
    s[0] = rng.index(n);
    do s[1] = rng.index(n); while (s[1] == s[0]);
    do s[2] = rng.index(n); while (s[2] == s[0] || s[2] == s[1]);
    if (!usable[s[0]] || !usable[s[1]] || !usable[s[2]]) continue;
    std::vector<Pose> solutions;
    try {
      solutions = p3p({bearings[s[0]], bearings[s[1]], bearings[s[2]]},
                      {obs[s[0]].point, obs[s[1]].point, obs[s[2]].point});
    } catch (const Error&) {
      continue;  // collinear sample
    }
    for (const Pose& pose : solutions) {
      PnpRansacResult r;
      r.pose = pose;
      r.inlier.assign(n, false);
      for (std::size_t i = 0; i < n; ++i) {
        r.inlier[i] = normalized_error2(pose, obs[i], cam, o.scale_factor) <= o.inlier_threshold;
        r.n_inliers += r.inlier[i];
      }
      if (best && r.n_inliers <= best->n_inliers) continue;
      best = std::move(r);
      const double w = static_cast<double>(best->n_inliers) / static_cast<double>(n);
      const double p_fail = 1.0 - w * w * w;
      if (p_fail <= 0.0) {
        needed = 0;
      } else {
        const double k = std::log(1.0 - o.confidence) / std::log(p_fail);
        needed = static_cast<int>(std::min<double>(o.max_iterations, std::ceil(k)));
      }
    }
  }
  if (best) best->iterations = it;
  return best;
}

namespace {

struct Putative {
  PointId point;
  std::size_t keypoint;
  int distance;
};

// For every map point seen by the group, the best frame keypoint sharing
// its vocabulary node; each keypoint keeps its closest point.
std::vector<Putative> match_group(const Frame& frame, const FeatureVector& frame_features,
                                  const WorldMap& map, const CandidateGroup& group,
                                  const RelocalizationOptions& o) {
  std::map<std::size_t, Putative> by_keypoint;
  std::set<PointId> done;
  for (KeyFrameId kid : group.keyframes) {
    const KeyFrame& kf = map.keyframe(kid);
    for (const auto& [node, kf_idx] : kf.features) {
      const auto fit = frame_features.find(node);
      if (fit == frame_features.end()) continue;
      for (std::size_t i : kf_idx) {
        const PointId pid = kf.point_of[i];
        if (pid == kNoPoint || !done.insert(pid).second) continue;
        const Descriptor256& d = map.point(pid).descriptor;
        int best = 257, second = 257;
        std::size_t best_j = 0;
        for (std::size_t j : fit->second) {
          const int dist = hamming(d, frame.descriptors[j]);
          if (dist < best) {
            second = best;
            best = dist;
            best_j = j;
          } else if (dist < second) {
            second = dist;
          }
        }
        if (best > o.max_hamming || best > o.ratio * second) continue;
        const auto it = by_keypoint.find(best_j);
        if (it == by_keypoint.end() || best < it->second.distance)
          by_keypoint[best_j] = {pid, best_j, best};
      }
    }
  }
  std::vector<Putative> out;
  for (const auto& [k, m] : by_keypoint) out.push_back(m);
  return out;
}

}  // namespace

RelocalizationResult relocalize(const Frame& frame, const WorldMap& map, const KeyframeDatabase& db,
                                const Vocabulary& vocab, const CameraModel& cam,
                                const RelocalizationOptions& o) {
  RelocalizationResult result;
  if (frame.size() == 0 || vocab.empty()) return result;
  FeatureVector features;
  const BowVector bow = vocab.bow(frame.descriptors, o.node_depth, &features);
  for (const CandidateGroup& group : db.query(bow, map, o.query)) {
    ++result.groups_tried;
    const std::vector<Putative> matches = match_group(frame, features, map, group, o);
    if (static_cast<int>(matches.size()) < o.min_inliers) continue;
    std::vector<PoseObservation> obs;
    for (const Putative& m : matches)
      obs.push_back({map.point(m.point).position, frame.keypoints[m.keypoint].position,
                     frame.keypoints[m.keypoint].level});
    PnpRansacOptions ro = o.ransac;
    ro.scale_factor = map.scale_factor();
    const auto hyp = pnp_ransac(obs, cam, ro);
    if (!hyp || hyp->n_inliers < o.min_inliers) continue;
    PoseOptimizerOptions po = o.optimizer;
    po.scale_factor = map.scale_factor();
    const PoseOptimizationResult refined = pose_optimize(hyp->pose, obs, cam, po);
    if (refined.n_inliers < o.min_inliers) continue;
    result.ok = true;
    result.pose = refined.pose;
    result.n_inliers = refined.n_inliers;
    result.keyframe = group.best;
    for (std::size_t i = 0; i < matches.size(); ++i)
      result.matches.push_back({matches[i].point, matches[i].keypoint, refined.inlier[i]});
    return result;
  }
  return result;
}

}  // namespace endoslam
