#include "endoslam/map/world_map.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "endoslam/geometry/triangulation.h"
#include "endoslam/util/error.h"
#include "endoslam/util/strings.h"

namespace endoslam {

double WorldMap::level_variance(int level) const {
  const double s = std::pow(scale_factor_, level);
  return s * s;
}

const KeyFrame& WorldMap::keyframe(KeyFrameId id) const {
  const auto it = keyframes_.find(id);
  if (it == keyframes_.end()) fail(ErrorCode::kUnknownId, "keyframe " + std::to_string(id));
  return it->second;
}

KeyFrame& WorldMap::keyframe(KeyFrameId id) {
  const auto it = keyframes_.find(id);
  if (it == keyframes_.end()) fail(ErrorCode::kUnknownId, "keyframe " + std::to_string(id));
  return it->second;
}

const MapPoint& WorldMap::point(PointId id) const {
  const auto it = points_.find(id);
  if (it == points_.end()) fail(ErrorCode::kUnknownId, "point " + std::to_string(id));
  return it->second;
}

MapPoint& WorldMap::point(PointId id) {
  const auto it = points_.find(id);
  if (it == points_.end()) fail(ErrorCode::kUnknownId, "point " + std::to_string(id));
  return it->second;
}

std::optional<KeyFrameId> WorldMap::first_keyframe() const {
  if (keyframes_.empty()) return std::nullopt;
  return keyframes_.begin()->first;
}

std::optional<KeyFrameId> WorldMap::last_keyframe() const {
  if (keyframes_.empty()) return std::nullopt;
  return keyframes_.rbegin()->first;
}

void WorldMap::bump_covisibility(KeyFrameId a, KeyFrameId b, int delta) {
  if (a == b) return;
  for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
    auto& row = covisibility_[x];
    const int w = (row[y] += delta);
    if (w <= 0) {
      row.erase(y);
    }
  }
}

void WorldMap::link(PointId pid, MapPoint& mp, KeyFrameId kid, std::size_t keypoint) {
  KeyFrame& kf = keyframe(kid);
  if (keypoint >= kf.size())
    fail(ErrorCode::kDanglingReference, "keypoint index out of range");
  if (kf.point_of[keypoint] != kNoPoint && kf.point_of[keypoint] != pid)
    fail(ErrorCode::kDanglingReference, "keypoint slot already taken");
  if (mp.observations.count(kid))
    fail(ErrorCode::kDanglingReference, "point already observed by keyframe");
  for (const auto& [other, idx] : mp.observations) bump_covisibility(kid, other, +1);
  mp.observations[kid] = keypoint;
  kf.point_of[keypoint] = pid;
}

void WorldMap::unlink(PointId pid, MapPoint& mp, KeyFrameId kid) {
  const auto it = mp.observations.find(kid);
  if (it == mp.observations.end()) return;
  KeyFrame& kf = keyframe(kid);
  if (it->second < kf.size() && kf.point_of[it->second] == pid) kf.point_of[it->second] = kNoPoint;
  mp.observations.erase(it);
  for (const auto& [other, idx] : mp.observations) bump_covisibility(kid, other, -1);
}

KeyFrameId WorldMap::insert_keyframe(KeyFrame kf) {
  const std::size_t n = kf.keypoints.size();
  if (kf.descriptors.size() != n) fail(ErrorCode::kInvalidArgument, "descriptor count mismatch");
  if (kf.point_of.empty()) kf.point_of.assign(n, kNoPoint);
  if (kf.synthetic.empty()) kf.synthetic.assign(n, false);
  if (kf.normalized.size() != n || kf.point_of.size() != n || kf.synthetic.size() != n)
    fail(ErrorCode::kInvalidArgument, "keyframe per-keypoint arrays mismatch");
  for (PointId pid : kf.point_of) {
    if (pid == kNoPoint) continue;
    if (!has_point(pid))
      fail(ErrorCode::kDanglingReference, "keyframe references unknown point " + std::to_string(pid));
  }
  const KeyFrameId id = next_keyframe_id_++;
  kf.id = id;
  std::vector<PointId> observed = kf.point_of;
  std::fill(kf.point_of.begin(), kf.point_of.end(), kNoPoint);
  keyframes_.emplace(id, std::move(kf));
  covisibility_[id];
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const PointId pid = observed[i];
    if (pid == kNoPoint) continue;
    MapPoint& mp = points_.at(pid);
    // A point may be claimed by two keypoints of one frame; keep the first.
    if (mp.observations.count(id)) continue;
    link(pid, mp, id, i);
  }
  return id;
}

PointId WorldMap::insert_point(MapPoint mp) {
  for (const auto& [kid, idx] : mp.observations) {
    const auto it = keyframes_.find(kid);
    if (it == keyframes_.end())
      fail(ErrorCode::kDanglingReference, "point references unknown keyframe " + std::to_string(kid));
    if (idx >= it->second.size() || it->second.point_of[idx] != kNoPoint)
      fail(ErrorCode::kDanglingReference, "point references an unavailable keypoint");
  }
  const PointId id = next_point_id_++;
  mp.id = id;
  auto observations = std::move(mp.observations);
  mp.observations.clear();
  auto [it, inserted] = points_.emplace(id, std::move(mp));
  for (const auto& [kid, idx] : observations) link(id, it->second, kid, idx);
  return id;
}

void WorldMap::remove_point(PointId id) {
  auto it = points_.find(id);
  if (it == points_.end()) fail(ErrorCode::kUnknownId, "point " + std::to_string(id));
  while (!it->second.observations.empty())
    unlink(id, it->second, it->second.observations.begin()->first);
  points_.erase(it);
}

void WorldMap::remove_keyframe(KeyFrameId id) {
  KeyFrame& kf = keyframe(id);
  std::vector<PointId> orphans;
  for (PointId pid : kf.point_of) {
    if (pid == kNoPoint) continue;
    MapPoint& mp = points_.at(pid);
    unlink(pid, mp, id);
    if (mp.observations.size() < 2) orphans.push_back(pid);
  }
  for (PointId pid : orphans)
    if (has_point(pid)) remove_point(pid);
  for (const auto& [other, w] : covisibility_[id]) covisibility_[other].erase(id);
  covisibility_.erase(id);
  keyframes_.erase(id);
}

void WorldMap::add_observation(PointId pid, KeyFrameId kid, std::size_t keypoint) {
  link(pid, point(pid), kid, keypoint);
}

void WorldMap::remove_observation(PointId pid, KeyFrameId kid) {
  unlink(pid, point(pid), kid);
}

void WorldMap::merge_points(PointId from, PointId into) {
  if (from == into) return;
  MapPoint& src = point(from);
  MapPoint& dst = point(into);
  const auto observations = src.observations;
  for (const auto& [kid, idx] : observations) {
    unlink(from, src, kid);
    if (!dst.observations.count(kid)) link(into, dst, kid, idx);
  }
  dst.visible_count += src.visible_count;
  dst.found_count += src.found_count;
  points_.erase(from);
}

std::vector<KeyFrameId> WorldMap::covisible(KeyFrameId id, std::size_t k) const {
  if (!has_keyframe(id)) fail(ErrorCode::kUnknownId, "keyframe " + std::to_string(id));
  const auto it = covisibility_.find(id);
  if (it == covisibility_.end()) return {};
  std::vector<std::pair<int, KeyFrameId>> order;
  for (const auto& [other, w] : it->second) order.emplace_back(w, other);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<KeyFrameId> out;
  for (std::size_t i = 0; i < order.size() && i < k; ++i) out.push_back(order[i].second);
  return out;
}

int WorldMap::covisibility_weight(KeyFrameId a, KeyFrameId b) const {
  const auto it = covisibility_.find(a);
  if (it == covisibility_.end()) return 0;
  const auto jt = it->second.find(b);
  return jt == it->second.end() ? 0 : jt->second;
}

CovisibilityGraph WorldMap::rebuild_covisibility() const {
  CovisibilityGraph g;
  for (const auto& [kid, kf] : keyframes_) g[kid];
  for (const auto& [pid, mp] : points_)
    for (auto a = mp.observations.begin(); a != mp.observations.end(); ++a)
      for (auto b = std::next(a); b != mp.observations.end(); ++b) {
        ++g[a->first][b->first];
        ++g[b->first][a->first];
      }
  return g;
}

std::string WorldMap::audit() const {
  std::ostringstream err;
  for (const auto& [pid, mp] : points_) {
    if (mp.id != pid) return "point id mismatch " + std::to_string(pid);
    for (const auto& [kid, idx] : mp.observations) {
      const auto it = keyframes_.find(kid);
      if (it == keyframes_.end()) {
        err << "point " << pid << " observed by missing keyframe " << kid;
        return err.str();
      }
      if (idx >= it->second.size() || it->second.point_of[idx] != pid) {
        err << "point " << pid << " link to keyframe " << kid << " not mirrored";
        return err.str();
      }
    }
  }
  for (const auto& [kid, kf] : keyframes_) {
    if (kf.id != kid) return "keyframe id mismatch " + std::to_string(kid);
    for (std::size_t i = 0; i < kf.point_of.size(); ++i) {
      const PointId pid = kf.point_of[i];
      if (pid == kNoPoint) continue;
      const auto it = points_.find(pid);
      if (it == points_.end()) {
        err << "keyframe " << kid << " references missing point " << pid;
        return err.str();
      }
      const auto ot = it->second.observations.find(kid);
      if (ot == it->second.observations.end() || ot->second != i) {
        err << "keyframe " << kid << " slot " << i << " not mirrored by point " << pid;
        return err.str();
      }
    }
  }
  const CovisibilityGraph fresh = rebuild_covisibility();
  for (const auto& [kid, kf] : keyframes_) {
    const auto a = covisibility_.find(kid);
    const auto b = fresh.find(kid);
    const std::map<KeyFrameId, int> empty;
    const auto& ra = a == covisibility_.end() ? empty : a->second;
    const auto& rb = b == fresh.end() ? empty : b->second;
    if (ra != rb) return "covisibility of keyframe " + std::to_string(kid) + " inconsistent";
  }
  for (const auto& [kid, row] : covisibility_)
    if (!has_keyframe(kid)) return "covisibility row for missing keyframe";
  return {};
}

void WorldMap::update_point_descriptor(PointId id) {
  MapPoint& mp = point(id);
  std::vector<const Descriptor256*> desc;
  for (const auto& [kid, idx] : mp.observations) {
    const KeyFrame& kf = keyframes_.at(kid);
    if (!kf.synthetic[idx]) desc.push_back(&kf.descriptors[idx]);
  }
  if (desc.empty()) return;
  std::size_t best = 0;
  int best_median = 1 << 30;
  std::vector<int> dist;
  for (std::size_t i = 0; i < desc.size(); ++i) {
    dist.clear();
    for (std::size_t j = 0; j < desc.size(); ++j)
      if (j != i) dist.push_back(hamming(*desc[i], *desc[j]));
    int median = 0;
    if (!dist.empty()) {
      std::sort(dist.begin(), dist.end());
      median = dist[(dist.size() - 1) / 2];
    }
    if (median < best_median) {
      best_median = median;
      best = i;
    }
  }
  mp.descriptor = *desc[best];
}

void WorldMap::update_point_geometry(PointId id) {
  MapPoint& mp = point(id);
  if (mp.observations.empty()) return;
  Vec3 normal = Vec3::Zero();
  for (const auto& [kid, idx] : mp.observations) {
    const Vec3 d = mp.position - keyframes_.at(kid).pose.center();
    if (d.norm() > 0) normal += d.normalized();
  }
  mp.normal = normal.norm() > 0 ? normal.normalized() : Vec3::Zero();
  // Reference observation: the anchor when it still observes, else the first.
  auto ref = mp.observations.find(mp.anchor_keyframe);
  if (ref == mp.observations.end()) ref = mp.observations.begin();
  const KeyFrame& kf = keyframes_.at(ref->first);
  const double dist = (mp.position - kf.pose.center()).norm();
  const int level = kf.keypoints[ref->second].level;
  mp.max_distance = dist * std::pow(scale_factor_, level);
  mp.min_distance = mp.max_distance / std::pow(scale_factor_, n_levels_ - 1);
}

void WorldMap::update_median_depth(KeyFrameId id) {
  KeyFrame& kf = keyframe(id);
  std::vector<double> depths;
  for (PointId pid : kf.point_of)
    if (pid != kNoPoint) depths.push_back(kf.pose.transform(points_.at(pid).position).z());
  if (depths.empty()) return;
  const auto mid = depths.begin() + static_cast<long>(depths.size() / 2);
  std::nth_element(depths.begin(), mid, depths.end());
  kf.median_depth = *mid;
}

double WorldMap::point_parallax_deg(PointId id) const {
  const MapPoint& mp = point(id);
  std::vector<Vec3> centers;
  for (const auto& [kid, idx] : mp.observations) {
    centers.push_back(keyframes_.at(kid).pose.center());
    if (centers.size() == 10) break;
  }
  double best = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (std::size_t j = i + 1; j < centers.size(); ++j)
      best = std::max(best, parallax_deg(mp.position, centers[i], centers[j]));
  return best;
}

double WorldMap::point_max_normalized_error2(PointId id, const CameraModel& cam) const {
  const MapPoint& mp = point(id);
  double worst = 0.0;
  for (const auto& [kid, idx] : mp.observations) {
    const KeyFrame& kf = keyframes_.at(kid);
    const Keypoint& kp = kf.keypoints[idx];
    const auto e2 = reprojection_error2(mp.position, kf.pose, cam, kp.position);
    if (!e2) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, *e2 / level_variance(kp.level));
  }
  return worst;
}

std::vector<PointId> WorldMap::cull_points(const PointCullingOptions& opt,
                                           const CameraModel& cam,
                                           std::uint64_t current_frame) {
  std::vector<PointId> doomed;
  for (const auto& [pid, mp] : points_) {
    const bool provisional =
        current_frame <= mp.created_frame + static_cast<std::uint64_t>(opt.provisional_frames);
    if (!provisional) {
      if (mp.observations.size() < 2) doomed.push_back(pid);
      continue;
    }
    // Rule 1: not re-found often enough while provisional.
    if (mp.visible_count > 0 && mp.found_ratio() < opt.min_found_ratio) {
      doomed.push_back(pid);
      continue;
    }
    // Rule 2: low triangulation parallax.
    if (point_parallax_deg(pid) < opt.min_parallax_deg) {
      doomed.push_back(pid);
      continue;
    }
    // Rule 3: excessive reprojection error in some observing keyframe.
    if (point_max_normalized_error2(pid, cam) > opt.max_reprojection_sq) doomed.push_back(pid);
  }
  for (PointId pid : doomed) remove_point(pid);
  return doomed;
}

std::vector<KeyFrameId> WorldMap::cull_keyframes(const KeyFrameCullingOptions& opt) {
  std::vector<KeyFrameId> ids;
  for (const auto& [kid, kf] : keyframes_) ids.push_back(kid);
  if (ids.size() <= static_cast<std::size_t>(opt.protected_recent) + 1) return {};
  // The first keyframe fixes the gauge; the newest ones feed the tracker.
  const std::vector<KeyFrameId> candidates(ids.begin() + 1, ids.end() - opt.protected_recent);

  std::vector<KeyFrameId> removed;
  for (KeyFrameId kid : candidates) {
    const KeyFrame& kf = keyframes_.at(kid);
    int n_points = 0, redundant = 0;
    for (std::size_t i = 0; i < kf.point_of.size(); ++i) {
      const PointId pid = kf.point_of[i];
      if (pid == kNoPoint) continue;
      ++n_points;
      const int level = kf.keypoints[i].level;
      int others = 0;
      for (const auto& [other, idx] : points_.at(pid).observations) {
        if (other == kid) continue;
        if (keyframes_.at(other).keypoints[idx].level <= level) ++others;
        if (others >= opt.min_other_observers) break;
      }
      if (others >= opt.min_other_observers) ++redundant;
    }
    if (n_points > 0 && redundant >= opt.redundant_fraction * n_points) {
      remove_keyframe(kid);
      removed.push_back(kid);
    }
  }
  return removed;
}

std::string format_map_export(const WorldMap& map) {
  std::ostringstream out;
  out << "endoslam-map 1\n";
  out << "points " << map.num_points() << " keyframes " << map.num_keyframes() << "\n";
  for (const auto& [pid, mp] : map.points()) {
    out << "P " << pid << " " << format_double(mp.position.x()) << " "
        << format_double(mp.position.y()) << " " << format_double(mp.position.z()) << " "
        << (mp.provenance == Provenance::kDensified ? 'D' : 'O') << " "
        << mp.observations.size() << "\n";
  }
  for (const auto& [kid, kf] : map.keyframes()) {
    const Pose twc = kf.pose.inverse();
    const Eigen::Quaterniond q = twc.quaternion();
    out << "K " << kid << " " << format_double(twc.translation.x()) << " "
        << format_double(twc.translation.y()) << " " << format_double(twc.translation.z())
        << " " << format_double(q.w()) << " " << format_double(q.x()) << " "
        << format_double(q.y()) << " " << format_double(q.z()) << " "
        << format_double(kf.timestamp) << "\n";
  }
  return out.str();
}

MapExport parse_map_export(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  const auto bad = [](const std::string& why) { fail(ErrorCode::kParse, "map file: " + why); };
  if (!std::getline(in, line) || trim(line) != "endoslam-map 1") bad("missing header");
  if (!std::getline(in, line)) bad("missing counts");
  const auto counts = split_whitespace(line);
  if (counts.size() != 4 || counts[0] != "points" || counts[2] != "keyframes") bad("bad counts line");
  const auto n_points = parse_int(counts[1]);
  const auto n_kfs = parse_int(counts[3]);
  if (!n_points || !n_kfs || *n_points < 0 || *n_kfs < 0) bad("bad counts");
  MapExport out;
  const auto num = [&](const std::string& s) {
    const auto v = parse_double(s);
    if (!v) bad("bad number '" + s + "'");
    return *v;
  };
  for (long long i = 0; i < *n_points; ++i) {
    if (!std::getline(in, line)) bad("truncated point list");
    const auto f = split_whitespace(line);
    if (f.size() != 7 || f[0] != "P" || (f[5] != "O" && f[5] != "D")) bad("bad point line");
    const auto id = parse_int(f[1]);
    const auto nobs = parse_int(f[6]);
    if (!id || !nobs) bad("bad point line");
    out.points.push_back({static_cast<PointId>(*id), Point3(num(f[2]), num(f[3]), num(f[4])),
                          f[5] == "D" ? Provenance::kDensified : Provenance::kOrbTriangulated,
                          static_cast<int>(*nobs)});
  }
  for (long long i = 0; i < *n_kfs; ++i) {
    if (!std::getline(in, line)) bad("truncated keyframe list");
    const auto f = split_whitespace(line);
    if (f.size() != 10 || f[0] != "K") bad("bad keyframe line");
    const auto id = parse_int(f[1]);
    if (!id) bad("bad keyframe line");
    const Vec3 center(num(f[2]), num(f[3]), num(f[4]));
    const Eigen::Quaterniond q(num(f[5]), num(f[6]), num(f[7]), num(f[8]));
    const Pose twc = Pose::from_quaternion(q, center);
    out.keyframes.push_back({static_cast<KeyFrameId>(*id), twc.inverse(), num(f[9])});
  }
  return out;
}

MapExport load_map_export(const std::filesystem::path& path) {
  return parse_map_export(read_text_file(path));
}

}  // namespace endoslam
