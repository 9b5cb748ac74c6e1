#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "endoslam/densify/densify.h"
#include "endoslam/geometry/triangulation.h"
#include "endoslam/synth/dataset.h"
#include "test_support.h"

using namespace endoslam;
using namespace endoslam::test;

namespace {

// Two keyframes with no real map points; a few placeholder points over
// keypoints 0..9 make them covisible.
struct PlanePair {
  CameraModel cam = default_synthetic_camera();
  SyntheticSurface surface{textured_plane(3)};
  WorldMap map;
  KeyFrameId a = 0, b = 0;
  double depth = 60.0;
};

void link_placeholders(WorldMap& map, KeyFrameId a, KeyFrameId b, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    MapPoint mp;
    mp.position = map.keyframe(a).pose.inverse().transform(Vec3(0, 0, 1));
    mp.observations = {{a, j}, {b, j}};
    map.insert_point(std::move(mp));
  }
}

PlanePair make_plane_pair(const Vec3& offset_b) {
  PlanePair p;
  const Vec3 eye(1.0, 2.0, p.depth);
  const Frame fa = render_frame(p.surface, overhead_pose(eye, Vec3(1.0, 2.0, 0.0)), p.cam, 0);
  const Frame fb = render_frame(p.surface, overhead_pose(eye + offset_b, Vec3(1.0, 2.0, 0.0) + offset_b),
                                p.cam, 1);
  p.a = add_keyframe_with_points(p.map, fa, p.surface, p.cam, 0);
  p.b = add_keyframe_with_points(p.map, fb, p.surface, p.cam, 0);
  link_placeholders(p.map, p.a, p.b, 10);
  p.map.keyframe(p.a).median_depth = p.depth;
  p.map.keyframe(p.b).median_depth = p.depth;
  return p;
}

KeyFrame bare_keyframe(const Pose& pose, GrayImage image) {
  KeyFrame kf;
  kf.pose = pose;
  kf.pyramid = std::make_shared<ImagePyramid>(std::move(image), 1, 1.2);
  return kf;
}

}  // namespace

TEST_CASE("select_neighbors") {
  WorldMap map;
  const CameraModel cam = pinhole_camera();
  auto add = [&](const Vec3& c) {
    KeyFrame kf;
    kf.pose = Pose::from_center(Mat3::Identity(), c);
    kf.median_depth = 2.0;
    for (int i = 0; i < 50; ++i) kf.add_keypoint(Keypoint{}, Descriptor256{}, Vec2::Zero(), false);
    return map.insert_keyframe(std::move(kf));
  };
  const KeyFrameId c = add(Vec3::Zero());
  SUBCASE("single neighbour above the baseline ratio") {
    const KeyFrameId n = add(Vec3(0.1, 0, 0));  // ratio 0.05
    link_placeholders(map, c, n, 5);
    CHECK(select_neighbors(map, c) == std::vector<KeyFrameId>{n});
  }
  SUBCASE("short baseline is excluded") {
    const KeyFrameId n = add(Vec3(0.01, 0, 0));  // ratio 0.005
    link_placeholders(map, c, n, 5);
    CHECK(select_neighbors(map, c).empty());
  }
  SUBCASE("top four by weight, ties by id") {
    std::vector<KeyFrameId> ids;
    const int weights[6] = {3, 7, 5, 7, 2, 5};
    for (int k = 0; k < 6; ++k) {
      ids.push_back(add(Vec3(0.2 * (k + 1), 0, 0)));
      for (int j = 0; j < weights[k]; ++j) {
        MapPoint mp;
        mp.observations = {{c, static_cast<std::size_t>(8 * k + j)}, {ids.back(), static_cast<std::size_t>(j)}};
        map.insert_point(std::move(mp));
      }
    }
    CHECK(select_neighbors(map, c) == std::vector<KeyFrameId>{ids[1], ids[3], ids[2], ids[5]});
  }
}

TEST_CASE("densify recovers unmatched features on a textured plane") {
  PlanePair p = make_plane_pair(Vec3(3.0, 0.0, 0.0));
  const KeyFrame& ka = p.map.keyframe(p.a);
  const KeyFrame& kb = p.map.keyframe(p.b);
  // Features whose surface point is in view of the neighbour.
  std::map<std::size_t, Point3> truth;
  for (std::size_t i = 10; i < ka.size(); ++i) {
    const auto x = surface_point(p.surface, ka.pose, p.cam, ka.keypoints[i].position);
    if (x && project(*x, kb.pose, p.cam, -8.0)) truth[i] = *x;
  }
  REQUIRE(truth.size() > 300);
  const std::vector<PointId> before_ids = [&] {
    std::vector<PointId> v;
    for (const auto& [id, mp] : p.map.points()) v.push_back(id);
    return v;
  }();

  WorldMap copy = p.map;
  DensifyStats stats;
  const auto created = densify_keyframe(p.map, p.a, p.cam, {}, &stats);
  std::size_t recovered = 0;
  for (PointId pid : created) {
    const MapPoint& mp = p.map.point(pid);
    CHECK(mp.provenance == Provenance::kDensified);
    CHECK(mp.anchor_keyframe == p.a);
    const std::size_t i = mp.observations.at(p.a);
    const auto it = truth.find(i);
    if (it != truth.end() && (mp.position - it->second).norm() <= 0.01 * p.depth) ++recovered;
  }
  MESSAGE("densified ", created.size(), " of ", truth.size(), ", recovered ", recovered);
  CHECK(recovered >= 0.8 * truth.size());
  CHECK(p.map.audit().empty());

  // Every new point passes the four gates when checked again.
  const double med = ka.median_depth;
  for (PointId pid : created) {
    const MapPoint& mp = p.map.point(pid);
    for (const auto& [kid, idx] : mp.observations) {
      const KeyFrame& kf = p.map.keyframe(kid);
      const Vec3 pc = kf.pose.transform(mp.position);
      CHECK(pc.z() > 0.0);
      const double e2 = *reprojection_error2(mp.position, kf.pose, p.cam, kf.keypoints[idx].position) /
                        std::pow(1.2, 2 * kf.keypoints[idx].level);
      CHECK(e2 <= 0.5991);
    }
    const double z = ka.pose.transform(mp.position).z();
    CHECK(z >= med / 2.5);
    CHECK(z <= med * 2.5);
  }
  // Existing points are untouched.
  for (PointId pid : before_ids) {
    REQUIRE(p.map.has_point(pid));
    CHECK(p.map.point(pid).position == copy.point(pid).position);
    CHECK(p.map.point(pid).observations == copy.point(pid).observations);
  }
  // Identical inputs give identical point sets.
  const auto again = densify_keyframe(copy, p.a, p.cam);
  REQUIRE(again.size() == created.size());
  for (std::size_t k = 0; k < created.size(); ++k)
    CHECK(copy.point(again[k]).position == p.map.point(created[k]).position);
}

TEST_CASE("densify: median depth gate") {
  PlanePair p = make_plane_pair(Vec3(3.0, 0.0, 0.0));
  // Pretend the scene is five times closer than the plane.
  p.map.keyframe(p.a).median_depth = p.depth / 5.0;
  const KeyFrame& ka = p.map.keyframe(p.a);
  const KeyFrame& kb = p.map.keyframe(p.b);
  DensifyOptions wide;
  wide.max_depth_factor = 6.0;
  int gated = 0, found = 0, tried = 0, outside = 0;
  for (std::size_t i = 10; i < ka.size() && tried < 60; ++i) {
    const auto x = surface_point(p.surface, ka.pose, p.cam, ka.keypoints[i].position);
    if (!x || !project(*x, kb.pose, p.cam, -8.0)) continue;
    ++tried;
    // The default search band stops at three times the median.
    if (densify_candidate(ka, i, kb, p.cam, 1.2).reject != DensifyReject::kNone) ++outside;
    const DensifyCandidate c = densify_candidate(ka, i, kb, p.cam, 1.2, wide);
    if (c.reject == DensifyReject::kMedianDepth) {
      ++gated;
      if ((c.position - *x).norm() <= 0.01 * p.depth) ++found;
    }
    CHECK(c.reject != DensifyReject::kNone);
  }
  CHECK(outside >= 0.8 * tried);
  CHECK(gated >= 0.8 * tried);
  CHECK(found >= 0.8 * gated);
}

TEST_CASE("densify: repeated stripes are ambiguous") {
  const CameraModel cam = pinhole_camera();
  // Vertical stripes; a horizontal baseline makes the epipolar line run
  // across them.
  auto stripes = [&](double phase) {
    GrayImage img(cam.width, cam.height);
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        img(x, y) = static_cast<std::uint8_t>(
            128.0 + 70.0 * std::sin(2.0 * 3.141592653589793 * (x + phase) / 9.0) +
            10.0 * std::sin(y * 0.7));
    return img;
  };
  const double depth = 2.0;
  KeyFrame a = bare_keyframe(Pose(), stripes(0.0));
  // A fronto-parallel plane at depth 2 seen after a 0.1 shift moves the
  // image by fx * 0.05 pixels.
  const Pose pose_b = Pose::from_center(Mat3::Identity(), Vec3(0.1, 0.0, 0.0));
  KeyFrame b = bare_keyframe(pose_b, stripes(cam.fx * 0.1 / depth));
  a.median_depth = depth;
  b.median_depth = depth;
  const Pixel px(cam.cx + 3.3, cam.cy - 20.0);
  Keypoint kp;
  kp.position = px;
  a.add_keypoint(kp, Descriptor256{}, *cam.pixel_to_normalized(px), false);
  const DensifyCandidate c = densify_candidate(a, 0, b, cam, 1.2);
  CHECK(c.reject == DensifyReject::kAmbiguous);
}
