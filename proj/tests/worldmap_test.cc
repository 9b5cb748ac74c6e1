#include <cmath>
#include <numbers>

#include "doctest.h"
#include "endoslam/geometry/camera.h"
#include "endoslam/map/world_map.h"
#include "endoslam/util/error.h"
#include "test_support.h"

using namespace endoslam;

namespace {

KeyFrame blank_keyframe(std::size_t n, const Pose& pose = Pose()) {
  KeyFrame kf;
  kf.pose = pose;
  for (std::size_t i = 0; i < n; ++i) {
    Keypoint kp;
    kp.position = Pixel(10.0 + i, 20.0);
    kf.add_keypoint(kp, Descriptor256{}, Vec2::Zero(), false);
  }
  return kf;
}

MapPoint point_seen_by(std::initializer_list<std::pair<KeyFrameId, std::size_t>> obs) {
  MapPoint mp;
  for (const auto& [k, i] : obs) mp.observations[k] = i;
  return mp;
}

// Two keyframes looking down +z from (-b, 0, 0) and (b, 0, 0), with one
// point on the z axis at depth d observed exactly by both.
struct StereoFixture {
  WorldMap map{8, 1.2};
  CameraModel cam = test::pinhole_camera();
  KeyFrameId a = 0, b = 0;
  PointId pid = 0;

  StereoFixture(double parallax_deg, double pixel_offset = 0.0, int level = 0) {
    const double d = 10.0;
    const double half = d * std::tan(parallax_deg * std::numbers::pi / 360.0);
    const Point3 x(0, 0, d);
    const Pose pa = Pose::from_center(Mat3::Identity(), Vec3(-half, 0, 0));
    const Pose pb = Pose::from_center(Mat3::Identity(), Vec3(half, 0, 0));
    KeyFrame ka = blank_keyframe(1, pa), kb = blank_keyframe(1, pb);
    ka.keypoints[0].position = *project(x, pa, cam);
    kb.keypoints[0].position = *project(x, pb, cam) + Pixel(pixel_offset, 0);
    ka.keypoints[0].level = kb.keypoints[0].level = level;
    a = map.insert_keyframe(ka);
    b = map.insert_keyframe(kb);
    MapPoint mp = point_seen_by({{a, 0}, {b, 0}});
    mp.position = x;
    mp.created_frame = 100;
    pid = map.insert_point(mp);
  }
};

}  // namespace

TEST_CASE("covisibility: shared points give the weight, removal decrements it") {
  WorldMap map;
  const KeyFrameId a = map.insert_keyframe(blank_keyframe(10));
  const KeyFrameId b = map.insert_keyframe(blank_keyframe(10));
  std::vector<PointId> ids;
  for (std::size_t i = 0; i < 10; ++i) ids.push_back(map.insert_point(point_seen_by({{a, i}, {b, i}})));
  CHECK(map.covisibility_weight(a, b) == 10);
  CHECK(map.covisibility_weight(b, a) == 10);
  map.remove_point(ids[3]);
  CHECK(map.covisibility_weight(a, b) == 9);
  CHECK(map.covisibility_weight(b, a) == 9);
  CHECK(map.keyframe(a).point_of[3] == kNoPoint);
  CHECK(map.audit().empty());
}

TEST_CASE("covisible: ordering, tie-break and truncation") {
  WorldMap map;
  const KeyFrameId a = map.insert_keyframe(blank_keyframe(30));
  const KeyFrameId b = map.insert_keyframe(blank_keyframe(30));
  const KeyFrameId c = map.insert_keyframe(blank_keyframe(30));
  const KeyFrameId d = map.insert_keyframe(blank_keyframe(30));
  const KeyFrameId lone = map.insert_keyframe(blank_keyframe(1));
  std::size_t slot = 0;
  for (auto [other, n] : {std::pair{d, 3}, std::pair{c, 10}, std::pair{b, 10}})
    for (int i = 0; i < n; ++i, ++slot)
      map.insert_point(point_seen_by({{a, slot}, {other, slot}}));

  CHECK(map.covisible(lone, 5).empty());
  CHECK(map.covisible(a, 2) == std::vector<KeyFrameId>{b, c});
  CHECK(map.covisible(a, 10) == std::vector<KeyFrameId>{b, c, d});
  CHECK_THROWS_AS(map.covisible(999, 1), Error);
}

TEST_CASE("dangling references are rejected") {
  WorldMap map;
  const KeyFrameId a = map.insert_keyframe(blank_keyframe(2));
  CHECK_THROWS_AS(map.insert_point(point_seen_by({{a, 0}, {42, 0}})), Error);
  CHECK_THROWS_AS(map.insert_point(point_seen_by({{a, 7}})), Error);
  KeyFrame bad = blank_keyframe(1);
  bad.point_of[0] = 1234;
  CHECK_THROWS_AS(map.insert_keyframe(bad), Error);
  CHECK_THROWS_AS(map.remove_point(5), Error);
  CHECK_THROWS_AS(map.remove_keyframe(5), Error);
  // Rejected inserts leave no trace.
  CHECK(map.num_points() == 0);
  CHECK(map.audit().empty());
  const PointId p = map.insert_point(point_seen_by({{a, 0}}));
  CHECK_THROWS_AS(map.insert_point(point_seen_by({{a, 0}})), Error);
  CHECK_THROWS_AS(map.add_observation(p, a, 1), Error);
}

TEST_CASE("covisibility: incremental graph equals a rebuild after random mutations") {
  Rng rng(7);
  WorldMap map;
  std::vector<KeyFrameId> kfs;
  for (int i = 0; i < 4; ++i) kfs.push_back(map.insert_keyframe(blank_keyframe(40)));

  const auto free_slots = [&](KeyFrameId k) {
    std::vector<std::size_t> out;
    const KeyFrame& kf = map.keyframe(k);
    for (std::size_t i = 0; i < kf.size(); ++i)
      if (kf.point_of[i] == kNoPoint) out.push_back(i);
    return out;
  };
  const auto random_point = [&]() -> std::optional<PointId> {
    if (map.num_points() == 0) return std::nullopt;
    auto it = map.points().begin();
    std::advance(it, static_cast<long>(rng.index(map.num_points())));
    return it->first;
  };

  for (int step = 0; step < 1000; ++step) {
    const std::size_t op = rng.index(7);
    if (kfs.empty() || op == 0) {
      kfs.push_back(map.insert_keyframe(blank_keyframe(40)));
    } else if (op == 1 || op == 2) {
      MapPoint mp;
      for (KeyFrameId k : kfs) {
        if (rng.uniform() < 0.5) continue;
        const auto slots = free_slots(k);
        if (!slots.empty()) mp.observations[k] = slots[rng.index(slots.size())];
      }
      map.insert_point(mp);
    } else if (op == 3) {
      if (auto p = random_point()) map.remove_point(*p);
    } else if (op == 4 && kfs.size() > 2 && rng.uniform() < 0.3) {
      const std::size_t i = rng.index(kfs.size());
      map.remove_keyframe(kfs[i]);
      kfs.erase(kfs.begin() + static_cast<long>(i));
    } else if (op == 5) {
      auto p = random_point();
      if (!p) continue;
      const KeyFrameId k = kfs[rng.index(kfs.size())];
      if (map.point(*p).observations.count(k)) {
        map.remove_observation(*p, k);
      } else {
        const auto slots = free_slots(k);
        if (!slots.empty()) map.add_observation(*p, k, slots[rng.index(slots.size())]);
      }
    } else if (op == 6) {
      auto p = random_point(), q = random_point();
      if (p && q) map.merge_points(*p, *q);
    }
    if (step % 50 == 0) REQUIRE(map.audit().empty());
  }
  CHECK(map.audit().empty());
  CHECK(map.covisibility() == map.rebuild_covisibility());
  for (const auto& [k, row] : map.covisibility())
    for (const auto& [o, w] : row) CHECK(map.covisibility_weight(o, k) == w);
}

TEST_CASE("remove_keyframe drops points left with a single observation") {
  WorldMap map;
  const KeyFrameId a = map.insert_keyframe(blank_keyframe(3));
  const KeyFrameId b = map.insert_keyframe(blank_keyframe(3));
  const KeyFrameId c = map.insert_keyframe(blank_keyframe(3));
  const PointId two = map.insert_point(point_seen_by({{a, 0}, {b, 0}}));
  const PointId three = map.insert_point(point_seen_by({{a, 1}, {b, 1}, {c, 1}}));
  map.remove_keyframe(b);
  CHECK_FALSE(map.has_point(two));
  CHECK(map.has_point(three));
  CHECK(map.point(three).observations.size() == 2);
  CHECK(map.covisibility_weight(a, c) == 1);
  CHECK(map.audit().empty());
}

TEST_CASE("cull_points: parallax rule") {
  SUBCASE("1 degree is culled") {
    StereoFixture f(1.0);
    CHECK(f.map.point_parallax_deg(f.pid) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(f.map.cull_points({}, f.cam, 101) == std::vector<PointId>{f.pid});
  }
  SUBCASE("just below the threshold is culled") {
    StereoFixture f(1.4034);
    CHECK(f.map.cull_points({}, f.cam, 101).size() == 1);
  }
  SUBCASE("just above the threshold survives") {
    StereoFixture f(1.4036);
    CHECK(f.map.cull_points({}, f.cam, 101).empty());
  }
}

TEST_CASE("cull_points: found ratio rule") {
  StereoFixture f(3.0);
  f.map.point(f.pid).visible_count = 10;
  f.map.point(f.pid).found_count = 1;
  CHECK(f.map.cull_points({}, f.cam, 101).size() == 1);

  StereoFixture g(3.0);
  g.map.point(g.pid).visible_count = 10;
  g.map.point(g.pid).found_count = 9;
  CHECK(g.map.cull_points({}, g.cam, 101).empty());
}

TEST_CASE("cull_points: reprojection rule scales with the pyramid level") {
  {
    // 0.3 normalized squared error in one view, ratio 0.9, parallax 3 deg.
    StereoFixture f(3.0, std::sqrt(0.3));
    f.map.point(f.pid).visible_count = 10;
    f.map.point(f.pid).found_count = 9;
    CHECK(f.map.point_max_normalized_error2(f.pid, f.cam) == doctest::Approx(0.3));
    CHECK(f.map.cull_points({}, f.cam, 101).empty());
  }
  {
    StereoFixture f(3.0, 1.0);
    CHECK(f.map.cull_points({}, f.cam, 101).size() == 1);
  }
  {
    // One pixel at level 2 normalizes to 1 / 1.2^4 = 0.482.
    StereoFixture f(3.0, 1.0, 2);
    CHECK(f.map.point_max_normalized_error2(f.pid, f.cam) ==
          doctest::Approx(1.0 / std::pow(1.2, 4)));
    CHECK(f.map.cull_points({}, f.cam, 101).empty());
  }
}

TEST_CASE("cull_points: rules apply only during the provisional window") {
  StereoFixture f(1.0);
  CHECK(f.map.cull_points({}, f.cam, 126).empty());
  CHECK(f.map.cull_points({}, f.cam, 125).size() == 1);
}

TEST_CASE("cull_points is idempotent") {
  Rng rng(11);
  const CameraModel cam = test::pinhole_camera();
  WorldMap map(8, 1.2);
  std::vector<KeyFrameId> kfs;
  std::vector<Pose> poses;
  for (int i = 0; i < 5; ++i) {
    poses.push_back(Pose::from_center(Mat3::Identity(), Vec3(0.3 * i, 0, 0)));
    kfs.push_back(map.insert_keyframe(blank_keyframe(200, poses.back())));
  }
  for (std::size_t j = 0; j < 200; ++j) {
    const Point3 x = test::random_visible_point(rng, poses[2], cam, 2.0, 40.0, 60.0);
    MapPoint mp;
    mp.position = x;
    mp.created_frame = rng.index(30);
    mp.visible_count = 1 + static_cast<int>(rng.index(10));
    mp.found_count = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(mp.visible_count)));
    for (std::size_t k = 0; k < kfs.size(); ++k) {
      if (rng.uniform() < 0.5) continue;
      KeyFrame& kf = map.keyframe(kfs[k]);
      const auto px = project(x, poses[k], cam);
      if (!px) continue;
      kf.keypoints[j].position = *px + Pixel(rng.normal(0, 0.6), rng.normal(0, 0.6));
      mp.observations[kfs[k]] = j;
    }
    map.insert_point(mp);
  }
  const auto first = map.cull_points({}, cam, 30);
  CHECK_FALSE(first.empty());
  CHECK(map.cull_points({}, cam, 30).empty());
  CHECK(map.audit().empty());
}

namespace {

// Keyframe 1 holds 100 points; `redundant` of them are also observed by
// keyframes 0, 2 and 3, the rest only by keyframe 2. Keyframes 3 and 4 are
// the newest.
WorldMap redundancy_map(int redundant, int observer_level = 0) {
  WorldMap map;
  std::vector<KeyFrameId> k;
  for (int i = 0; i < 5; ++i) k.push_back(map.insert_keyframe(blank_keyframe(100)));
  for (KeyFrameId id : k)
    for (auto& kp : map.keyframe(id).keypoints) kp.level = observer_level;
  for (auto& kp : map.keyframe(k[1]).keypoints) kp.level = 1;
  for (std::size_t i = 0; i < 100; ++i) {
    if (static_cast<int>(i) < redundant)
      map.insert_point(point_seen_by({{k[0], i}, {k[1], i}, {k[2], i}, {k[3], i}}));
    else
      map.insert_point(point_seen_by({{k[1], i}, {k[2], i}}));
  }
  return map;
}

}  // namespace

TEST_CASE("cull_keyframes: 90 percent redundancy rule") {
  {
    WorldMap map = redundancy_map(91);
    const auto removed = map.cull_keyframes({});
    CHECK(std::count(removed.begin(), removed.end(), 1u) == 1);
    CHECK_FALSE(map.has_keyframe(1));
    CHECK(map.audit().empty());
  }
  {
    WorldMap map = redundancy_map(89);
    const auto removed = map.cull_keyframes({});
    CHECK(map.has_keyframe(1));
    CHECK(removed.empty());
  }
  {
    // Observers at a coarser level than keyframe 1 do not count.
    WorldMap map = redundancy_map(100, 2);
    map.cull_keyframes({});
    CHECK(map.has_keyframe(1));
  }
}

TEST_CASE("cull_keyframes: the newest keyframes are kept even when redundant") {
  WorldMap map;
  std::vector<KeyFrameId> k;
  for (int i = 0; i < 6; ++i) k.push_back(map.insert_keyframe(blank_keyframe(20)));
  for (std::size_t i = 0; i < 20; ++i)
    map.insert_point(point_seen_by(
        {{k[0], i}, {k[1], i}, {k[2], i}, {k[3], i}, {k[4], i}, {k[5], i}}));
  map.cull_keyframes({});
  CHECK(map.has_keyframe(k[0]));
  CHECK(map.has_keyframe(k[4]));
  CHECK(map.has_keyframe(k[5]));
  CHECK(map.audit().empty());
}

TEST_CASE("representative descriptor minimizes the median distance") {
  WorldMap map;
  Descriptor256 d0, d1, d2;
  for (int i = 0; i < 10; ++i) d1.set_bit(i);
  for (int i = 0; i < 12; ++i) d2.set_bit(100 + i);
  std::vector<KeyFrameId> k;
  for (const auto& d : {d0, d1, d2}) {
    KeyFrame kf = blank_keyframe(1);
    kf.descriptors[0] = d;
    k.push_back(map.insert_keyframe(kf));
  }
  const PointId p = map.insert_point(point_seen_by({{k[0], 0}, {k[1], 0}, {k[2], 0}}));
  map.update_point_descriptor(p);
  // Medians: d0 -> 10, d1 -> 10, d2 -> 12 (lower median); d0 wins the tie.
  CHECK(map.point(p).descriptor == d0);
}

TEST_CASE("map export round trip") {
  Rng rng(3);
  WorldMap map;
  for (int i = 0; i < 3; ++i) {
    KeyFrame kf = blank_keyframe(5, test::random_pose(rng, 1.0, 2.0));
    kf.timestamp = 0.1 * i + 1e-7;
    map.insert_keyframe(kf);
  }
  for (std::size_t i = 0; i < 5; ++i) {
    MapPoint mp = point_seen_by({{0, i}, {1, i}});
    mp.position = Point3(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1));
    mp.provenance = i % 2 ? Provenance::kDensified : Provenance::kOrbTriangulated;
    map.insert_point(mp);
  }
  const std::string text = format_map_export(map);
  CHECK(text.rfind("endoslam-map 1\npoints 5 keyframes 3\n", 0) == 0);
  const MapExport back = parse_map_export(text);
  REQUIRE(back.points.size() == 5);
  REQUIRE(back.keyframes.size() == 3);
  for (const auto& p : back.points) {
    const MapPoint& mp = map.point(p.id);
    CHECK((p.position - mp.position).norm() == 0.0);
    CHECK(p.provenance == mp.provenance);
    CHECK(p.n_observations == 2);
  }
  for (const auto& k : back.keyframes) {
    const KeyFrame& kf = map.keyframe(k.id);
    CHECK((k.pose.rotation - kf.pose.rotation).norm() < 1e-12);
    CHECK((k.pose.translation - kf.pose.translation).norm() < 1e-12);
    CHECK(k.timestamp == kf.timestamp);
  }
  CHECK_THROWS_AS(parse_map_export("endoslam-map 2\n"), Error);
  CHECK_THROWS_AS(parse_map_export("endoslam-map 1\npoints 1 keyframes 0\n"), Error);
  CHECK_THROWS_AS(parse_map_export("endoslam-map 1\npoints 1 keyframes 0\nP 0 1 2 x O 2\n"), Error);
}
