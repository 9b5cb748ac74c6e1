#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "endoslam/geometry/triangulation.h"
#include "endoslam/mapping/bundle_adjustment.h"
#include "endoslam/mapping/local_mapping.h"
#include "test_support.h"

using namespace endoslam;
using namespace endoslam::test;

namespace {

struct BaFixture {
  CameraModel cam = distorted_camera();
  BaProblem truth;
  BaProblem problem;
};

// Cameras spread around a cloud 2-4 units ahead; every point is observed
// by each camera it projects into.
BaFixture make_ba(std::uint64_t seed, int n_poses, int n_points, double pixel_noise = 0.0,
                  int max_level = 3) {
  BaFixture f;
  Rng rng(seed);
  const Pose base;
  for (int j = 0; j < n_points; ++j)
    f.truth.points.push_back(random_visible_point(rng, base, f.cam, 2.0, 4.0, 60.0));
  for (int i = 0; i < n_poses; ++i) {
    Pose p = i == 0 ? base : random_pose(rng, 0.05, 0.3);
    f.truth.poses.push_back(p);
    f.truth.pose_fixed.push_back(i == 0);
  }
  for (std::size_t i = 0; i < f.truth.poses.size(); ++i)
    for (std::size_t j = 0; j < f.truth.points.size(); ++j) {
      const auto px = project(f.truth.points[j], f.truth.poses[i], f.cam, 1e3);
      if (!px) continue;
      f.truth.observations.push_back({i, j, *px, static_cast<int>(rng.index(max_level + 1))});
    }
  f.problem = f.truth;
  for (auto& o : f.problem.observations)
    o.pixel += Vec2(rng.normal(0.0, pixel_noise), rng.normal(0.0, pixel_noise));
  return f;
}

void perturb(BaProblem& p, std::uint64_t seed, double angle, double shift, double point_shift) {
  Rng rng(seed);
  for (std::size_t i = 0; i < p.poses.size(); ++i) {
    if (p.pose_fixed[i]) continue;
    Vec6 d;
    for (int k = 0; k < 3; ++k) d[k] = rng.normal(0.0, angle);
    for (int k = 3; k < 6; ++k) d[k] = rng.normal(0.0, shift);
    p.poses[i] = p.poses[i].retract(d);
  }
  for (auto& x : p.points) x += Vec3(rng.normal(), rng.normal(), rng.normal()) * point_shift;
}

double mean_pixel_error(const BaProblem& p, const std::vector<Pose>& poses,
                        const std::vector<Point3>& points, const CameraModel& cam) {
  double sum = 0.0;
  for (const auto& o : p.observations)
    sum += (*project(points[o.point], poses[o.pose], cam, 1e3) - o.pixel).norm();
  return sum / static_cast<double>(p.observations.size());
}

Descriptor256 random_descriptor(Rng& rng) {
  Descriptor256 d;
  for (auto& w : d.words) w = rng.next_u64();
  return d;
}

KeyFrame synthetic_keyframe(const Pose& pose, const std::vector<Point3>& points,
                            const std::vector<Descriptor256>& descriptors, const CameraModel& cam,
                            std::uint64_t frame_id) {
  KeyFrame kf;
  kf.pose = pose;
  kf.frame_id = frame_id;
  for (std::size_t j = 0; j < points.size(); ++j) {
    const auto px = project(points[j], pose, cam, 1e3);
    REQUIRE(px);
    Keypoint kp;
    kp.position = *px;
    kf.add_keypoint(kp, descriptors[j], *cam.pixel_to_normalized(*px), false);
  }
  return kf;
}

}  // namespace

TEST_CASE("bundle adjustment: ground truth is a fixed point") {
  const BaFixture f = make_ba(1, 4, 60);
  const BaResult r = bundle_adjust(f.problem, f.cam);
  CHECK(r.diagnostic.empty());
  CHECK(r.initial_cost < 1e-18);
  for (std::size_t i = 0; i < f.truth.poses.size(); ++i) {
    CHECK((r.poses[i].rotation - f.truth.poses[i].rotation).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((r.poses[i].translation - f.truth.poses[i].translation).cwiseAbs().maxCoeff() <= 1e-10);
  }
  for (std::size_t j = 0; j < f.truth.points.size(); ++j)
    CHECK((r.points[j] - f.truth.points[j]).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(std::none_of(r.outlier.begin(), r.outlier.end(), [](bool b) { return b; }));
}

TEST_CASE("bundle adjustment: gradient matches central differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    BaFixture f = make_ba(seed, 3, 30, 1.0);
    perturb(f.problem, seed + 100, 0.01, 0.02, 0.02);
    BaOptions o;
    const Eigen::VectorXd g = ba_gradient(f.problem, f.cam, o);
    Eigen::VectorXd fd(g.size());
    const double h = 1e-6;
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < f.problem.poses.size(); ++i) {
      if (f.problem.pose_fixed[i]) continue;
      for (int c = 0; c < 6; ++c, ++k) {
        BaProblem plus = f.problem, minus = f.problem;
        Vec6 d = Vec6::Zero();
        d[c] = h;
        plus.poses[i] = f.problem.poses[i].retract(d);
        minus.poses[i] = f.problem.poses[i].retract(-d);
        fd[k] = (ba_cost(plus, f.cam, o) - ba_cost(minus, f.cam, o)) / (2 * h);
      }
    }
    for (std::size_t j = 0; j < f.problem.points.size(); ++j)
      for (int c = 0; c < 3; ++c, ++k) {
        BaProblem plus = f.problem, minus = f.problem;
        plus.points[j][c] += h;
        minus.points[j][c] -= h;
        fd[k] = (ba_cost(plus, f.cam, o) - ba_cost(minus, f.cam, o)) / (2 * h);
      }
    REQUIRE(k == g.size());
    CHECK((g - fd).norm() / g.norm() <= 1e-6);
  }
}

TEST_CASE("bundle adjustment: reduced system equals the dense solve") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    BaFixture f = make_ba(seed, 4, 40, 1.0);
    f.problem.pose_fixed[1] = true;
    perturb(f.problem, seed + 7, 0.01, 0.02, 0.05);
    BaOptions sparse, dense;
    dense.dense_solver = true;
    const BaResult a = bundle_adjust(f.problem, f.cam, sparse);
    const BaResult b = bundle_adjust(f.problem, f.cam, dense);
    REQUIRE(a.iterations == b.iterations);
    for (std::size_t i = 0; i < a.poses.size(); ++i) {
      CHECK((a.poses[i].rotation - b.poses[i].rotation).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK((a.poses[i].translation - b.poses[i].translation).cwiseAbs().maxCoeff() <= 1e-8);
    }
    for (std::size_t j = 0; j < a.points.size(); ++j)
      CHECK((a.points[j] - b.points[j]).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("bundle adjustment: unit pixel noise") {
  BaFixture f = make_ba(11, 6, 120, 1.0, 0);
  f.problem.pose_fixed[1] = true;
  perturb(f.problem, 12, 0.005, 0.01, 0.03);
  const BaResult r = bundle_adjust(f.problem, f.cam);
  CHECK(r.diagnostic.empty());
  CHECK(mean_pixel_error(f.problem, r.poses, r.points, f.cam) <= 1.2);
  // Independent full-batch reference run to convergence.
  BaOptions dense;
  dense.dense_solver = true;
  dense.max_iterations = 500;
  const BaResult reference = bundle_adjust(f.problem, f.cam, dense);
  CHECK(r.final_cost <= 1.001 * reference.final_cost);
  BaOptions sparse = dense;
  sparse.dense_solver = false;
  const BaResult converged = bundle_adjust(f.problem, f.cam, sparse);
  for (std::size_t j = 0; j < r.points.size(); ++j) {
    CHECK((converged.points[j] - reference.points[j]).norm() <= 1e-6);
    CHECK((r.points[j] - reference.points[j]).norm() <= 0.01);
  }
  BaProblem solved = f.problem;
  solved.poses = reference.poses;
  solved.points = reference.points;
  CHECK(ba_gradient(solved, f.cam, {}).norm() <= 0.05);
}

TEST_CASE("bundle adjustment: cost never increases and the gauge is untouched") {
  BaFixture f = make_ba(21, 5, 80, 1.0);
  perturb(f.problem, 22, 0.02, 0.05, 0.05);
  const BaResult r = bundle_adjust(f.problem, f.cam);
  REQUIRE(!r.cost_history.empty());
  CHECK(r.cost_history.front() < r.initial_cost);
  for (std::size_t k = 1; k < r.cost_history.size(); ++k)
    CHECK(r.cost_history[k] <= r.cost_history[k - 1]);
  CHECK(r.final_cost == r.cost_history.back());
  CHECK(r.poses[0].rotation == f.problem.poses[0].rotation);
  CHECK(r.poses[0].translation == f.problem.poses[0].translation);
}

TEST_CASE("bundle adjustment: injected outliers are flagged") {
  BaFixture f = make_ba(31, 6, 100, 0.2, 0);
  f.problem.pose_fixed[1] = true;
  Rng rng(32);
  std::vector<bool> injected(f.problem.observations.size(), false);
  for (std::size_t k = 0; k < injected.size(); ++k) {
    if (rng.uniform() >= 0.1) continue;
    const double a = rng.uniform(0.0, 2.0 * 3.141592653589793);
    f.problem.observations[k].pixel += rng.uniform(8.0, 40.0) * Vec2(std::cos(a), std::sin(a));
    injected[k] = true;
  }
  const BaResult r = bundle_adjust(f.problem, f.cam);
  int n = 0, caught = 0, false_alarm = 0;
  for (std::size_t k = 0; k < injected.size(); ++k) {
    if (injected[k]) {
      ++n;
      caught += r.outlier[k];
    } else {
      false_alarm += r.outlier[k];
    }
  }
  REQUIRE(n > 20);
  CHECK(caught >= 0.9 * n);
  CHECK(false_alarm <= 0.1 * static_cast<double>(injected.size() - n));
}

TEST_CASE("bundle adjustment: rank-deficient problems are a no-op") {
  BaFixture f = make_ba(41, 1, 20);
  const BaResult r = bundle_adjust(f.problem, f.cam);
  CHECK(!r.diagnostic.empty());
  CHECK(r.iterations == 0);
  CHECK(r.points == f.problem.points);
}

TEST_CASE("keyframe policy") {
  KeyframeDecisionInput in;
  in.frames_since_keyframe = 1;
  in.reference_points = 200;
  in.tracked_reference_points = 200;
  in.inliers = 200;
  CHECK_FALSE(need_keyframe(in));
  in.tracked_reference_points = 170;
  in.inliers = 60;
  CHECK(need_keyframe(in));
  in.mapper_idle = false;
  CHECK_FALSE(need_keyframe(in));
  in.mapper_idle = true;
  in.inliers = 49;
  CHECK_FALSE(need_keyframe(in));
  in.inliers = 60;
  in.tracked_reference_points = 190;
  CHECK_FALSE(need_keyframe(in));
  in.frames_since_keyframe = 25;
  CHECK(need_keyframe(in));
}

TEST_CASE("triangulation gates") {
  const CameraModel cam = pinhole_camera();
  Rng rng(5);
  const Pose a;
  const Point3 x(0.1, -0.05, 2.0);
  const Descriptor256 d = random_descriptor(rng);
  // 1.0 degree of parallax at depth 2.
  const double b10 = 2.0 * 2.0 * std::tan(0.5 * 1.0 * 3.141592653589793 / 180.0);
  const Pose low = Pose::from_center(Mat3::Identity(), Vec3(b10, 0, 0));
  const KeyFrame ka = synthetic_keyframe(a, {x}, {d}, cam, 0);
  const KeyFrame kl = synthetic_keyframe(low, {x}, {d}, cam, 1);
  CHECK_FALSE(triangulate_checked(ka, 0, kl, 0, cam, 1.2, 1.4035, 0.5991));
  CHECK(triangulate_checked(ka, 0, kl, 0, cam, 1.2, 0.9, 0.5991));

  const Pose wide = Pose::from_center(Mat3::Identity(), Vec3(0.2, 0, 0));
  const KeyFrame kw = synthetic_keyframe(wide, {x}, {d}, cam, 1);
  const auto ok = triangulate_checked(ka, 0, kw, 0, cam, 1.2, 1.4035, 0.5991);
  REQUIRE(ok);
  CHECK((*ok - x).norm() <= 1e-9);

  // Mirror the observation so the rays meet behind both cameras.
  KeyFrame kb = kw;
  const Vec2 xn = kw.normalized[0];
  const Vec2 xa = ka.normalized[0];
  kb.normalized[0] = xa + (xa - xn);
  kb.keypoints[0].position = cam.normalized_to_pixel(kb.normalized[0]);
  CHECK_FALSE(triangulate_checked(ka, 0, kb, 0, cam, 1.2, 0.0, 1e9));

  // A two pixel offset exceeds the gate at level 0 but not at level 3.
  KeyFrame kn = kw;
  kn.keypoints[0].position.y() += 2.0;
  kn.normalized[0] = *cam.pixel_to_normalized(kn.keypoints[0].position);
  CHECK_FALSE(triangulate_checked(ka, 0, kn, 0, cam, 1.2, 1.4035, 0.5991));
  kn.keypoints[0].level = 3;
  KeyFrame ka3 = ka;
  ka3.keypoints[0].level = 3;
  CHECK(triangulate_checked(ka3, 0, kn, 0, cam, 1.2, 1.4035, 0.5991));
}

TEST_CASE("insert_and_triangulate recovers noise-free structure") {
  const CameraModel cam = pinhole_camera();
  Rng rng(9);
  const Pose a;
  const Pose b = Pose::from_center(Mat3::Identity(), Vec3(0.2, 0.0, 0.0));
  std::vector<Point3> points;
  std::vector<Descriptor256> descriptors;
  while (points.size() < 150) {
    const Point3 x = random_visible_point(rng, a, cam, 1.7, 2.3, 40.0);
    if (!project(x, b, cam, 40.0)) continue;
    points.push_back(x);
    descriptors.push_back(random_descriptor(rng));
  }
  WorldMap map(8, 1.2);
  const KeyFrameId ia = map.insert_keyframe(synthetic_keyframe(a, points, descriptors, cam, 0));
  const KeyFrameId ib = map.insert_keyframe(synthetic_keyframe(b, points, descriptors, cam, 5));
  // A few shared points establish covisibility.
  for (std::size_t j = 0; j < 10; ++j) {
    MapPoint mp;
    mp.position = points[j];
    mp.descriptor = descriptors[j];
    mp.observations = {{ia, j}, {ib, j}};
    map.insert_point(std::move(mp));
  }
  map.update_median_depth(ia);
  map.update_median_depth(ib);
  const auto created = insert_and_triangulate(map, ib, cam);
  CHECK(created.size() == points.size() - 10);
  for (PointId pid : created) {
    const MapPoint& mp = map.point(pid);
    const std::size_t j = mp.observations.at(ib);
    CHECK(mp.observations.at(ia) == j);
    CHECK((mp.position - points[j]).norm() <= 1e-6);
    CHECK(mp.provenance == Provenance::kOrbTriangulated);
  }
  CHECK(map.audit().empty());
  // Nothing left to triangulate.
  CHECK(insert_and_triangulate(map, ib, cam).empty());
}

TEST_CASE("local bundle adjustment on a map window") {
  const CameraModel cam = pinhole_camera();
  Rng rng(13);
  std::vector<Pose> poses;
  for (int i = 0; i < 5; ++i)
    poses.push_back(Pose::from_center(Mat3::Identity(), Vec3(0.1 * i, 0.02 * i, 0.0)));
  std::vector<Point3> points;
  std::vector<Descriptor256> descriptors;
  while (points.size() < 120) {
    const Point3 x = random_visible_point(rng, poses[2], cam, 1.8, 2.5, 40.0);
    bool all = true;
    for (const Pose& p : poses) all = all && project(x, p, cam, 10.0).has_value();
    if (!all) continue;
    points.push_back(x);
    descriptors.push_back(random_descriptor(rng));
  }
  WorldMap map(8, 1.2);
  std::vector<KeyFrameId> ids;
  for (std::size_t i = 0; i < poses.size(); ++i)
    ids.push_back(map.insert_keyframe(synthetic_keyframe(poses[i], points, descriptors, cam, i)));
  for (std::size_t j = 0; j < points.size(); ++j) {
    MapPoint mp;
    mp.position = points[j] + Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.01;
    mp.descriptor = descriptors[j];
    for (KeyFrameId id : ids) mp.observations[id] = j;
    map.insert_point(std::move(mp));
  }
  map.keyframe(ids[3]).pose = poses[3].retract((Vec6() << 0.003, -0.002, 0.001, 0.01, 0, 0).finished());
  // A gross mismatch on one observation.
  map.keyframe(ids[4]).keypoints[7].position += Vec2(25.0, -10.0);

  const Pose first = map.keyframe(ids[0]).pose;
  // Window {0, 1, 3}: keyframes 2 and 4 are fixed anchors and pin scale.
  LocalBaOptions lo;
  lo.window = 2;
  lo.ba.max_iterations = 200;
  const LocalBaReport r = local_bundle_adjust(map, ids[3], cam, lo);
  CHECK(r.free_keyframes == 2);
  CHECK(r.fixed_keyframes == 3);
  CHECK(r.diagnostic.empty());
  CHECK(r.final_cost < r.initial_cost);
  CHECK(r.flagged >= 1);
  CHECK(map.keyframe(ids[0]).pose.rotation == first.rotation);
  CHECK(map.keyframe(ids[0]).pose.translation == first.translation);
  CHECK(map.keyframe(ids[4]).point_of[7] == kNoPoint);
  CHECK(map.audit().empty());
  // With the mismatch detached a second pass returns to the truth.
  local_bundle_adjust(map, ids[3], cam, lo);
  CHECK((map.keyframe(ids[3]).pose.center() - poses[3].center()).norm() <= 1e-6);

  WorldMap single(8, 1.2);
  const KeyFrameId only = single.insert_keyframe(synthetic_keyframe(poses[0], points, descriptors, cam, 0));
  CHECK(!local_bundle_adjust(single, only, cam).diagnostic.empty());
}
