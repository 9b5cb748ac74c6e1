#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "endoslam/synth/dataset.h"
#include "endoslam/util/error.h"
#include "endoslam/util/strings.h"
#include "test_support.h"

using namespace endoslam;

namespace {

SurfaceParams small_surface(SurfaceKind kind) {
  SurfaceParams p;
  p.kind = kind;
  p.extent = kind == SurfaceKind::kHemisphere ? 100.0 : 200.0;
  p.mesh_step = 4.0;
  p.texture.texel_mm = 0.5;
  return p;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("plane mesh is axis aligned at z = 0") {
  const SyntheticSurface s(small_surface(SurfaceKind::kPlane));
  const TriangleMesh m = s.mesh();
  Vec3 lo = Vec3::Constant(1e9), hi = -lo;
  for (const auto& v : m.vertices) {
    CHECK(v.z() == 0.0);
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  CHECK(lo.x() == doctest::Approx(-100.0));
  CHECK(hi.y() == doctest::Approx(100.0));
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("hemisphere mesh vertices lie on the sphere") {
  const SyntheticSurface s(small_surface(SurfaceKind::kHemisphere));
  const TriangleMesh m = s.mesh();
  for (const auto& v : m.vertices) {
    CHECK(std::abs(v.norm() - 100.0) < 1e-9);
    CHECK(v.z() <= 1e-12);
  }
  CHECK_NOTHROW(m.validate());
  // Edge lengths stay near the requested step.
  double longest = 0.0;
  for (const auto& f : m.faces)
    for (int i = 0; i < 3; ++i)
      longest = std::max(longest, (m.vertices[f[i]] - m.vertices[f[(i + 1) % 3]]).norm());
  CHECK(longest < 3.0 * 4.0);
}

TEST_CASE("texture is a function of the seed") {
  TextureParams p;
  p.texel_mm = 0.5;
  const GrayImage a = make_texture(p, 20.0), b = make_texture(p, 20.0);
  CHECK(a == b);
  p.seed = 2;
  CHECK_FALSE(make_texture(p, 20.0) == a);
}

TEST_CASE("relief intersection agrees with the height field") {
  const SyntheticSurface s(small_surface(SurfaceKind::kRelief));
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Point3 o(rng.uniform(-50, 50), rng.uniform(-50, 50), 60.0);
    const Vec3 d = Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), -1.0).normalized();
    const auto t = s.intersect(o, d);
    REQUIRE(t);
    const Point3 q = o + *t * d;
    CHECK(std::abs(q.z() - *s.height(q.x(), q.y())) < 1e-9);
  }
}

TEST_CASE("trajectories") {
  TrajectoryParams p;
  p.kind = TrajectoryKind::kBreathing;
  p.n_frames = 200;
  p.settle_frames = 50;
  p.period_frames = 40.0;

  SUBCASE("zero amplitude is the base trajectory") {
    p.amplitude = 0.0;
    const auto t = make_trajectory(p);
    TrajectoryParams arc = p;
    arc.kind = TrajectoryKind::kArc;
    arc.n_frames = p.settle_frames;
    const auto a = make_trajectory(arc);
    for (int k = 0; k < p.n_frames; ++k) {
      const Pose& ref = a.poses[std::min(k, p.settle_frames - 1)];
      CHECK((t.poses[k].rotation - ref.rotation).norm() < 1e-12);
      CHECK((t.poses[k].translation - ref.translation).norm() < 1e-12);
    }
  }
  SUBCASE("amplitude and period of the oscillation") {
    p.amplitude = 2.5;
    const auto t = make_trajectory(p);
    const Pose base = t.poses[p.settle_frames - 1];
    double peak = 0.0;
    std::vector<int> rising;
    double prev = 0.0;
    for (int k = p.settle_frames; k < p.n_frames; ++k) {
      const Vec3 d = t.poses[k].center() - base.center();
      // Displacement is purely along the optical axis.
      CHECK((d - d.dot(base.optical_axis()) * base.optical_axis()).norm() < 1e-9);
      const double s = d.dot(base.optical_axis());
      peak = std::max(peak, std::abs(s));
      if (prev < 0.0 && s >= 0.0) rising.push_back(k);
      prev = s;
      CHECK(rotation_angle_deg(t.poses[k].rotation, base.rotation) < 1e-9);
    }
    CHECK(peak == doctest::Approx(2.5).epsilon(1e-12));
    REQUIRE(rising.size() >= 2);
    CHECK(rising[1] - rising[0] == 40);
  }
  SUBCASE("kidnap flags exactly the block") {
    TrajectoryParams k;
    k.kind = TrajectoryKind::kKidnap;
    k.n_frames = 100;
    k.kidnap_start = 40;
    k.kidnap_length = 17;
    const auto t = make_trajectory(k);
    CHECK(std::count(t.off_scene.begin(), t.off_scene.end(), true) == 17);
    CHECK(t.off_scene[40]);
    CHECK_FALSE(t.off_scene[57]);
    // The first frame after the block returns to the last mapped pose.
    CHECK((t.poses[57].center() - t.poses[39].center()).norm() < 1e-12);
  }
  SUBCASE("too short") {
    p.n_frames = 1;
    CHECK_THROWS_AS(make_trajectory(p), Error);
  }
}

TEST_CASE("render: uniform plane gives a constant image and exact depth") {
  SurfaceParams sp = small_surface(SurfaceKind::kPlane);
  sp.texture.contrast = 0.0;
  const SyntheticSurface s(sp);
  const CameraModel cam = test::pinhole_camera();
  const Renderer r(cam);
  const double d = 37.25;
  const Pose pose = look_at(Vec3(3.0, -2.0, d), Vec3(3.0, -2.0, 0.0), Vec3(0, 1, 0));
  const Rendering img = r.render(s, pose, {});
  for (auto v : img.image.data()) CHECK(v == 128);
  CHECK(std::abs(img.depth(320, 240) - d) < 1e-9);
}

TEST_CASE("render: surface points land on their projections") {
  const SyntheticSurface s(small_surface(SurfaceKind::kRelief));
  const CameraModel cam = test::distorted_camera();
  const Renderer r(cam);
  const Pose pose = look_at(Vec3(5.0, 4.0, 50.0), Vec3(0.0, 0.0, 0.0), Vec3(0, 1, 0));
  const Rendering img = r.render(s, pose, {});
  Rng rng(9);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    const int x = static_cast<int>(rng.index(cam.width)), y = static_cast<int>(rng.index(cam.height));
    if (img.depth(x, y) <= 0.0) continue;
    const Vec3 ray = r.ray(x, y);
    const Point3 pc = ray / ray.z() * img.depth(x, y);
    const Point3 pw = pose.inverse().transform(pc);
    CHECK(std::abs(pw.z() - *s.height(pw.x(), pw.y())) < 1e-6);
    const auto px = project(pw, pose, cam, 1e-6);
    REQUIRE(px);
    CHECK((*px - Pixel(x, y)).norm() < 0.5);
    ++checked;
  }
  CHECK(checked > 400);
}

TEST_CASE("render: camera behind the surface is rejected") {
  const SyntheticSurface s(small_surface(SurfaceKind::kHemisphere));
  const Renderer r(test::pinhole_camera());
  const Pose outside = look_at(Vec3(0, 0, -150), Vec3(0, 0, -200), Vec3(0, 1, 0));
  CHECK_THROWS_AS(r.render(s, outside, {}), Error);
}

TEST_CASE("render noise is reproducible per frame") {
  const SyntheticSurface s(small_surface(SurfaceKind::kPlane));
  const Renderer r(test::pinhole_camera());
  const Pose pose = look_at(Vec3(0, 0, 40), Vec3(0, 0, 0), Vec3(0, 1, 0));
  RenderOptions o;
  o.noise_sigma = 2.0;
  o.noise_seed = 4;
  CHECK(r.render(s, pose, o, 3).image == r.render(s, pose, o, 3).image);
  CHECK_FALSE(r.render(s, pose, o, 3).image == r.render(s, pose, o, 4).image);
}

TEST_CASE("occluder painting") {
  GrayImage img = test::random_texture(160, 120, 2);
  const GrayImage orig = img;
  CHECK(paint_occluder(img, Occluder{Pixel(10, 10), Pixel(100, 80), 0.0, 0}) == 0);
  CHECK(img == orig);
  GrayImage visible(160, 120, 1);
  CHECK(paint_occluder(img, Occluder{Pixel(80, 60), Pixel(80, 60), 1000.0, 7}, &visible) ==
        160u * 120u);
  for (auto v : img.data()) CHECK(v == 7);
  for (auto v : visible.data()) CHECK(v == 0);
}

TEST_CASE("dataset writer is deterministic and readable") {
  DatasetSpec spec = dataset_preset("hemisphere", 3);
  spec.trajectory.n_frames = 3;
  spec.surface.mesh_step = 5.0;
  const auto root = std::filesystem::temp_directory_path() / "endoslam_synth_test";
  std::filesystem::remove_all(root);
  write_dataset(spec, root / "a");
  write_dataset(spec, root / "b");
  for (const char* f : {"frame_000000.pgm", "frame_000002.pgm", "calib.txt", "groundtruth.txt",
                        "surface.obj", "visibility.csv"})
    CHECK(file_bytes(root / "a" / f) == file_bytes(root / "b" / f));
  const Dataset ds = open_dataset(root / "a");
  CHECK(ds.frames.size() == 3);
  CHECK(ds.groundtruth.size() == 3);
  CHECK(ds.camera.fx == spec.camera.fx);
  CHECK(ds.timestamps[2] == doctest::Approx(2.0 / 30.0));
  std::filesystem::remove_all(root);
  CHECK_THROWS_AS(open_dataset(root / "missing"), Error);
  CHECK_THROWS_AS(dataset_preset("nope", 1), Error);
}
