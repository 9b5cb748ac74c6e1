#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "endoslam/relocate/keyframe_database.h"
#include "endoslam/relocate/p3p.h"
#include "endoslam/relocate/relocalizer.h"
#include "endoslam/relocate/vocabulary.h"
#include "endoslam/synth/dataset.h"
#include "endoslam/util/error.h"
#include "test_support.h"

using namespace endoslam;
using namespace endoslam::test;

namespace {

Descriptor256 random_descriptor(Rng& rng) {
  Descriptor256 d;
  for (auto& w : d.words) w = rng.next_u64();
  return d;
}

Descriptor256 flip_bits(Descriptor256 d, Rng& rng, int n) {
  for (int i = 0; i < n; ++i) {
    const int b = static_cast<int>(rng.index(256));
    d.words[b >> 6] ^= std::uint64_t{1} << (b & 63);
  }
  return d;
}

// Hierarchically planted blobs: k top-level centres, each with k children
// a few dozen bits away, each child with tight members.
struct PlantedCorpus {
  std::vector<Descriptor256> all;
  std::vector<int> blob;
};

PlantedCorpus planted(int k, std::uint64_t seed, int members) {
  Rng rng(seed);
  PlantedCorpus c;
  for (int a = 0; a < k; ++a) {
    const Descriptor256 top = random_descriptor(rng);
    for (int b = 0; b < k; ++b) {
      const Descriptor256 centre = flip_bits(top, rng, 40);
      for (int m = 0; m < members; ++m) {
        c.all.push_back(flip_bits(centre, rng, 3));
        c.blob.push_back(a * k + b);
      }
    }
  }
  return c;
}

const Vocabulary& test_vocabulary() {
  static const Vocabulary vocab = [] {
    const CameraModel cam = default_synthetic_camera();
    const SyntheticSurface surface(textured_plane(77));
    std::vector<std::vector<Descriptor256>> docs;
    for (int i = 0; i < 24; ++i) {
      const double x = -70.0 + 20.0 * (i % 8), y = -40.0 + 40.0 * (i / 8);
      const Frame f = render_frame(surface, overhead_pose(Vec3(x, y, 55.0), Vec3(x, y + 2.0, 0.0)), cam, i);
      docs.push_back(f.descriptors);
    }
    return Vocabulary::train(docs, 10, 4, 1);
  }();
  return vocab;
}

void index_keyframe(WorldMap& map, KeyFrameId id, const Vocabulary& vocab, KeyframeDatabase& db,
                    int node_depth = 2) {
  KeyFrame& kf = map.keyframe(id);
  kf.bow = vocab.bow(kf.descriptors, node_depth, &kf.features);
  db.add(id, kf.bow);
}

}  // namespace

TEST_CASE("vocabulary: separable two-word case") {
  std::vector<Descriptor256> docs(100, Descriptor256{});
  for (int i = 0; i < 100; ++i) docs.push_back(Descriptor256::ones());
  const Vocabulary v = Vocabulary::train({docs}, 2, 1, 3);
  REQUIRE(v.size() == 2);
  const auto w0 = v.word(Descriptor256{});
  const auto w1 = v.word(Descriptor256::ones());
  CHECK(w0 != w1);
}

TEST_CASE("vocabulary: planted clusters get their own leaves") {
  for (int k : {2, 3, 4}) {
    const PlantedCorpus c = planted(k, 10 + k, 20);
    const Vocabulary v = Vocabulary::train({c.all}, k, 2, 5);
    CHECK(v.size() == static_cast<std::size_t>(k * k));
    std::map<int, std::set<std::uint32_t>> words_of_blob;
    std::map<std::uint32_t, std::set<int>> blobs_of_word;
    for (std::size_t i = 0; i < c.all.size(); ++i) {
      const auto w = v.word(c.all[i]);
      words_of_blob[c.blob[i]].insert(w);
      blobs_of_word[w].insert(c.blob[i]);
    }
    for (const auto& [b, ws] : words_of_blob) CHECK(ws.size() == 1);
    for (const auto& [w, bs] : blobs_of_word) CHECK(bs.size() == 1);
  }
}

TEST_CASE("vocabulary: determinism, empty corpus and serialization") {
  const PlantedCorpus c = planted(3, 4, 15);
  const Vocabulary a = Vocabulary::train({c.all}, 3, 3, 9);
  const Vocabulary b = Vocabulary::train({c.all}, 3, 3, 9);
  CHECK(a == b);
  CHECK(a.serialize() == b.serialize());
  // One descriptor, one word, every time.
  for (const auto& d : c.all) CHECK(a.word(d) == a.word(d));
  for (const auto& n : a.nodes())
    if (n.n_children == 0) CHECK(n.word < a.size());

  CHECK_THROWS_AS(Vocabulary::train({}, 3, 2, 1), Error);
  CHECK_THROWS_AS(Vocabulary::train({{}, {}}, 3, 2, 1), Error);

  const auto path = std::filesystem::temp_directory_path() / "endoslam_vocab_test.bin";
  a.save(path);
  const Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded == a);
  CHECK(loaded.serialize() == a.serialize());
  // Truncation and a bad magic are parse errors.
  auto bytes = a.serialize();
  bytes.pop_back();
  CHECK_THROWS_AS(Vocabulary::deserialize(bytes), Error);
  bytes = a.serialize();
  bytes[0] = 'X';
  CHECK_THROWS_AS(Vocabulary::deserialize(bytes), Error);
  std::filesystem::remove(path);
}

TEST_CASE("bow vectors and similarity") {
  const PlantedCorpus c = planted(3, 4, 15);
  const Vocabulary v = Vocabulary::train({c.all}, 3, 2, 9);
  CHECK(v.bow(std::vector<Descriptor256>{}).empty());
  const std::vector<Descriptor256> same(c.all.begin(), c.all.begin() + 10);
  const BowVector one = v.bow(same);
  REQUIRE(one.size() == 1);
  CHECK(one.begin()->second == doctest::Approx(1.0));
  const BowVector mixed = v.bow(c.all);
  double sum = 0.0;
  for (const auto& [w, x] : mixed) sum += x;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(bow_score(mixed, mixed) == doctest::Approx(1.0));
  CHECK(bow_score(one, mixed) < 1.0);
  // Disjoint supports score zero.
  const std::vector<Descriptor256> other(c.all.end() - 10, c.all.end());
  CHECK(bow_score(one, v.bow(other)) == doctest::Approx(0.0));
}

TEST_CASE("p3p: known pose among the solutions") {
  const CameraModel cam = pinhole_camera();
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const Pose truth = random_pose(rng, 1.0, 2.0);
    std::array<Point3, 3> pts;
    std::array<Vec3, 3> bearings;
    std::array<Pixel, 3> pixels;
    for (int i = 0; i < 3; ++i) {
      pts[i] = random_visible_point(rng, truth, cam, 1.0, 6.0);
      bearings[i] = truth.transform(pts[i]);
      pixels[i] = *project(pts[i], truth, cam);
    }
    const auto sols = p3p(bearings, pts);
    REQUIRE(sols.size() <= 4);
    double best = 1e9;
    for (const Pose& s : sols) {
      best = std::min(best, std::max((s.rotation - truth.rotation).cwiseAbs().maxCoeff(),
                                     (s.translation - truth.translation).cwiseAbs().maxCoeff()));
      for (int i = 0; i < 3; ++i) {
        const auto px = cam.project_camera(s.transform(pts[i]));
        REQUIRE(px);
        CHECK((*px - pixels[i]).norm() <= 1e-8);
      }
    }
    CHECK(best <= 1e-8);
  }
}

TEST_CASE("p3p: collinear points are degenerate") {
  const std::array<Point3, 3> pts{Point3(0, 0, 4), Point3(1, 1, 5), Point3(2, 2, 6)};
  const std::array<Vec3, 3> bearings{pts[0], pts[1], pts[2]};
  CHECK_THROWS_AS(p3p(bearings, pts), Error);
}

TEST_CASE("pnp ransac tolerates outliers") {
  const CameraModel cam = distorted_camera();
  Rng rng(8);
  const Pose truth = random_pose(rng, 0.4, 1.0);
  std::vector<PoseObservation> obs;
  for (int i = 0; i < 100; ++i) {
    const Point3 x = random_visible_point(rng, truth, cam, 1.0, 5.0, 10.0);
    Pixel px = *project(x, truth, cam);
    if (i % 3 == 0) px += Vec2(rng.uniform(-60, 60), rng.uniform(-60, 60));
    obs.push_back({x, px, 0});
  }
  const auto r = pnp_ransac(obs, cam);
  REQUIRE(r);
  CHECK(r->n_inliers >= 60);
  CHECK(r->iterations <= 500);
  CHECK((r->pose.center() - truth.center()).norm() <= 1e-6);
}

TEST_CASE("keyframe database queries") {
  const Vocabulary& vocab = test_vocabulary();
  const CameraModel cam = default_synthetic_camera();
  const SyntheticSurface scene_a(textured_plane(1));
  const SyntheticSurface scene_b(textured_plane(2));
  WorldMap map;
  KeyframeDatabase db;
  std::vector<KeyFrameId> a_ids, b_ids;
  for (int i = 0; i < 3; ++i) {
    const Vec3 c(-30.0 + 30.0 * i, 0.0, 60.0);
    const Frame fa = render_frame(scene_a, overhead_pose(c, c - Vec3(0, 0, 60)), cam, i);
    a_ids.push_back(add_keyframe_with_points(map, fa, scene_a, cam, 0));
    const Frame fb = render_frame(scene_b, overhead_pose(c, c - Vec3(0, 0, 60)), cam, 10 + i);
    b_ids.push_back(add_keyframe_with_points(map, fb, scene_b, cam, 0));
  }
  for (const auto& [id, kf] : map.keyframes()) index_keyframe(map, id, vocab, db);

  SUBCASE("stored keyframe ranks first") {
    const auto groups = db.query(map.keyframe(a_ids[1]).bow, map);
    REQUIRE(!groups.empty());
    CHECK(groups.front().best == a_ids[1]);
  }
  SUBCASE("no shared word gives nothing") {
    BowVector unknown{{static_cast<std::uint32_t>(vocab.size() + 5), 1.0}};
    CHECK(db.query(unknown, map).empty());
  }
  SUBCASE("query from scene A returns only scene A") {
    const Frame q = render_frame(scene_a, overhead_pose(Vec3(-15, 2, 58), Vec3(-15, 2, 0)), cam, 50);
    const auto groups = db.query(vocab.bow(q.descriptors), map);
    REQUIRE(!groups.empty());
    for (const auto& g : groups)
      for (KeyFrameId id : g.keyframes)
        CHECK(std::find(a_ids.begin(), a_ids.end(), id) != a_ids.end());
  }
  SUBCASE("culled keyframes never come back") {
    const BowVector bow = map.keyframe(a_ids[1]).bow;
    map.remove_keyframe(a_ids[1]);
    for (const auto& g : db.query(bow, map))
      for (KeyFrameId id : g.keyframes) CHECK(map.has_keyframe(id));
    db.erase(a_ids[1]);
    CHECK(!db.contains(a_ids[1]));
    for (const auto& g : db.query(bow, map)) CHECK(g.best != a_ids[1]);
  }
}

TEST_CASE("relocalization after a kidnap") {
  const Vocabulary& vocab = test_vocabulary();
  const CameraModel cam = default_synthetic_camera();
  const SyntheticSurface surface(textured_plane(1));
  WorldMap map;
  KeyframeDatabase db;
  std::vector<Pose> poses;
  for (double x : {40.0, 70.0}) {
    poses.push_back(overhead_pose(Vec3(x, 5.0, 60.0), Vec3(x, 6.0, 0.0)));
    const Frame f = render_frame(surface, poses.back(), cam, poses.size());
    index_keyframe(map, add_keyframe_with_points(map, f, surface, cam), vocab, db);
  }
  SUBCASE("returned to a mapped viewpoint") {
    Frame f = render_frame(surface, poses[0], cam, 100);
    f.has_pose = false;
    const RelocalizationResult r = relocalize(f, map, db, vocab, cam);
    REQUIRE(r.ok);
    CHECK(r.n_inliers >= 15);
    CHECK((r.pose.rotation - poses[0].rotation).cwiseAbs().maxCoeff() <= 1e-4);
    CHECK((r.pose.translation - poses[0].translation).cwiseAbs().maxCoeff() <= 1e-4);
  }
  SUBCASE("never-mapped region") {
    Frame f = render_frame(surface, overhead_pose(Vec3(-60.0, -20.0, 60.0), Vec3(-60.0, -19.0, 0.0)), cam, 101);
    const RelocalizationResult r = relocalize(f, map, db, vocab, cam);
    CHECK_FALSE(r.ok);
  }
}
