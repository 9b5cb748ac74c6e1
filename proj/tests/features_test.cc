#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "endoslam/features/matching.h"
#include "endoslam/features/orb.h"
#include "endoslam/features/pyramid.h"
#include "endoslam/util/error.h"
#include "test_support.h"

using namespace endoslam;

namespace {

// Brute-force segment test written directly from the definition: some run
// of 9 contiguous ring pixels all brighter than c+t or all darker than c-t.
bool brute_force_corner(const GrayImage& img, int x, int y, int t) {
  static const int rx[16] = {0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1};
  static const int ry[16] = {-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3};
  const int c = img(x, y);
  for (int start = 0; start < 16; ++start) {
    bool all_b = true, all_d = true;
    for (int k = 0; k < 9; ++k) {
      const int v = img(x + rx[(start + k) % 16], y + ry[(start + k) % 16]);
      all_b = all_b && v > c + t;
      all_d = all_d && v < c - t;
    }
    if (all_b || all_d) return true;
  }
  return false;
}

GrayImage rotate90(const GrayImage& img) {
  // new(x', y') = old(W-1-y', x'), so old (x, y) -> new (y, W-1-x).
  GrayImage out(img.height(), img.width());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out(x, y) = img(img.width() - 1 - y, x);
  return out;
}

GrayImage rotate_about_center(const GrayImage& img, double angle) {
  GrayImage out(img.width(), img.height(), 0);
  const double cx = (img.width() - 1) / 2.0, cy = (img.height() - 1) / 2.0;
  const double c = std::cos(angle), s = std::sin(angle);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      // Inverse map: out(p) = img(R^-1 (p - c) + c).
      const double dx = x - cx, dy = y - cy;
      const double sx = c * dx + s * dy + cx, sy = -s * dx + c * dy + cy;
      if (bilinear_inside(img, sx, sy))
        out(x, y) = static_cast<std::uint8_t>(std::lround(bilinear(img, sx, sy)));
    }
  return out;
}

}  // namespace

TEST_CASE("pyramid: single level is the input") {
  const GrayImage img = test::random_texture(120, 90, 1);
  const ImagePyramid pyr(img, 1, 1.2);
  REQUIRE(pyr.n_levels() == 1);
  CHECK(pyr.level(0) == img);
}

TEST_CASE("pyramid: level sizes follow floor(dim / s^i)") {
  const ImagePyramid pyr(GrayImage(640, 480, 7), 8, 1.2);
  REQUIRE(pyr.n_levels() == 8);
  CHECK(pyr.level(7).width() == 178);
  CHECK(pyr.level(7).height() == 133);
  for (int l = 0; l < 8; ++l)
    CHECK(std::all_of(pyr.level(l).data().begin(), pyr.level(l).data().end(),
                      [](std::uint8_t v) { return v == 7; }));
  CHECK(pyr.variance(2) == doctest::Approx(1.2 * 1.2 * 1.2 * 1.2));
}

TEST_CASE("pyramid: deterministic and validated") {
  const GrayImage img = test::random_texture(200, 150, 2);
  const ImagePyramid a(img, 5, 1.2), b(img, 5, 1.2);
  for (int l = 0; l < 5; ++l) CHECK(a.level(l) == b.level(l));
  CHECK_THROWS_AS(ImagePyramid(GrayImage(20, 20), 3, 1.2), Error);
  CHECK_THROWS_AS(ImagePyramid(img, 0, 1.2), Error);
  CHECK_THROWS_AS(ImagePyramid(img, 3, 1.0), Error);
}

TEST_CASE("detect: constant image has no corners") {
  const ImagePyramid pyr(GrayImage(320, 240, 128), 8, 1.2);
  CHECK(detect(pyr, DetectorOptions{}).empty());
}

TEST_CASE("detect: white square on black") {
  GrayImage img(200, 200, 0);
  const int x0 = 70, y0 = 80, x1 = 129, y1 = 139;  // inclusive corners
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) img(x, y) = 255;
  const ImagePyramid pyr(img, 1, 1.2);
  DetectorOptions opt;
  opt.target_count = 50;
  const auto kps = detect(pyr, opt);
  REQUIRE(kps.size() >= 4);

  const Pixel corners[4] = {{x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}};
  for (const Pixel& c : corners) {
    const Pixel inward = (Pixel(99.5, 109.5) - c).normalized();
    const Keypoint* hit = nullptr;
    for (const auto& kp : kps)
      if ((kp.position - c).norm() <= 1.0 + 1e-9) hit = &kp;
    REQUIRE_MESSAGE(hit != nullptr, "no keypoint near corner " << c.transpose());
    // Oracle: the keypoint passes the brute-force segment test.
    CHECK(brute_force_corner(img, static_cast<int>(hit->position.x()),
                             static_cast<int>(hit->position.y()), opt.fast_threshold));
    const Vec2 dir(std::cos(hit->angle), std::sin(hit->angle));
    CHECK(dir.dot(inward) > std::cos(30.0 * M_PI / 180.0));
  }
}

TEST_CASE("detect: every reported corner passes the brute-force segment test") {
  const GrayImage img = test::random_texture(320, 240, 3);
  const ImagePyramid pyr(img, 1, 1.2);
  DetectorOptions opt;
  opt.target_count = 400;
  opt.min_fast_threshold = opt.fast_threshold;
  for (const auto& kp : detect(pyr, opt)) {
    const int x = static_cast<int>(kp.position.x()), y = static_cast<int>(kp.position.y());
    CHECK(brute_force_corner(img, x, y, opt.fast_threshold));
    CHECK(fast_is_corner(img, x, y, opt.fast_threshold));
    CHECK(fast_score(img, x, y) >= opt.fast_threshold);
  }
}

TEST_CASE("detect: count on random texture within [0.8, 1.0] of target") {
  const GrayImage img = test::random_texture(640, 480, 4);
  const ImagePyramid pyr(img, 8, 1.2);
  DetectorOptions opt;
  opt.target_count = 1000;
  const auto kps = detect(pyr, opt);
  CHECK(kps.size() >= 800);
  CHECK(kps.size() <= 1000);
  for (const auto& kp : kps) {
    CHECK(kp.angle >= -M_PI);
    CHECK(kp.angle <= M_PI);
    const double s = pyr.scale(kp.level);
    const double lx = kp.position.x() / s, ly = kp.position.y() / s;
    CHECK(lx >= kKeypointBorder);
    CHECK(ly >= kKeypointBorder);
    CHECK(lx < pyr.level(kp.level).width() - kKeypointBorder);
    CHECK(ly < pyr.level(kp.level).height() - kKeypointBorder);
  }
  // Determinism.
  const auto again = detect(ImagePyramid(img, 8, 1.2), opt);
  REQUIRE(again.size() == kps.size());
  for (size_t i = 0; i < kps.size(); ++i) {
    CHECK(again[i].position == kps[i].position);
    CHECK(again[i].angle == kps[i].angle);
  }
}

TEST_CASE("describe: deterministic, border drops, flat patch is all zeros") {
  const GrayImage img = test::random_texture(320, 240, 5);
  const ImagePyramid pyr(img, 4, 1.2);
  const auto kps = detect(pyr, DetectorOptions{});
  const auto a = describe(pyr, kps), b = describe(pyr, kps);
  CHECK(a.descriptors == b.descriptors);
  CHECK(a.dropped.empty());
  CHECK(a.kept.size() == kps.size());

  std::vector<Keypoint> edge(1);
  edge[0].position = Pixel(5, 100);
  const auto e = describe(pyr, edge);
  CHECK(e.descriptors.empty());
  REQUIRE(e.dropped.size() == 1);
  CHECK(e.dropped[0] == 0);

  const ImagePyramid flat(GrayImage(100, 100, 90), 1, 1.2);
  std::vector<Keypoint> mid(1);
  mid[0].position = Pixel(50, 50);
  mid[0].angle = 0.7f;
  const auto f = describe(flat, mid);
  REQUIRE(f.descriptors.size() == 1);
  CHECK(f.descriptors[0] == Descriptor256{});
}

TEST_CASE("describe: 90 degree rotated copy keeps descriptors close") {
  const GrayImage img = test::random_texture(400, 400, 6);
  const GrayImage rot = rotate90(img);
  const ImagePyramid pa(img, 1, 1.2), pb(rot, 1, 1.2);
  DetectorOptions opt;
  opt.target_count = 500;
  const auto ka = detect(pa, opt), kb = detect(pb, opt);
  const auto da = describe(pa, ka), db = describe(pb, kb);
  int pairs = 0;
  for (size_t i = 0; i < da.kept.size(); ++i) {
    const Pixel p = ka[da.kept[i]].position;
    const Pixel mapped(p.y(), img.width() - 1 - p.x());
    for (size_t j = 0; j < db.kept.size(); ++j) {
      if ((kb[db.kept[j]].position - mapped).norm() > 0.5) continue;
      CHECK(hamming(da.descriptors[i], db.descriptors[j]) <= 64);
      ++pairs;
    }
  }
  CHECK(pairs > 100);
}

TEST_CASE("describe: stability under arbitrary in-plane rotation") {
  const GrayImage img = test::random_texture(480, 480, 8);
  const double angle = 30.0 * M_PI / 180.0;
  const GrayImage rot = rotate_about_center(img, angle);
  const ImagePyramid pa(img, 8, 1.2), pb(rot, 8, 1.2);
  const auto ka = detect(pa, DetectorOptions{}), kb = detect(pb, DetectorOptions{});
  const auto da = describe(pa, ka), db = describe(pb, kb);
  const double c = std::cos(angle), s = std::sin(angle), cx = 239.5, cy = 239.5;
  int redetected = 0, matched = 0;
  for (size_t j = 0; j < db.kept.size(); ++j) {
    const Keypoint& kpb = kb[db.kept[j]];
    // Forward map of original point p: R (p - c) + c.
    int best = -1;
    double best_d = 1.5;
    for (size_t i = 0; i < da.kept.size(); ++i) {
      const Keypoint& kpa = ka[da.kept[i]];
      if (kpa.level != kpb.level) continue;
      const Vec2 d = kpa.position - Vec2(cx, cy);
      const Vec2 m(c * d.x() - s * d.y() + cx, s * d.x() + c * d.y() + cy);
      const double dist = (m - kpb.position).norm();
      if (dist < best_d) {
        best_d = dist;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) continue;
    ++redetected;
    if (hamming(da.descriptors[best], db.descriptors[j]) <= 64) ++matched;
  }
  REQUIRE(redetected > 100);
  CHECK(matched >= 0.8 * redetected);
}

TEST_CASE("hamming: metric properties") {
  CHECK(hamming(Descriptor256{}, Descriptor256{}) == 0);
  CHECK(hamming(Descriptor256{}, Descriptor256::ones()) == 256);
  Rng rng(12);
  const auto rand_desc = [&] {
    Descriptor256 d;
    for (auto& w : d.words) w = rng.next_u64();
    return d;
  };
  for (int i = 0; i < 500; ++i) {
    const auto a = rand_desc(), b = rand_desc(), c = rand_desc();
    CHECK(hamming(a, a) == 0);
    CHECK(hamming(a, b) == hamming(b, a));
    CHECK(hamming(a, c) <= hamming(a, b) + hamming(b, c));
    CHECK(hamming(a, b) >= 0);
    CHECK(hamming(a, b) <= 256);
  }
}

TEST_CASE("match_in_region") {
  Descriptor256 query;
  const auto with_distance = [&](int d) {
    Descriptor256 x = query;
    for (int i = 0; i < d; ++i) x.words[i >> 6] ^= std::uint64_t{1} << (i & 63);
    return x;
  };
  std::vector<Keypoint> kps(4);
  kps[0].position = Pixel(100, 100);
  kps[1].position = Pixel(103, 100);
  kps[2].position = Pixel(100, 104);
  kps[3].position = Pixel(300, 300);
  std::vector<Descriptor256> desc = {with_distance(31), with_distance(30), with_distance(30),
                                     with_distance(0)};
  std::vector<MatchCandidate> cands;
  for (size_t i = 0; i < kps.size(); ++i) cands.push_back({&kps[i], &desc[i]});

  CHECK_FALSE(match_in_region(query, cands, Pixel(500, 20), 10.0, 45));
  // {31, 30, 30} in range: 30 wins, lower index among equals.
  auto m = match_in_region(query, cands, Pixel(100, 100), 6.0, 45);
  REQUIRE(m);
  CHECK(m->index == 1);
  CHECK(m->distance == 30);

  std::vector<MatchCandidate> one = {cands[0]};
  desc[0] = with_distance(44);
  m = match_in_region(query, one, Pixel(100, 100), 2.0, 45);
  REQUIRE(m);
  CHECK(m->distance == 44);
  desc[0] = with_distance(46);
  CHECK_FALSE(match_in_region(query, one, Pixel(100, 100), 2.0, 45));
}

TEST_CASE("zncc") {
  Rng rng(2);
  std::vector<double> a(121);
  for (double& v : a) v = rng.uniform(0, 255);
  CHECK(*zncc(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> neg(a.size()), aff(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    neg[i] = 300.0 - a[i];
    aff[i] = 0.37 * a[i] + 12.5;
  }
  CHECK(*zncc(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(*zncc(a, aff) - 1.0) < 1e-12);

  std::vector<double> b(a.size());
  for (double& v : b) v = rng.uniform(0, 255);
  const double base = *zncc(a, b);
  for (int t = 0; t < 20; ++t) {
    const double s = rng.uniform(0.01, 10.0), o = rng.uniform(-100, 100);
    std::vector<double> bt(b.size());
    for (size_t i = 0; i < b.size(); ++i) bt[i] = s * b[i] + o;
    CHECK(std::abs(*zncc(a, bt) - base) < 1e-12);
  }
  const std::vector<double> flat(a.size(), 3.0);
  CHECK_FALSE(zncc(a, flat));
  CHECK_FALSE(zncc(flat, a));
  CHECK_FALSE(zncc(a, std::vector<double>(5, 1.0)));
}

TEST_CASE("extract_patch bounds") {
  const GrayImage img = test::random_texture(64, 64, 1);
  CHECK(extract_patch(img, 32, 32, 5));
  CHECK(extract_patch(img, 32, 32, 5)->size() == 121);
  CHECK_FALSE(extract_patch(img, 3, 32, 5));
  CHECK_FALSE(extract_patch(img, 32, 60, 5));
}
