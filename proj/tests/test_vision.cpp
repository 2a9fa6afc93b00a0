#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "una/arena.hpp"
#include "una/vision.hpp"

using namespace una;

namespace {

constexpr Rgb kBackground{60, 60, 60};
constexpr Rgb kRed{220, 30, 30};

BinaryMask square(int w, int h, int u0, int v0, int side_u, int side_v) {
  BinaryMask m(w, h);
  for (int v = v0; v < v0 + side_v; ++v)
    for (int u = u0; u < u0 + side_u; ++u) m.set(u, v);
  return m;
}

}  // namespace

TEST_CASE("hsv conversion of primaries") {
  CHECK(to_hsv({255, 0, 0}).h == doctest::Approx(0));
  CHECK(to_hsv({0, 255, 0}).h == doctest::Approx(120));
  CHECK(to_hsv({0, 0, 255}).h == doctest::Approx(240));
  CHECK(to_hsv({255, 0, 255}).h == doctest::Approx(300));
  CHECK(to_hsv({60, 60, 60}).s == 0);
  CHECK(to_hsv({255, 255, 255}).v == doctest::Approx(1));
}

TEST_CASE("hue range wraps through zero") {
  const auto range = ColorRange::around(kRed, 20);
  CHECK(range.wraps());
  CHECK(range.contains(to_hsv({220, 30, 45})));   // hue ~355
  CHECK(range.contains(to_hsv({220, 45, 30})));   // hue ~5
  CHECK_FALSE(range.contains(to_hsv({30, 220, 30})));
}

TEST_CASE("in_range on uniform frames") {
  const Frame tag(16, 8, kRed);
  const Frame bg(16, 8, kBackground);
  const auto range = ColorRange::around(kRed);
  CHECK(in_range(tag, range).count() == 16 * 8);
  CHECK(in_range(bg, range).count() == 0);
}

TEST_CASE("in_range counts a 10x10 tag square like a pixel scan") {
  Frame f(40, 30, kBackground);
  for (int v = 5; v < 15; ++v)
    for (int u = 12; u < 22; ++u) f.set(u, v, kRed);
  const auto mask = in_range(f, ColorRange::around(kRed));
  std::size_t scan = 0;
  for (int v = 0; v < f.height(); ++v)
    for (int u = 0; u < f.width(); ++u) scan += (f.at(u, v) == kRed) ? 1 : 0;
  CHECK(scan == 100);
  CHECK(mask.count() == scan);
}

TEST_CASE("widening a range never clears a bit") {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> byte(0, 255);
  Frame f(32, 32);
  for (int v = 0; v < 32; ++v)
    for (int u = 0; u < 32; ++u)
      f.set(u, v, {std::uint8_t(byte(rng)), std::uint8_t(byte(rng)), std::uint8_t(byte(rng))});
  ColorRange narrow{100, 160, 0.3, 0.9, 0.3, 0.9};
  ColorRange wide{80, 200, 0.1, 1.0, 0.2, 1.0};
  const auto a = in_range(f, narrow), b = in_range(f, wide);
  for (int v = 0; v < 32; ++v)
    for (int u = 0; u < 32; ++u)
      if (a.get(u, v)) CHECK(b.get(u, v));
}

TEST_CASE("erode removes isolated pixels and shrinks rectangles") {
  BinaryMask single(10, 10);
  single.set(4, 4);
  CHECK(erode(single).count() == 0);

  const auto rect = square(30, 30, 5, 7, 9, 6);
  CHECK(erode(rect) == square(30, 30, 6, 8, 7, 4));

  CHECK_THROWS_AS(erode(rect, 0), std::invalid_argument);
}

TEST_CASE("erode matches the neighborhood-AND oracle and composes") {
  std::mt19937 rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto m = oracle::random_mask(rng, 48, 40);
    const auto e1 = erode(m, 1);
    CHECK(e1 == oracle::erode_and(m));
    CHECK(erode(e1, 1) == erode(m, 2));
  }
}

TEST_CASE("find_contours on simple masks") {
  CHECK(find_contours(BinaryMask(20, 20)).empty());

  const auto regions = find_contours(square(64, 64, 20, 30, 10, 10));
  REQUIRE(regions.size() == 1);
  CHECK(regions[0].area == 100);
  CHECK(regions[0].centroid.x() == doctest::Approx(24.5));
  CHECK(regions[0].centroid.y() == doctest::Approx(34.5));
  // Outer border of a 10x10 square has 36 pixels, starting at its top-left.
  CHECK(regions[0].boundary.size() == 36);
  CHECK(regions[0].boundary.front() == PixelPoint{20, 30});
}

TEST_CASE("find_contours handles holes, nesting and image edges") {
  BinaryMask m(20, 20);
  // Ring touching the border, with an island inside its hole.
  for (int v = 0; v < 12; ++v)
    for (int u = 0; u < 12; ++u)
      if (u == 0 || v == 0 || u == 11 || v == 11 || u == 1 || v == 1) m.set(u, v);
  m.set(5, 5);
  m.set(6, 6);
  m.set(18, 19);
  const auto regions = find_contours(m);
  const auto blobs = oracle::flood_fill(m);
  REQUIRE(regions.size() == blobs.size());
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    CHECK(regions[i].area == blobs[i].area);
    CHECK(regions[i].centroid.x() == blobs[i].cu);
    CHECK(regions[i].centroid.y() == blobs[i].cv);
  }
}

TEST_CASE("find_contours agrees with flood fill on random masks") {
  std::mt19937 rng(42);
  for (int i = 0; i < 60; ++i) {
    const auto m = oracle::random_mask(rng, 64, 64);
    const auto regions = find_contours(m);
    const auto blobs = oracle::flood_fill(m);
    REQUIRE(regions.size() == blobs.size());
    for (std::size_t k = 0; k < blobs.size(); ++k) {
      CHECK(regions[k].area == blobs[k].area);
      CHECK(regions[k].centroid.x() == blobs[k].cu);
      CHECK(regions[k].centroid.y() == blobs[k].cv);
      for (const auto& p : regions[k].boundary) CHECK(m.get(p.u, p.v));
    }
  }
}

namespace {

WorldState one_drone_world(Vector2 at) {
  DroneState d;
  d.id = "d1";
  d.tag = kRed;
  d.pose = Pose2D(at, 0);
  return make_world(ArenaConfig{}, {d}, {});
}

Calibration calibration_for(const ArenaConfig& cfg) {
  Calibration cal;
  cal.meters_per_pixel_x = cfg.meters_per_pixel_x();
  cal.meters_per_pixel_y = cfg.meters_per_pixel_y();
  cal.tags = {{"d1", TagKind::kDrone, ColorRange::around(kRed)},
              {"target", TagKind::kTarget, ColorRange::around(cfg.render.target_color)}};
  return cal;
}

}  // namespace

TEST_CASE("locate_tags finds a drone at the arena center") {
  const auto world = one_drone_world({0.625, 1.05});
  const auto cal = calibration_for(world.config);
  const auto scan = locate_tags(render_overhead(world), cal, 1.5);
  REQUIRE(scan.detections.size() == 1);
  CHECK(scan.missing.empty());
  const auto& d = scan.detections[0];
  CHECK(d.tag == "d1");
  CHECK(d.timestamp == 1.5);
  CHECK((d.world_position - Vector2(0.625, 1.05)).norm() <= 0.5 * world.config.pixel_width());
}

TEST_CASE("locate_tags reports missing drones and every target") {
  ArenaConfig cfg;
  const auto cal = calibration_for(cfg);
  const Frame empty(cfg.render.width_px, cfg.render.height_px, cfg.render.background);
  const auto none = locate_tags(empty, cal);
  CHECK(none.detections.empty());
  REQUIRE(none.missing.size() == 1);
  CHECK(none.missing[0] == "d1");

  Target a{"t1", {0.3, 0.5}, {}}, b{"t2", {0.9, 1.6}, {}};
  const auto world = make_world(cfg, {}, {a, b});
  const auto scan = locate_tags(render_overhead(world), cal);
  REQUIRE(scan.detections.size() == 2);
  for (const auto& d : scan.detections) {
    CHECK(d.tag == kTargetTag);
    CHECK(d.kind == TagKind::kTarget);
  }
}

TEST_CASE("tracker publishes at a fixed rate and re-publishes on provider failure") {
  auto world = one_drone_world({0.4, 0.7});
  int calls = 0;
  Tracker tracker(
      [&]() -> std::optional<Frame> {
        if (calls++ == 5) return std::nullopt;
        return render_overhead(world);
      },
      calibration_for(world.config), 0.05);
  std::vector<DetectionBatch> seen;
  tracker.subscribe([&](const DetectionBatch& b) { seen.push_back(b); });
  for (int i = 0; i < 100; ++i) tracker.tick();
  REQUIRE(seen.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(seen[i].timestamp == doctest::Approx(0.05 * i));
  CHECK(seen[5].stale);
  CHECK_FALSE(seen[4].stale);
  REQUIRE(seen[5].detections.size() == seen[4].detections.size());
  CHECK(seen[5].detections[0].world_position == seen[4].detections[0].world_position);
  CHECK(seen[5].detections[0].timestamp == seen[4].detections[0].timestamp);
}

TEST_CASE("calibration validation") {
  Calibration cal;
  CHECK_THROWS(cal.validate());
  cal.meters_per_pixel_x = cal.meters_per_pixel_y = 0.0025;
  cal.tags = {{"a", TagKind::kDrone, {}}, {"a", TagKind::kDrone, {}}};
  CHECK_THROWS(cal.validate());
}
