#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "semx/clips.hpp"
#include "semx/ngsim.hpp"
#include "semx/synth.hpp"

using namespace semx;

TEST_CASE("parse_ngsim converts feet to meters", "[data]") {
  testutil::TempDir tmp("ngsim");
  const auto path = tmp.file("a.csv");
  testutil::write_file(path,
                       "Vehicle_ID,Frame_ID,Global_Time,Local_X,Local_Y\n"
                       "1,1,100,10,100\n"
                       "1,2,200,10,110\n"
                       "1,3,300,10,120\n");
  const auto tracks = parse_ngsim(path, UnitMode::feet);
  REQUIRE(tracks.size() == 1);
  REQUIRE(tracks[0].points.size() == 3);
  CHECK(tracks[0].points[0].x == Catch::Approx(3.048).epsilon(1e-12));
  CHECK(tracks[0].points[0].y == Catch::Approx(30.48).epsilon(1e-12));
  CHECK(tracks[0].points[0].t == Catch::Approx(0.1));
}

TEST_CASE("parse_ngsim empty file yields empty list", "[data]") {
  testutil::TempDir tmp("ngsim");
  const auto path = tmp.file("empty.csv");
  testutil::write_file(path, "");
  CHECK(parse_ngsim(path, UnitMode::feet).empty());
}

TEST_CASE("parse_ngsim sorts out-of-order rows", "[data]") {
  testutil::TempDir tmp("ngsim");
  const auto sorted = tmp.file("sorted.csv");
  const auto shuffled = tmp.file("shuffled.csv");
  testutil::write_file(sorted,
                       "Vehicle_ID,Frame_ID,Global_Time,Local_X,Local_Y\n"
                       "1,1,100,1,10\n1,2,200,2,20\n1,3,300,3,30\n");
  testutil::write_file(shuffled,
                       "Vehicle_ID,Frame_ID,Global_Time,Local_X,Local_Y\n"
                       "1,3,300,3,30\n1,1,100,1,10\n1,2,200,2,20\n");
  const auto a = parse_ngsim(sorted, UnitMode::meters);
  const auto b = parse_ngsim(shuffled, UnitMode::meters);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a[0].points.size(); ++i) {
    CHECK(a[0].points[i].t == b[0].points[i].t);
    CHECK(a[0].points[i].x == b[0].points[i].x);
    CHECK(a[0].points[i].y == b[0].points[i].y);
  }
}

TEST_CASE("parse_ngsim errors name the problem", "[data]") {
  testutil::TempDir tmp("ngsim");
  const auto missing = tmp.file("missing.csv");
  testutil::write_file(missing, "Vehicle_ID,Frame_ID,Local_X,Local_Y\n1,1,1,1\n");
  CHECK_THROWS_MATCHES(parse_ngsim(missing, UnitMode::feet), SchemaError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("Global_Time")));

  const auto bad = tmp.file("bad.csv");
  testutil::write_file(bad,
                       "Vehicle_ID,Frame_ID,Global_Time,Local_X,Local_Y\n"
                       "1,1,100,1,10\n1,2,200,oops,20\n");
  CHECK_THROWS_MATCHES(
      parse_ngsim(bad, UnitMode::feet), ParseError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("line 3")));
}

TEST_CASE("parse_ngsim splits tracks at frame gaps", "[data]") {
  testutil::TempDir tmp("ngsim");
  const auto path = tmp.file("gap.csv");
  // 3 samples, a 0.3 s gap, then 2 samples
  testutil::write_file(path,
                       "Vehicle_ID,Frame_ID,Global_Time,Local_X,Local_Y\n"
                       "7,1,100,0,10\n7,2,200,0,11\n7,3,300,0,12\n"
                       "7,6,600,0,15\n7,7,700,0,16\n");
  const auto tracks = parse_ngsim(path, UnitMode::meters);
  REQUIRE(tracks.size() == 2);
  CHECK(tracks[0].points.size() == 3);
  CHECK(tracks[1].points.size() == 2);
  CHECK(tracks[0].vehicle_id == 7);
  CHECK(tracks[1].vehicle_id == 7);
}

TEST_CASE("ngsim round-trip parses back identically", "[data]") {
  SynthConfig cfg;
  cfg.n_scenes = 3;
  cfg.vehicles_per_scene = 4;
  const auto tracks = synth_generate(cfg, 42);
  testutil::TempDir tmp("ngsim");
  const auto path = tmp.file("rt.csv");
  write_ngsim(tracks, path);
  const auto back = parse_ngsim(path, UnitMode::meters);
  REQUIRE(back.size() == tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    REQUIRE(back[i].points.size() == tracks[i].points.size());
    for (std::size_t p = 0; p < tracks[i].points.size(); ++p) {
      CHECK(std::abs(back[i].points[p].x - tracks[i].points[p].x) < 1e-9);
      CHECK(std::abs(back[i].points[p].y - tracks[i].points[p].y) < 1e-9);
      CHECK(std::abs(back[i].points[p].t - tracks[i].points[p].t) < 1e-9);
    }
  }
}

TEST_CASE("segment_clips window counts", "[data]") {
  auto t80 = testutil::line_track(1, 0, 0, 0, 10, 80);
  CHECK(segment_clips({t80}, 3.0, 5.0, 80).size() == 1);

  auto t79 = testutil::line_track(2, 0, 0, 0, 10, 79);
  CHECK(segment_clips({t79}, 3.0, 5.0, 80).empty());

  auto t160 = testutil::line_track(3, 0, 0, 0, 10, 160);
  CHECK(segment_clips({t160}, 3.0, 5.0, 10).size() == 9);
}

TEST_CASE("segment_clips output is well-formed", "[data]") {
  auto tr = testutil::line_track(1, 0, 0, 0.5, 10, 160);
  const auto clips = segment_clips({tr}, 3.0, 5.0, 10);
  for (const auto& c : clips) {
    REQUIRE(c.history.size() == kHistoryLen);
    REQUIRE(c.future.size() == kFutureLen);
    CHECK(c.contiguous());
  }
}

TEST_CASE("segment_clips rejects non-uniform tracks listing ids", "[data]") {
  Trajectory bad;
  bad.vehicle_id = 99;
  bad.points = {TrackPoint{99, 0.0, 0, 0}, TrackPoint{99, 0.1, 0, 1}, TrackPoint{99, 0.35, 0, 2}};
  CHECK_THROWS_MATCHES(
      segment_clips({bad}, 3.0, 5.0, 80), ConfigError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("99")));
}

TEST_CASE("neighbors radius rule", "[data]") {
  // 5 vehicles in a line at y = 0, 20, 40, 60, 80
  std::vector<Trajectory> tracks;
  for (int i = 0; i < 5; ++i)
    tracks.push_back(testutil::line_track(i + 1, 0, 20.0 * i, 0, 0, 80));
  const auto scenes = testutil::scenes_from_tracks(tracks, 80);
  REQUIRE(scenes.size() == 1);
  const auto& scene = scenes[0];

  const auto mid = neighbors(scene, 3, 25.0);
  CHECK(mid == std::vector<std::int64_t>{2, 4});

  SECTION("symmetry") {
    for (const auto& a : scene.clips)
      for (const auto& b : scene.clips) {
        if (a.vehicle_id == b.vehicle_id) continue;
        const auto na = neighbors(scene, a.vehicle_id, 45.0);
        const auto nb = neighbors(scene, b.vehicle_id, 45.0);
        const bool a_in_b = std::find(nb.begin(), nb.end(), a.vehicle_id) != nb.end();
        const bool b_in_a = std::find(na.begin(), na.end(), b.vehicle_id) != na.end();
        CHECK(a_in_b == b_in_a);
      }
  }
  SECTION("unknown vehicle") { CHECK_THROWS_AS(neighbors(scene, 777, 10.0), LookupError); }
}

TEST_CASE("neighbors of single-vehicle scene is empty", "[data]") {
  const auto scenes = testutil::scenes_from_tracks({testutil::line_track(1, 0, 0, 0, 10, 80)}, 80);
  REQUIRE(scenes.size() == 1);
  CHECK(neighbors(scenes[0], 1, 50.0).empty());
}

TEST_CASE("synth constant velocity advances exactly", "[data]") {
  SynthConfig cfg;
  cfg.n_scenes = 1;
  cfg.vehicles_per_scene = 1;
  cfg.speed_min_mps = 10.0;
  cfg.speed_max_mps = 10.0;
  cfg.w_cv = 1.0;
  cfg.w_ca = cfg.w_lane_change = cfg.w_brake = 0.0;
  cfg.noise_std_m = 0.0;
  const auto tracks = synth_generate(cfg, 7);
  REQUIRE(tracks.size() == 1);
  const auto& pts = tracks[0].points;
  REQUIRE(pts.size() == 80);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(std::abs((pts[i].y - pts[i - 1].y) - 1.0) < 1e-9);
    CHECK(pts[i].x == pts[0].x);
  }
}

TEST_CASE("synth is deterministic per seed", "[data]") {
  SynthConfig cfg;
  cfg.n_scenes = 4;
  cfg.vehicles_per_scene = 5;
  cfg.congestion_fraction = 0.5;
  cfg.noise_std_m = 0.05;
  const auto a = synth_generate(cfg, 123);
  const auto b = synth_generate(cfg, 123);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].points.size() == b[i].points.size());
    for (std::size_t p = 0; p < a[i].points.size(); ++p) {
      CHECK(a[i].points[p].x == b[i].points[p].x);  // bitwise
      CHECK(a[i].points[p].y == b[i].points[p].y);
      CHECK(a[i].points[p].t == b[i].points[p].t);
    }
  }
  const auto c = synth_generate(cfg, 124);
  bool any_diff = false;
  for (std::size_t p = 0; p < a[0].points.size() && !any_diff; ++p)
    any_diff = a[0].points[p].y != c[0].points[p].y;
  CHECK(any_diff);
}

TEST_CASE("synth lane change displaces exactly one lane width", "[data]") {
  SynthConfig cfg;
  cfg.n_scenes = 1;
  cfg.vehicles_per_scene = 1;
  cfg.w_cv = cfg.w_ca = cfg.w_brake = 0.0;
  cfg.w_lane_change = 1.0;
  cfg.lane_width_m = 3.7;
  cfg.noise_std_m = 0.0;
  const auto tracks = synth_generate(cfg, 11);
  REQUIRE(tracks.size() == 1);
  const auto& pts = tracks[0].points;
  CHECK(std::abs(std::abs(pts.back().x - pts.front().x) - 3.7) < 1e-9);
}

TEST_CASE("synth rejects invalid configs", "[data]") {
  SynthConfig cfg;
  cfg.n_scenes = 0;
  CHECK_THROWS_AS(synth_generate(cfg, 1), ConfigError);
  cfg.n_scenes = 1;
  cfg.duration_s = -1;
  CHECK_THROWS_AS(synth_generate(cfg, 1), ConfigError);
}

TEST_CASE("scene clips share the time grid", "[data]") {
  SynthConfig cfg;
  cfg.n_scenes = 2;
  cfg.vehicles_per_scene = 4;
  const auto scenes = testutil::synth_scenes(cfg, 5);
  REQUIRE(scenes.size() == 2);
  for (const auto& scene : scenes) {
    for (const auto& c : scene.clips) {
      CHECK(c.history.front().t == scene.clips[0].history.front().t);
      CHECK(c.future.back().t == scene.clips[0].future.back().t);
    }
  }
}
