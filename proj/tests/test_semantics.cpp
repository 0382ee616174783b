#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "semx/features.hpp"
#include "semx/semantics.hpp"

using namespace semx;

namespace {

SemanticReport random_report(RngStream& rng) {
  SemanticReport r;
  r.incident = rng.uniform() < 0.5;
  r.closure = rng.uniform() < 0.5;
  r.sudden_congestion = rng.uniform() < 0.5;
  r.congestion_level = rng.uniform();
  for (auto& v : r.temporal_profile) v = rng.uniform();
  r.lane_change_rate = rng.uniform();
  r.intersection_density = rng.uniform();
  r.segment_speed_ratio = rng.uniform();
  return r;
}

Scene scene_with_speeds(const std::vector<double>& speeds) {
  std::vector<Trajectory> tracks;
  for (std::size_t i = 0; i < speeds.size(); ++i)
    tracks.push_back(
        testutil::line_track(static_cast<std::int64_t>(i + 1), 0, 40.0 * static_cast<double>(i),
                             0, speeds[i], 80));
  const auto scenes = testutil::scenes_from_tracks(tracks, 80);
  REQUIRE(scenes.size() == 1);
  return scenes[0];
}

}  // namespace

TEST_CASE("default report serializes to zeros beyond the flag slots", "[semantics]") {
  const SemanticReport r;
  const auto v = serialize_report(r);
  REQUIRE(v.size() == kReportDim);
  CHECK(v[0] == -1.0);
  CHECK(v[1] == -1.0);
  CHECK(v[2] == -1.0);
  for (std::size_t i = 3; i < v.size(); ++i) CHECK(v[i] == 0.0);
}

TEST_CASE("full congestion encodes +1 in its slot", "[semantics]") {
  SemanticReport r;
  r.congestion_level = 1.0;
  CHECK(serialize_report(r)[3] == 1.0);
}

TEST_CASE("report round-trip recovers every numeric field", "[semantics]") {
  RngStream rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto r = random_report(rng);
    const auto back = deserialize_report(serialize_report(r));
    CHECK(back.incident == r.incident);
    CHECK(back.closure == r.closure);
    CHECK(back.sudden_congestion == r.sudden_congestion);
    CHECK(std::abs(back.congestion_level - r.congestion_level) <= 1e-6);
    for (int i = 0; i < kTemporalProfileLen; ++i)
      CHECK(std::abs(back.temporal_profile[static_cast<std::size_t>(i)] -
                     r.temporal_profile[static_cast<std::size_t>(i)]) <= 1e-6);
    CHECK(std::abs(back.lane_change_rate - r.lane_change_rate) <= 1e-6);
    CHECK(std::abs(back.intersection_density - r.intersection_density) <= 1e-6);
    CHECK(std::abs(back.segment_speed_ratio - r.segment_speed_ratio) <= 1e-6);
  }
}

TEST_CASE("deserialize clamps out-of-range values and checks shape", "[semantics]") {
  std::vector<double> v(kReportDim, 0.0);
  v[3] = 1.7;
  CHECK(deserialize_report(v).congestion_level == 1.0);
  v[3] = -0.4;
  CHECK(deserialize_report(v).congestion_level == 0.0);
  CHECK_THROWS_AS(deserialize_report(std::vector<double>(10, 0.0)), ShapeError);
}

TEST_CASE("rules: free flow at schema max speed", "[semantics]") {
  const auto scene = scene_with_speeds({40.0, 40.0, 40.0});
  const auto schema = FeatureSchema::builtin_scene();
  const RulesBackend rules(schema);
  const auto r = rules.analyze(extract_scene_features(scene, schema));
  CHECK(r.congestion_level == Catch::Approx(0.0).margin(1e-9));
  CHECK_FALSE(r.incident);
  CHECK_FALSE(r.closure);
  CHECK_FALSE(r.sudden_congestion);
  CHECK(r.segment_speed_ratio == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("rules: standstill scene is fully congested", "[semantics]") {
  const auto scene = scene_with_speeds({0.0, 0.0, 0.0});
  const auto schema = FeatureSchema::builtin_scene();
  const RulesBackend rules(schema);
  const auto r = rules.analyze(extract_scene_features(scene, schema));
  CHECK(r.congestion_level == Catch::Approx(1.0).margin(1e-9));
  CHECK(r.closure);  // everyone stopped
}

TEST_CASE("rules: hard deceleration among cruisers flags sudden congestion", "[semantics]") {
  // decelerating vehicle: v drops 3 m/s^2 through the history
  Trajectory dec;
  dec.vehicle_id = 1;
  const double v0 = 20.0, a = -3.0;
  for (int i = 0; i < 80; ++i) {
    const double t = i / 10.0;
    const double v = std::max(0.0, v0 + a * t);
    const double y = (v > 0) ? v0 * t + 0.5 * a * t * t
                             : (v0 * v0) / (-2.0 * a);
    dec.points.push_back(TrackPoint{1, t, 0.0, y});
  }
  std::vector<Trajectory> tracks = {dec, testutil::line_track(2, 3.7, 30, 0, 20, 80),
                                    testutil::line_track(3, -3.7, 60, 0, 20, 80)};
  const auto scenes = testutil::scenes_from_tracks(tracks, 80);
  const auto schema = FeatureSchema::builtin_scene();
  const RulesBackend rules(schema);
  const auto r = rules.analyze(extract_scene_features(scenes[0], schema));
  CHECK(r.sudden_congestion);
}

TEST_CASE("rules backend is deterministic", "[semantics]") {
  SynthConfig cfg;
  cfg.n_scenes = 1;
  cfg.vehicles_per_scene = 4;
  cfg.congestion_fraction = 1.0;
  const auto scene = testutil::synth_scenes(cfg, 31)[0];
  const auto schema = FeatureSchema::builtin_scene();
  const RulesBackend rules(schema);
  const auto fv = extract_scene_features(scene, schema);
  const auto a = rules.analyze(fv);
  const auto b = rules.analyze(fv);
  CHECK(serialize_report(a) == serialize_report(b));  // bitwise
}

TEST_CASE("rules backend works on vehicle schemas too", "[semantics]") {
  const auto tr = testutil::line_track(1, 0, 0, 0, 10, 80);
  const auto clips = segment_clips({tr}, 3.0, 5.0, 80);
  const auto schema = FeatureSchema::builtin_vehicle();
  const RulesBackend rules(schema);
  const auto r = rules.analyze(extract_vehicle_features(clips[0], schema));
  CHECK(r.congestion_level == Catch::Approx(0.75).margin(1e-9));  // 1 - 10/40
  r.validate();
}

TEST_CASE("rules backend rejects schema mismatches", "[semantics]") {
  const auto scene_schema = FeatureSchema::builtin_scene();
  const RulesBackend rules(scene_schema);
  FeatureVector fv;
  fv.values.assign(kFeatureDim, 0.0);
  fv.schema_version = "vehicle_v1";
  CHECK_THROWS_AS(rules.analyze(fv), ConfigError);
}

TEST_CASE("analyze with a rules backend never fails on valid features", "[semantics]") {
  SynthConfig cfg;
  cfg.n_scenes = 4;
  cfg.vehicles_per_scene = 3;
  cfg.congestion_fraction = 0.5;
  const auto scenes = testutil::synth_scenes(cfg, 41);
  const auto schema = FeatureSchema::builtin_scene();
  const SemanticBackend backend{RulesBackend(schema)};
  for (const auto& scene : scenes) {
    const auto r = analyze(extract_scene_features(scene, schema), backend);
    r.validate();
  }
}

TEST_CASE("report json dump carries all fields", "[semantics]") {
  RngStream rng(5);
  const auto r = random_report(rng);
  const auto j = r.to_json();
  CHECK(j["congestion_level"].get<double>() == r.congestion_level);
  CHECK(j["temporal_profile"].size() == kTemporalProfileLen);
  CHECK(j.contains("incident"));
}
