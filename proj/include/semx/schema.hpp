// Feature schema: an explicit, versioned description of what fills each of
// the 384 feature slots and how raw values map into [-1, 1]. Normalization
// bounds are part of the schema so a physical value always maps to the same
// code regardless of the data it appears in.
#pragma once

#include <fstream>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "semx/types.hpp"

namespace semx {

inline constexpr int kFeatureDim = 384;
inline constexpr int kSceneVehicleCapacity = 22;
inline constexpr int kSpeedProfileBins = 10;

enum class SchemaKind { scene, vehicle };

struct FeatureSpec {
  std::string name;       // unique
  std::string extractor;  // extractor id, see features.hpp
  int index = 0;          // vehicle slot (scene schema) or series position
  int subindex = 0;       // position within a series / per-vehicle field id
  double min = -1.0;      // raw-unit normalization bounds
  double max = 1.0;
};

struct FeatureSchema {
  std::string version;
  SchemaKind kind = SchemaKind::scene;
  std::vector<FeatureSpec> entries;

  int width() const { return static_cast<int>(entries.size()); }

  void validate() const {
    if (width() != kFeatureDim)
      throw SchemaError("schema width " + std::to_string(width()) + ", expected " +
                        std::to_string(kFeatureDim));
    std::unordered_map<std::string, int> seen;
    for (int i = 0; i < width(); ++i) {
      const auto& e = entries[static_cast<std::size_t>(i)];
      if (e.max <= e.min) throw SchemaError("schema entry " + e.name + ": max <= min");
      if (!seen.emplace(e.name, i).second)
        throw SchemaError("schema entry name not unique: " + e.name);
    }
  }

  int find(const std::string& name) const {
    for (int i = 0; i < width(); ++i)
      if (entries[static_cast<std::size_t>(i)].name == name) return i;
    return -1;
  }

  int require(const std::string& name) const {
    const int i = find(name);
    if (i < 0) throw SchemaError("schema has no entry named " + name);
    return i;
  }

  double normalize(int slot, double raw) const {
    const auto& e = entries[static_cast<std::size_t>(slot)];
    return 2.0 * (raw - e.min) / (e.max - e.min) - 1.0;
  }

  double denormalize(int slot, double value) const {
    const auto& e = entries[static_cast<std::size_t>(slot)];
    return e.min + (value + 1.0) * 0.5 * (e.max - e.min);
  }

  static FeatureSchema builtin_scene();
  static FeatureSchema builtin_vehicle();
  static FeatureSchema builtin(const std::string& name);

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);
  static FeatureSchema load(const std::string& path);
  void save(const std::string& path) const;
};

namespace detail {

inline void push(FeatureSchema& s, const std::string& name, const std::string& extractor,
                 int index, int subindex, double mn, double mx) {
  s.entries.push_back(FeatureSpec{name, extractor, index, subindex, mn, mx});
}

}  // namespace detail

inline FeatureSchema FeatureSchema::builtin_scene() {
  constexpr double pi = std::numbers::pi;
  FeatureSchema s;
  s.version = "scene_v1";
  s.kind = SchemaKind::scene;
  detail::push(s, "scene.vehicle_count", "scene.count", 0, 0, 0.0, kSceneVehicleCapacity);
  detail::push(s, "scene.mean_speed", "scene.mean_speed", 0, 0, 0.0, 40.0);
  detail::push(s, "scene.std_speed", "scene.std_speed", 0, 0, 0.0, 20.0);
  detail::push(s, "scene.mean_accel", "scene.mean_accel", 0, 0, -8.0, 8.0);
  detail::push(s, "scene.std_accel", "scene.std_accel", 0, 0, 0.0, 8.0);
  detail::push(s, "scene.density", "scene.density", 0, 0, 0.0, 0.5);
  detail::push(s, "scene.mean_headway", "scene.mean_headway", 0, 0, 0.0, 250.0);
  detail::push(s, "scene.min_headway", "scene.min_headway", 0, 0, 0.0, 250.0);
  detail::push(s, "scene.lane_change_rate", "scene.lane_change_rate", 0, 0, 0.0, 1.0);
  detail::push(s, "scene.extent_x", "scene.extent_x", 0, 0, 0.0, 30.0);
  detail::push(s, "scene.extent_y", "scene.extent_y", 0, 0, 0.0, 500.0);
  detail::push(s, "scene.mean_heading", "scene.mean_heading", 0, 0, -pi, pi);
  for (int w = 0; w < kSpeedProfileBins; ++w)
    detail::push(s, "scene.speed_profile." + std::to_string(w), "scene.speed_profile", 0, w, 0.0,
                 40.0);
  for (int r = 0; r < 10; ++r)
    detail::push(s, "scene.reserved." + std::to_string(r), "zero", 0, r, 0.0, 1.0);

  static const struct {
    const char* field;
    double mn, mx;
  } veh_fields[] = {
      {"rel_x", -30.0, 30.0},      {"rel_y", -250.0, 250.0},  {"mean_vx", -15.0, 15.0},
      {"mean_vy", -40.0, 40.0},    {"mean_speed", 0.0, 40.0}, {"std_speed", 0.0, 20.0},
      {"mean_accel", -8.0, 8.0},   {"std_accel", 0.0, 8.0},   {"final_speed", 0.0, 40.0},
      {"heading", -pi, pi},        {"heading_rate", -2.0, 2.0}, {"lateral_drift", -10.0, 10.0},
      {"path_length", 0.0, 150.0}, {"min_lead_gap", 0.0, 250.0}, {"decel_max", 0.0, 10.0},
      {"present", 0.0, 1.0},
  };
  for (int v = 0; v < kSceneVehicleCapacity; ++v) {
    for (int f = 0; f < 16; ++f) {
      const auto& vf = veh_fields[f];
      detail::push(s, "veh" + std::to_string(v) + "." + vf.field,
                   std::string("veh.") + vf.field, v, f, vf.mn, vf.mx);
    }
  }
  s.validate();
  return s;
}

inline FeatureSchema FeatureSchema::builtin_vehicle() {
  constexpr double pi = std::numbers::pi;
  FeatureSchema s;
  s.version = "vehicle_v1";
  s.kind = SchemaKind::vehicle;
  detail::push(s, "ego.mean_speed", "ego.mean_speed", 0, 0, 0.0, 40.0);
  detail::push(s, "ego.std_speed", "ego.std_speed", 0, 0, 0.0, 20.0);
  detail::push(s, "ego.mean_accel", "ego.mean_accel", 0, 0, -8.0, 8.0);
  detail::push(s, "ego.std_accel", "ego.std_accel", 0, 0, 0.0, 8.0);
  detail::push(s, "ego.mean_vx", "ego.mean_vx", 0, 0, -15.0, 15.0);
  detail::push(s, "ego.mean_vy", "ego.mean_vy", 0, 0, -40.0, 40.0);
  detail::push(s, "ego.final_speed", "ego.final_speed", 0, 0, 0.0, 40.0);
  detail::push(s, "ego.heading", "ego.heading", 0, 0, -pi, pi);
  detail::push(s, "ego.heading_rate", "ego.heading_rate", 0, 0, -2.0, 2.0);
  detail::push(s, "ego.lateral_drift", "ego.lateral_drift", 0, 0, -10.0, 10.0);
  detail::push(s, "ego.path_length", "ego.path_length", 0, 0, 0.0, 150.0);
  detail::push(s, "ego.decel_max", "ego.decel_max", 0, 0, 0.0, 10.0);
  for (int w = 0; w < kSpeedProfileBins; ++w)
    detail::push(s, "ego.speed_profile." + std::to_string(w), "ego.speed_profile", 0, w, 0.0,
                 40.0);
  for (int i = 0; i < kHistoryLen; ++i)
    detail::push(s, "ego.rel_x." + std::to_string(i), "ego.rel_x_series", i, 0, -30.0, 30.0);
  for (int i = 0; i < kHistoryLen; ++i)
    detail::push(s, "ego.rel_y." + std::to_string(i), "ego.rel_y_series", i, 0, -150.0, 50.0);
  for (int i = 0; i < kHistoryLen; ++i)
    detail::push(s, "ego.speed." + std::to_string(i), "ego.speed_series", i, 0, 0.0, 40.0);
  for (int i = 0; i < kHistoryLen; ++i)
    detail::push(s, "ego.accel." + std::to_string(i), "ego.accel_series", i, 0, -8.0, 8.0);
  for (int i = 0; i < kHistoryLen; ++i)
    detail::push(s, "ego.heading." + std::to_string(i), "ego.heading_series", i, 0, -pi, pi);
  int r = 0;
  while (s.width() < kFeatureDim)
    detail::push(s, "ego.reserved." + std::to_string(r++), "zero", 0, 0, 0.0, 1.0);
  s.validate();
  return s;
}

inline FeatureSchema FeatureSchema::builtin(const std::string& name) {
  if (name == "scene_v1") return builtin_scene();
  if (name == "vehicle_v1") return builtin_vehicle();
  throw SchemaError("unknown builtin schema: " + name);
}

inline nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json j;
  j["version"] = version;
  j["kind"] = (kind == SchemaKind::scene) ? "scene" : "vehicle";
  auto arr = nlohmann::json::array();
  for (const auto& e : entries) {
    arr.push_back({{"name", e.name},
                   {"extractor", e.extractor},
                   {"index", e.index},
                   {"subindex", e.subindex},
                   {"min", e.min},
                   {"max", e.max}});
  }
  j["entries"] = arr;
  return j;
}

inline FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  FeatureSchema s;
  s.version = j.at("version").get<std::string>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "scene")
    s.kind = SchemaKind::scene;
  else if (kind == "vehicle")
    s.kind = SchemaKind::vehicle;
  else
    throw SchemaError("schema kind must be 'scene' or 'vehicle', got " + kind);
  for (const auto& e : j.at("entries")) {
    FeatureSpec f;
    f.name = e.at("name").get<std::string>();
    f.extractor = e.at("extractor").get<std::string>();
    f.index = e.value("index", 0);
    f.subindex = e.value("subindex", 0);
    f.min = e.at("min").get<double>();
    f.max = e.at("max").get<double>();
    s.entries.push_back(std::move(f));
  }
  s.validate();
  return s;
}

inline FeatureSchema FeatureSchema::load(const std::string& path) {
  if (path.rfind("builtin:", 0) == 0) return builtin(path.substr(8));
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

inline void FeatureSchema::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot open schema file for writing: " + path);
  out << to_json().dump(2) << '\n';
}

struct FeatureVector {
  std::vector<double> values;  // kFeatureDim, each in [-1, 1]
  std::string schema_version;

  void validate() const {
    if (static_cast<int>(values.size()) != kFeatureDim)
      throw ShapeError("feature vector length " + std::to_string(values.size()));
    for (double v : values)
      if (!(v >= -1.0 && v <= 1.0))
        throw StateError("feature value out of [-1,1]: " + std::to_string(v));
  }
};

}  // namespace semx
