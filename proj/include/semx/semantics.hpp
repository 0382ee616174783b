// Semantic-analysis agent: feature vectors -> structured SemanticReport.
// The default backend is deterministic threshold rules; an HTTP LLM backend
// is optional and always validated, falling back to rules on any failure.
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "semx/llm.hpp"
#include "semx/schema.hpp"
#include "semx/types.hpp"

namespace semx {

inline constexpr int kReportDim = kFeatureDim;  // m_sr = m_fr by default
inline constexpr int kTemporalProfileLen = 10;

struct SemanticReport {
  bool incident = false;
  bool closure = false;
  bool sudden_congestion = false;
  double congestion_level = 0.0;  // [0,1]
  std::array<double, kTemporalProfileLen> temporal_profile{};  // relative flow speed, [0,1]
  double lane_change_rate = 0.0;      // [0,1]
  double intersection_density = 0.0;  // [0,1], zero on freeway data
  double segment_speed_ratio = 0.0;   // [0,1]
  std::string free_text;              // llm backend only, never serialized numerically

  void validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(congestion_level)) throw StateError("congestion_level out of [0,1]");
    if (!in01(lane_change_rate) || !in01(intersection_density) || !in01(segment_speed_ratio))
      throw StateError("report scalar out of [0,1]");
    for (double v : temporal_profile)
      if (!in01(v)) throw StateError("temporal_profile value out of [0,1]");
  }

  nlohmann::json to_json() const {
    return {{"incident", incident},
            {"closure", closure},
            {"sudden_congestion", sudden_congestion},
            {"congestion_level", congestion_level},
            {"temporal_profile", temporal_profile},
            {"lane_change_rate", lane_change_rate},
            {"intersection_density", intersection_density},
            {"segment_speed_ratio", segment_speed_ratio},
            {"free_text", free_text}};
  }
};

// Fixed numeric projection of a report: flags at +-1, scalars kept on their
// native [0,1] sub-range (so a default report is all-zero beyond the flag
// slots), zero-padded to kReportDim.
inline std::vector<double> serialize_report(const SemanticReport& report) {
  report.validate();
  std::vector<double> v(kReportDim, 0.0);
  v[0] = report.incident ? 1.0 : -1.0;
  v[1] = report.closure ? 1.0 : -1.0;
  v[2] = report.sudden_congestion ? 1.0 : -1.0;
  v[3] = report.congestion_level;
  for (int i = 0; i < kTemporalProfileLen; ++i)
    v[static_cast<std::size_t>(4 + i)] = report.temporal_profile[static_cast<std::size_t>(i)];
  v[14] = report.lane_change_rate;
  v[15] = report.intersection_density;
  v[16] = report.segment_speed_ratio;
  return v;
}

// Inverse of serialize_report on its image; out-of-range values clamped.
inline SemanticReport deserialize_report(const std::vector<double>& v) {
  if (static_cast<int>(v.size()) != kReportDim)
    throw ShapeError("report vector length " + std::to_string(v.size()) + ", expected " +
                     std::to_string(kReportDim));
  auto clamp01 = [](double x) { return std::clamp(x, 0.0, 1.0); };
  SemanticReport r;
  r.incident = v[0] > 0.0;
  r.closure = v[1] > 0.0;
  r.sudden_congestion = v[2] > 0.0;
  r.congestion_level = clamp01(v[3]);
  for (int i = 0; i < kTemporalProfileLen; ++i)
    r.temporal_profile[static_cast<std::size_t>(i)] = clamp01(v[static_cast<std::size_t>(4 + i)]);
  r.lane_change_rate = clamp01(v[14]);
  r.intersection_density = clamp01(v[15]);
  r.segment_speed_ratio = clamp01(v[16]);
  return r;
}

struct RulesConfig {
  double sudden_decel_mps2 = 2.5;  // decel that flags sudden congestion
  double speed_std_ref_mps = 2.0;  // reference sigma for the z-score rule
  double z_anomaly = 2.5;
  double stopped_speed_mps = 0.5;
  double min_moving_speed_mps = 5.0;
};

// Deterministic thresholded mapping from features to a report. All reads go
// through the schema so the same rules serve scene and vehicle vectors.
class RulesBackend {
 public:
  RulesBackend(FeatureSchema schema, RulesConfig cfg = {})
      : schema_(std::move(schema)), cfg_(cfg) {
    schema_.validate();
  }

  const FeatureSchema& schema() const { return schema_; }

  SemanticReport analyze(const FeatureVector& features) const {
    if (features.schema_version != schema_.version)
      throw ConfigError("rules backend: feature schema " + features.schema_version +
                        " does not match backend schema " + schema_.version);
    const bool scene = schema_.kind == SchemaKind::scene;
    const std::string p = scene ? "scene." : "ego.";

    auto norm01 = [&](const std::string& name) {
      return (features.values[static_cast<std::size_t>(schema_.require(name))] + 1.0) * 0.5;
    };
    auto raw = [&](const std::string& name) {
      const int i = schema_.require(name);
      return schema_.denormalize(i, features.values[static_cast<std::size_t>(i)]);
    };

    SemanticReport r;
    const double mean01 = norm01(p + "mean_speed");
    r.congestion_level = std::clamp(1.0 - mean01, 0.0, 1.0);
    r.segment_speed_ratio = std::clamp(mean01, 0.0, 1.0);
    r.lane_change_rate = scene ? std::clamp(raw("scene.lane_change_rate"), 0.0, 1.0)
                               : (std::abs(raw("ego.lateral_drift")) > kLaneChangeDrift ? 1.0 : 0.0);
    r.intersection_density = 0.0;

    const double v_free = schema_.entries[static_cast<std::size_t>(schema_.require(p + "mean_speed"))].max;
    for (int w = 0; w < kTemporalProfileLen; ++w) {
      r.temporal_profile[static_cast<std::size_t>(w)] =
          std::clamp(raw(p + "speed_profile." + std::to_string(w)) / v_free, 0.0, 1.0);
    }

    // Anomalies. Sudden congestion: any vehicle braking hard, or pooled speed
    // spread beyond the z threshold.
    double max_decel = 0.0;
    double min_speed = raw(p + "mean_speed");
    int present = 1;
    if (scene) {
      present = static_cast<int>(std::lround(raw("scene.vehicle_count")));
      const int capacity = std::min(present, kSceneVehicleCapacity);
      for (int v = 0; v < capacity; ++v) {
        const std::string slot = "veh" + std::to_string(v) + ".";
        max_decel = std::max(max_decel, raw(slot + "decel_max"));
        min_speed = std::min(min_speed, raw(slot + "mean_speed"));
      }
    } else {
      max_decel = raw("ego.decel_max");
      min_speed = raw("ego.mean_speed");
    }
    const double speed_std = raw(p + "std_speed");
    r.sudden_congestion = max_decel >= cfg_.sudden_decel_mps2 ||
                          speed_std > cfg_.z_anomaly * cfg_.speed_std_ref_mps;
    const double mean_speed = raw(p + "mean_speed");
    r.incident = min_speed < cfg_.stopped_speed_mps && mean_speed > cfg_.min_moving_speed_mps;
    r.closure = present >= 2 && mean_speed < cfg_.stopped_speed_mps;
    return r;
  }

 private:
  FeatureSchema schema_;
  RulesConfig cfg_;
};

enum class BackendKind { rules, llm };

struct BackendCounters {
  std::atomic<long> llm_requests{0};
  std::atomic<long> llm_fallbacks{0};
};

// Pluggable semantic backend. The rules backend is always present and serves
// as the fallback for the llm kind.
struct SemanticBackend {
  BackendKind kind = BackendKind::rules;
  RulesBackend rules;
  std::optional<LlmConfig> llm;
  std::string prompt_template;  // rendered with {{features_json}}
  std::shared_ptr<BackendCounters> counters = std::make_shared<BackendCounters>();

  explicit SemanticBackend(RulesBackend r) : rules(std::move(r)) {}
  SemanticBackend(RulesBackend r, LlmConfig llm_cfg, std::string tmpl)
      : kind(BackendKind::llm), rules(std::move(r)), llm(std::move(llm_cfg)),
        prompt_template(std::move(tmpl)) {}
};

namespace detail {

// Strict validation of an LLM response document; any miss rejects the reply.
inline std::optional<SemanticReport> parse_llm_report(const std::string& text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  if (!j.contains("congestion_level") || !j["congestion_level"].is_number()) return std::nullopt;
  SemanticReport r;
  auto get01 = [&](const char* key, double& dst) -> bool {
    if (!j.contains(key)) return true;
    if (!j[key].is_number()) return false;
    const double v = j[key].get<double>();
    if (v < 0.0 || v > 1.0) return false;
    dst = v;
    return true;
  };
  auto get_flag = [&](const char* key, bool& dst) -> bool {
    if (!j.contains(key)) return true;
    if (!j[key].is_boolean()) return false;
    dst = j[key].get<bool>();
    return true;
  };
  if (!get01("congestion_level", r.congestion_level)) return std::nullopt;
  if (!get_flag("incident", r.incident) || !get_flag("closure", r.closure) ||
      !get_flag("sudden_congestion", r.sudden_congestion))
    return std::nullopt;
  if (!get01("lane_change_rate", r.lane_change_rate)) return std::nullopt;
  if (!get01("intersection_density", r.intersection_density)) return std::nullopt;
  if (!get01("segment_speed_ratio", r.segment_speed_ratio)) return std::nullopt;
  if (j.contains("temporal_profile")) {
    if (!j["temporal_profile"].is_array() ||
        j["temporal_profile"].size() > kTemporalProfileLen)
      return std::nullopt;
    std::size_t i = 0;
    for (const auto& e : j["temporal_profile"]) {
      if (!e.is_number()) return std::nullopt;
      const double v = e.get<double>();
      if (v < 0.0 || v > 1.0) return std::nullopt;
      r.temporal_profile[i++] = v;
    }
  }
  if (j.contains("comment") && j["comment"].is_string())
    r.free_text = j["comment"].get<std::string>();
  return r;
}

// Compact named-feature digest embedded into LLM prompts: scalar entries
// only, denormalized to source units.
inline std::string feature_digest(const FeatureSchema& schema, const FeatureVector& fv) {
  nlohmann::json j;
  for (int i = 0; i < schema.width(); ++i) {
    const auto& e = schema.entries[static_cast<std::size_t>(i)];
    if (e.extractor == "zero") continue;
    if (e.extractor.find("series") != std::string::npos) continue;
    if (e.extractor.rfind("veh.", 0) == 0 && e.index > 2) continue;  // first slots only
    j[e.name] = schema.denormalize(i, fv.values[static_cast<std::size_t>(i)]);
  }
  return j.dump();
}

}  // namespace detail

// One report per line.
inline void write_reports_jsonl(const std::vector<SemanticReport>& reports,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open report dump for writing: " + path);
  for (const auto& r : reports) out << r.to_json().dump() << '\n';
}

// Total on valid features: the llm path falls back to rules on unreachable
// endpoints or unparseable replies, counting each fallback.
inline SemanticReport analyze(const FeatureVector& features, const SemanticBackend& backend) {
  features.validate();
  if (backend.kind == BackendKind::llm && backend.llm.has_value()) {
    backend.counters->llm_requests.fetch_add(1, std::memory_order_relaxed);
    const std::string prompt = render_template(
        backend.prompt_template,
        {{"features_json", detail::feature_digest(backend.rules.schema(), features)}});
    if (auto text = llm_complete(*backend.llm, prompt)) {
      if (auto report = detail::parse_llm_report(*text)) return *report;
    }
    backend.counters->llm_fallbacks.fetch_add(1, std::memory_order_relaxed);
  }
  return backend.rules.analyze(features);
}

}  // namespace semx
