// Trajectory-prediction agent. The default maneuver predictor rolls out a
// deterministic hypothesis set (keep-lane CV/CA, braking, lane changes, ...)
// as kinematic profiles; decoded semantics modulate target speeds and weights
// and neighbor predictions prune conflicting hypotheses. An LLM predictor is
// optional and falls back to the maneuver predictor.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "semx/llm.hpp"
#include "semx/rng.hpp"
#include "semx/schema.hpp"
#include "semx/semantics.hpp"
#include "semx/types.hpp"

namespace semx {

struct Candidate {
  std::vector<TrackPoint> points;  // on the clip's future grid
  double weight = 0.0;
  int hypothesis_id = 0;
  std::string label;
};

struct CandidateSet {
  std::vector<Candidate> candidates;
  std::string provenance;

  std::vector<std::vector<TrackPoint>> trajectories() const {
    std::vector<std::vector<TrackPoint>> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(c.points);
    return out;
  }

  void validate() const {
    if (candidates.empty()) throw StateError("candidate set is empty");
    double sum = 0.0;
    for (const auto& c : candidates) {
      if (c.weight < 0.0) throw StateError("negative candidate weight");
      sum += c.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw StateError("candidate weights sum to " + std::to_string(sum));
  }
};

enum class PredictorKind { cv, maneuver, llm };

inline const char* predictor_kind_name(PredictorKind k) {
  switch (k) {
    case PredictorKind::cv: return "cv";
    case PredictorKind::maneuver: return "maneuver";
    case PredictorKind::llm: return "llm";
  }
  return "?";
}

struct PredictorConfig {
  PredictorKind kind = PredictorKind::maneuver;
  int k = 10;
  double safety_gap_m = 2.0;             // neighbor separation below which a hypothesis is pruned
  double congestion_speed_factor = 0.7;  // target scale at full congestion
  double lane_width_m = 3.7;
  double speed_cap_mps = 45.0;
  double approach_accel_mps2 = 3.0;  // accel limit once a report retargets speeds

  void validate() const {
    if (k < 1) throw ConfigError("predictor: K must be >= 1");
    if (safety_gap_m < 0 || lane_width_m <= 0 || speed_cap_mps <= 0)
      throw ConfigError("predictor: invalid geometry/speed parameters");
    if (congestion_speed_factor < 0 || congestion_speed_factor > 1)
      throw ConfigError("predictor: congestion_speed_factor out of [0,1]");
  }

  // Stable fingerprint of the configuration, carried in every candidate
  // set's provenance.
  std::string config_hash() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s|%d|%.9g|%.9g|%.9g|%.9g|%.9g",
                  predictor_kind_name(kind), k, safety_gap_m, congestion_speed_factor,
                  lane_width_m, speed_cap_mps, approach_accel_mps2);
    char out[20];
    std::snprintf(out, sizeof(out), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(buf)));
    return out;
  }

  std::string provenance() const {
    return std::string(predictor_kind_name(kind)) + ":" + config_hash();
  }
};

struct NeighborPrediction {
  std::int64_t vehicle_id = 0;
  std::vector<TrackPoint> points;
};

// Least-squares velocity over the trailing `window` samples.
inline std::pair<double, double> ls_velocity(std::span<const TrackPoint> pts, int window = 5) {
  const int n = static_cast<int>(pts.size());
  const int w = std::min(window, n);
  if (w < 2) return {0.0, 0.0};
  double tm = 0, xm = 0, ym = 0;
  for (int i = n - w; i < n; ++i) {
    tm += pts[static_cast<std::size_t>(i)].t;
    xm += pts[static_cast<std::size_t>(i)].x;
    ym += pts[static_cast<std::size_t>(i)].y;
  }
  tm /= w;
  xm /= w;
  ym /= w;
  double stt = 0, stx = 0, sty = 0;
  for (int i = n - w; i < n; ++i) {
    const double dt = pts[static_cast<std::size_t>(i)].t - tm;
    stt += dt * dt;
    stx += dt * (pts[static_cast<std::size_t>(i)].x - xm);
    sty += dt * (pts[static_cast<std::size_t>(i)].y - ym);
  }
  return {stx / stt, sty / stt};
}

// Trailing-window least-squares slope of the speed series (CA estimate).
inline double ls_accel(std::span<const TrackPoint> pts, int window = 10) {
  const int n = static_cast<int>(pts.size());
  const int w = std::min(window, n - 1);
  if (w < 2) return 0.0;
  // speeds from backward differences over the trailing window
  std::vector<double> sp(static_cast<std::size_t>(w));
  for (int i = 0; i < w; ++i) {
    const auto& a = pts[static_cast<std::size_t>(n - w + i - 1)];
    const auto& b = pts[static_cast<std::size_t>(n - w + i)];
    sp[static_cast<std::size_t>(i)] = std::hypot(b.x - a.x, b.y - a.y) / kSampleDt;
  }
  double tm = 0, sm = 0;
  for (int i = 0; i < w; ++i) {
    tm += i * kSampleDt;
    sm += sp[static_cast<std::size_t>(i)];
  }
  tm /= w;
  sm /= w;
  double stt = 0, sts = 0;
  for (int i = 0; i < w; ++i) {
    const double dt = i * kSampleDt - tm;
    stt += dt * dt;
    sts += dt * (sp[static_cast<std::size_t>(i)] - sm);
  }
  return sts / stt;
}

// Constant-velocity baseline: linear extrapolation at the least-squares
// velocity of the last 5 samples.
inline std::vector<TrackPoint> predict_cv(std::span<const TrackPoint> history,
                                          int horizon = kFutureLen) {
  if (history.size() < 2) throw ShapeError("predict_cv: history needs at least 2 points");
  const auto [vx, vy] = ls_velocity(history, 5);
  const TrackPoint& last = history.back();
  std::vector<TrackPoint> out(static_cast<std::size_t>(horizon));
  for (int s = 1; s <= horizon; ++s) {
    TrackPoint p;
    p.vehicle_id = last.vehicle_id;
    p.t = last.t + s * kSampleDt;
    p.x = last.x + vx * (s * kSampleDt);
    p.y = last.y + vy * (s * kSampleDt);
    out[static_cast<std::size_t>(s - 1)] = p;
  }
  return out;
}

namespace detail {

struct Hypothesis {
  int id;
  const char* label;
  double weight;
  double target_speed;
  double accel_limit;   // <= 0 means instantaneous (closed-form CV shape)
  double lat_offset = 0.0;
  double lat_duration = 3.0;
  bool brake_family = false;
};

inline std::vector<TrackPoint> rollout(std::span<const TrackPoint> history, double v0,
                                       double ux, double uy, const Hypothesis& hyp,
                                       const PredictorConfig& cfg, int horizon) {
  const TrackPoint& last = history.back();
  std::vector<TrackPoint> out(static_cast<std::size_t>(horizon));
  double v = v0;
  double along = 0.0;
  for (int s = 1; s <= horizon; ++s) {
    if (hyp.accel_limit <= 0.0) {
      v = std::clamp(hyp.target_speed, 0.0, cfg.speed_cap_mps);
    } else {
      const double dv = std::clamp(hyp.target_speed - v, -hyp.accel_limit * kSampleDt,
                                   hyp.accel_limit * kSampleDt);
      v = std::clamp(v + dv, 0.0, cfg.speed_cap_mps);
    }
    along += v * kSampleDt;
    const double u = (s * kSampleDt) / hyp.lat_duration;
    const double lat = hyp.lat_offset * ((u >= 1.0) ? 1.0 : (u <= 0.0 ? 0.0 : u * u * (3 - 2 * u)));
    TrackPoint p;
    p.vehicle_id = last.vehicle_id;
    p.t = last.t + s * kSampleDt;
    p.x = last.x + ux * along + lat;
    p.y = last.y + uy * along;
    out[static_cast<std::size_t>(s - 1)] = p;
  }
  return out;
}

inline double min_separation(const std::vector<TrackPoint>& a,
                             const std::vector<TrackPoint>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < n; ++s)
    best = std::min(best, std::hypot(a[s].x - b[s].x, a[s].y - b[s].y));
  return best;
}

}  // namespace detail

// Fuses local history with whatever decoded context is wired in. Absent
// optional inputs shrink the hypothesis set / skip modulation, nothing else.
inline CandidateSet predict_fused(std::span<const TrackPoint> history,
                                  const FeatureVector* features, const FeatureSchema* schema,
                                  const SemanticReport* report,
                                  const std::vector<NeighborPrediction>* neighbor_preds,
                                  const PredictorConfig& cfg, RngStream& rng,
                                  int horizon = kFutureLen) {
  cfg.validate();
  if (history.size() < 2) throw ShapeError("predict_fused: history needs at least 2 points");

  if (cfg.kind == PredictorKind::cv) {
    CandidateSet set;
    auto traj = predict_cv(history, horizon);
    for (int i = 0; i < cfg.k; ++i)
      set.candidates.push_back(Candidate{traj, 1.0 / cfg.k, 0, "cv"});
    set.provenance = cfg.provenance();
    return set;
  }

  const auto [vx, vy] = ls_velocity(history, 5);
  const double v0 = std::hypot(vx, vy);
  double ux = 0.0, uy = 1.0;
  if (v0 > 1e-9) {
    ux = vx / v0;
    uy = vy / v0;
  }
  const double a_hat = ls_accel(history, 10);

  // history mean speed from successive displacements
  double hist_speed = 0.0;
  for (std::size_t i = 1; i < history.size(); ++i)
    hist_speed += std::hypot(history[i].x - history[i - 1].x, history[i].y - history[i - 1].y);
  hist_speed /= (static_cast<double>(history.size()) - 1.0) * kSampleDt;

  const double cap = cfg.speed_cap_mps;
  std::vector<detail::Hypothesis> hyps = {
      {0, "keep_lane_cv", 0.26, v0, -1.0},
      {1, "keep_lane_ca", 0.18, std::clamp(v0 + a_hat * horizon * kSampleDt, 0.0, cap),
       std::max(0.05, std::abs(a_hat))},
      {2, "coast", 0.07, 0.8 * v0, 1.0},
      {3, "brake_mild", 0.08, 0.5 * v0, 2.0, 0.0, 3.0, true},
      {4, "brake_hard", 0.05, 0.0, 4.0, 0.0, 3.0, true},
      {5, "stop", 0.04, 0.0, 2.5, 0.0, 3.0, true},
      {6, "accel_mild", 0.07, std::min(v0 + 5.0, cap), 1.0},
      {7, "accel_strong", 0.04, std::min(v0 + 10.0, cap), 2.0},
      {8, "lane_change_left", 0.08, v0, -1.0, -cfg.lane_width_m},
      {9, "lane_change_right", 0.08, v0, -1.0, cfg.lane_width_m},
  };

  if (features != nullptr && schema != nullptr) {
    const std::string name =
        (schema->kind == SchemaKind::scene) ? "scene.mean_speed" : "ego.mean_speed";
    const int slot = schema->require(name);
    const double v_scene =
        schema->denormalize(slot, features->values[static_cast<std::size_t>(slot)]);
    hyps.push_back({10, "follow_traffic", 0.20, std::clamp(v_scene, 0.0, cap), 2.0});
  }

  if (report != nullptr) {
    const double c = std::clamp(report->congestion_level, 0.0, 1.0);
    const double scale = 1.0 - cfg.congestion_speed_factor * c;
    for (auto& h : hyps) {
      h.target_speed *= scale;
      // instantaneous hypotheses become bounded approaches once retargeted
      if (c > 0.0 && h.accel_limit <= 0.0) h.accel_limit = cfg.approach_accel_mps2;
    }
    hyps.push_back({11, "congestion_cruise", 0.22, std::max(0.0, hist_speed * scale), 2.5});
    const bool anomaly = report->incident || report->closure || report->sudden_congestion;
    if (anomaly)
      for (auto& h : hyps)
        if (h.brake_family) h.weight *= 3.0;
  }

  // Roll out every hypothesis. Hypothesis 0 without report modulation keeps
  // the exact closed-form CV shape.
  struct Rolled {
    detail::Hypothesis hyp;
    std::vector<TrackPoint> points;
  };
  std::vector<Rolled> rolled;
  rolled.reserve(hyps.size());
  for (const auto& h : hyps) {
    if (h.id == 0 && h.accel_limit <= 0.0 && h.lat_offset == 0.0) {
      rolled.push_back({h, predict_cv(history, horizon)});
    } else {
      rolled.push_back({h, detail::rollout(history, v0, ux, uy, h, cfg, horizon)});
    }
  }

  // Prune hypotheses that come closer than the safety gap to any neighbor
  // candidate; if everything is pruned keep the best-separated hypothesis.
  if (neighbor_preds != nullptr && !neighbor_preds->empty()) {
    std::vector<Rolled> kept;
    double best_sep = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < rolled.size(); ++i) {
      double sep = std::numeric_limits<double>::infinity();
      for (const auto& nb : *neighbor_preds)
        sep = std::min(sep, detail::min_separation(rolled[i].points, nb.points));
      if (sep > best_sep) {
        best_sep = sep;
        best_idx = i;
      }
      if (sep >= cfg.safety_gap_m) kept.push_back(rolled[i]);
    }
    if (kept.empty()) kept.push_back(rolled[best_idx]);
    rolled = std::move(kept);
  }

  std::sort(rolled.begin(), rolled.end(), [](const Rolled& a, const Rolled& b) {
    if (a.hyp.weight != b.hyp.weight) return a.hyp.weight > b.hyp.weight;
    return a.hyp.id < b.hyp.id;
  });

  CandidateSet set;
  set.provenance = cfg.provenance();
  const int take = std::min<int>(cfg.k, static_cast<int>(rolled.size()));
  for (int i = 0; i < take; ++i)
    set.candidates.push_back(
        Candidate{rolled[static_cast<std::size_t>(i)].points, rolled[static_cast<std::size_t>(i)].hyp.weight,
                  rolled[static_cast<std::size_t>(i)].hyp.id, rolled[static_cast<std::size_t>(i)].hyp.label});

  // K beyond the hypothesis set: duplicate the best hypothesis with a
  // jittered lateral offset from the seeded stream.
  while (static_cast<int>(set.candidates.size()) < cfg.k) {
    Candidate dup = set.candidates.front();
    const double jitter = rng.uniform(-0.5, 0.5) * cfg.lane_width_m;
    for (auto& p : dup.points) p.x += jitter;
    dup.label = std::string(dup.label) + "+jitter";
    set.candidates.push_back(std::move(dup));
  }

  double wsum = 0.0;
  for (const auto& c : set.candidates) wsum += c.weight;
  for (auto& c : set.candidates) c.weight /= wsum;
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// LLM predictor
// ---------------------------------------------------------------------------

struct LlmPredictorConfig {
  LlmConfig llm;
  std::string prompt_template;  // slots: history_json, features_json, report_json, neighbors_json, k
};

struct LlmPredictOutcome {
  CandidateSet set;
  int substitutions = 0;  // malformed candidates replaced by maneuver ranks
  bool fell_back = false; // endpoint failure -> full predict_fused fallback
};

namespace detail {

inline nlohmann::json points_json(std::span<const TrackPoint> pts) {
  auto arr = nlohmann::json::array();
  for (const auto& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

inline std::optional<std::vector<TrackPoint>> parse_llm_candidate(const nlohmann::json& cand,
                                                                  const TrackPoint& last,
                                                                  int horizon) {
  if (!cand.is_array() || static_cast<int>(cand.size()) != horizon) return std::nullopt;
  std::vector<TrackPoint> pts(static_cast<std::size_t>(horizon));
  int s = 1;
  for (const auto& e : cand) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      return std::nullopt;
    TrackPoint p;
    p.vehicle_id = last.vehicle_id;
    p.t = last.t + s * kSampleDt;
    p.x = e[0].get<double>();
    p.y = e[1].get<double>();
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return std::nullopt;
    pts[static_cast<std::size_t>(s - 1)] = p;
    ++s;
  }
  return pts;
}

}  // namespace detail

// Structured-prompt LLM prediction with per-candidate validation. Malformed
// candidates are replaced rank-for-rank by the maneuver predictor's output.
inline LlmPredictOutcome predict_llm(std::span<const TrackPoint> history,
                                     const FeatureVector* features, const FeatureSchema* schema,
                                     const SemanticReport* report,
                                     const std::vector<NeighborPrediction>* neighbor_preds,
                                     const PredictorConfig& cfg, const LlmPredictorConfig& lcfg,
                                     RngStream& rng, int horizon = kFutureLen) {
  PredictorConfig fallback_cfg = cfg;
  fallback_cfg.kind = PredictorKind::maneuver;
  // The fallback must not depend on whether the LLM answered.
  RngStream fallback_rng = rng.fork(0xFA11BACC);
  CandidateSet fallback = predict_fused(history, features, schema, report, neighbor_preds,
                                        fallback_cfg, fallback_rng, horizon);

  nlohmann::json neighbors_json = nlohmann::json::array();
  if (neighbor_preds != nullptr)
    for (const auto& nb : *neighbor_preds)
      neighbors_json.push_back(
          {{"vehicle_id", nb.vehicle_id}, {"trajectory", detail::points_json(nb.points)}});

  const std::string prompt = render_template(
      lcfg.prompt_template,
      {{"history_json", detail::points_json(history).dump()},
       {"features_json", (features != nullptr && schema != nullptr)
                             ? semx::detail::feature_digest(*schema, *features)
                             : "null"},
       {"report_json", (report != nullptr) ? report->to_json().dump() : "null"},
       {"neighbors_json", neighbors_json.dump()},
       {"k", std::to_string(cfg.k)}});

  LlmPredictOutcome out;
  const auto text = llm_complete(lcfg.llm, prompt);
  if (!text.has_value()) {
    out.set = std::move(fallback);
    out.fell_back = true;
    return out;
  }
  const auto j = nlohmann::json::parse(*text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("candidates") ||
      !j["candidates"].is_array() || j["candidates"].empty()) {
    out.set = std::move(fallback);
    out.fell_back = true;
    out.substitutions = cfg.k;
    return out;
  }

  const auto& cands = j["candidates"];
  PredictorConfig llm_id = cfg;
  llm_id.kind = PredictorKind::llm;
  out.set.provenance = llm_id.provenance();
  for (int i = 0; i < cfg.k; ++i) {
    std::optional<std::vector<TrackPoint>> pts;
    if (i < static_cast<int>(cands.size()))
      pts = detail::parse_llm_candidate(cands[static_cast<std::size_t>(i)], history.back(), horizon);
    if (pts.has_value()) {
      out.set.candidates.push_back(Candidate{std::move(*pts), 1.0, i, "llm"});
    } else {
      const auto& sub = fallback.candidates[static_cast<std::size_t>(
          std::min<int>(i, static_cast<int>(fallback.candidates.size()) - 1))];
      out.set.candidates.push_back(Candidate{sub.points, 1.0, sub.hypothesis_id, sub.label});
      ++out.substitutions;
    }
  }
  for (auto& c : out.set.candidates) c.weight = 1.0 / cfg.k;
  out.set.validate();
  return out;
}

}  // namespace semx
