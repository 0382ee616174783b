// Feature-extraction agent: schema-driven motion, spatiotemporal and
// statistical features over clip histories. Derivatives use second-order
// differences (central inside, three-point one-sided at the ends);
// statistics are population moments.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "semx/schema.hpp"
#include "semx/types.hpp"

namespace semx {

inline constexpr double kNoLeadGap = 250.0;       // headway when no lead vehicle
inline constexpr double kLaneChangeDrift = 1.85;  // half a default lane width

struct ExtractionStats {
  long clamped = 0;  // values outside [-1,1] after normalization
};

// Finite-difference motion descriptors for one uniformly sampled track.
struct MotionProfile {
  std::vector<double> vx, vy, speed, accel, heading, heading_rate;
  double mean_vx = 0, mean_vy = 0;
  double mean_speed = 0, std_speed = 0;
  double mean_accel = 0, std_accel = 0;
  double final_speed = 0;
  double heading_mean = 0;   // heading of the mean velocity
  double heading_rate_mean = 0;
  double lateral_drift = 0;
  double path_length = 0;
  double decel_max = 0;
};

namespace detail {

// Second-order differences throughout: central inside, one-sided three-point
// stencils at the ends (exact for quadratic series).
inline void central_diff(std::span<const double> f, double dt, std::vector<double>& out) {
  const std::size_t n = f.size();
  out.resize(n);
  if (n < 2) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  if (n == 2) {
    out[0] = out[1] = (f[1] - f[0]) / dt;
    return;
  }
  out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt);
  for (std::size_t i = 1; i + 1 < n; ++i) out[i] = (f[i + 1] - f[i - 1]) / (2.0 * dt);
  out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dt);
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double std_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

inline MotionProfile motion_profile(std::span<const TrackPoint> pts) {
  MotionProfile mp;
  const std::size_t n = pts.size();
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = pts[i].x;
    ys[i] = pts[i].y;
  }
  detail::central_diff(xs, kSampleDt, mp.vx);
  detail::central_diff(ys, kSampleDt, mp.vy);
  mp.speed.resize(n);
  mp.heading.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    mp.speed[i] = std::hypot(mp.vx[i], mp.vy[i]);
    // 0 = straight down the road (+y), positive toward +x
    mp.heading[i] = (mp.speed[i] > 1e-12) ? std::atan2(mp.vx[i], mp.vy[i]) : 0.0;
  }
  detail::central_diff(mp.speed, kSampleDt, mp.accel);
  detail::central_diff(mp.heading, kSampleDt, mp.heading_rate);

  mp.mean_vx = detail::mean_of(mp.vx);
  mp.mean_vy = detail::mean_of(mp.vy);
  mp.mean_speed = detail::mean_of(mp.speed);
  mp.std_speed = detail::std_of(mp.speed);
  mp.mean_accel = detail::mean_of(mp.accel);
  mp.std_accel = detail::std_of(mp.accel);
  mp.final_speed = n ? mp.speed[n - 1] : 0.0;
  const double mvnorm = std::hypot(mp.mean_vx, mp.mean_vy);
  mp.heading_mean = (mvnorm > 1e-12) ? std::atan2(mp.mean_vx, mp.mean_vy) : 0.0;
  mp.heading_rate_mean = detail::mean_of(mp.heading_rate);
  if (n >= 2) {
    mp.lateral_drift = xs[n - 1] - xs[0];
    for (std::size_t i = 1; i < n; ++i)
      mp.path_length += std::hypot(xs[i] - xs[i - 1], ys[i] - ys[i - 1]);
  }
  for (double a : mp.accel) mp.decel_max = std::max(mp.decel_max, -a);
  mp.decel_max = std::max(0.0, mp.decel_max);
  return mp;
}

namespace detail {

// Precomputed per-scene quantities shared by the slot extractors.
struct SceneContext {
  std::vector<const Clip*> vehicles;  // sorted by vehicle_id (scene order)
  std::vector<MotionProfile> profiles;
  std::vector<double> lead_gap;  // per vehicle, kNoLeadGap when none
  double anchor_x = 0, anchor_y = 0;
  double extent_x = 0, extent_y = 0;
  double density = 0;
  double mean_speed = 0, std_speed = 0, mean_accel = 0, std_accel = 0;
  double lane_change_rate = 0;
  double mean_heading = 0;
  std::vector<double> speed_profile;  // kSpeedProfileBins
};

inline SceneContext build_scene_context(const Scene& scene) {
  SceneContext ctx;
  for (const auto& c : scene.clips) {
    if (static_cast<int>(c.history.size()) != kHistoryLen)
      throw ShapeError("scene clip history length " + std::to_string(c.history.size()) +
                       ", expected " + std::to_string(kHistoryLen));
    ctx.vehicles.push_back(&c);
    ctx.profiles.push_back(motion_profile(c.history));
  }
  const std::size_t nv = ctx.vehicles.size();

  double sx = 0, sy = 0;
  double min_x = std::numeric_limits<double>::max(), max_x = std::numeric_limits<double>::lowest();
  double min_y = min_x, max_y = max_x;
  for (const Clip* c : ctx.vehicles) {
    const auto& p = c->history.back();
    sx += p.x;
    sy += p.y;
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  ctx.anchor_x = sx / static_cast<double>(nv);
  ctx.anchor_y = sy / static_cast<double>(nv);
  ctx.extent_x = max_x - min_x;
  ctx.extent_y = max_y - min_y;
  ctx.density = static_cast<double>(nv) / (ctx.extent_y + 10.0);

  // Lead gap: nearest vehicle ahead in y within 2 m laterally, at the last
  // history timestamp.
  ctx.lead_gap.assign(nv, kNoLeadGap);
  for (std::size_t i = 0; i < nv; ++i) {
    const auto& pi = ctx.vehicles[i]->history.back();
    for (std::size_t j = 0; j < nv; ++j) {
      if (i == j) continue;
      const auto& pj = ctx.vehicles[j]->history.back();
      if (std::abs(pj.x - pi.x) <= 2.0 && pj.y > pi.y)
        ctx.lead_gap[i] = std::min(ctx.lead_gap[i], pj.y - pi.y);
    }
  }

  std::vector<double> all_speeds, all_accels;
  all_speeds.reserve(nv * kHistoryLen);
  all_accels.reserve(nv * kHistoryLen);
  int lane_changers = 0;
  double heading_sum = 0;
  for (std::size_t i = 0; i < nv; ++i) {
    const auto& mp = ctx.profiles[i];
    all_speeds.insert(all_speeds.end(), mp.speed.begin(), mp.speed.end());
    all_accels.insert(all_accels.end(), mp.accel.begin(), mp.accel.end());
    if (std::abs(mp.lateral_drift) > kLaneChangeDrift) ++lane_changers;
    heading_sum += mp.heading_mean;
  }
  ctx.mean_speed = mean_of(all_speeds);
  ctx.std_speed = std_of(all_speeds);
  ctx.mean_accel = mean_of(all_accels);
  ctx.std_accel = std_of(all_accels);
  ctx.lane_change_rate = static_cast<double>(lane_changers) / static_cast<double>(nv);
  ctx.mean_heading = heading_sum / static_cast<double>(nv);

  ctx.speed_profile.assign(kSpeedProfileBins, 0.0);
  const int per_bin = kHistoryLen / kSpeedProfileBins;
  for (int w = 0; w < kSpeedProfileBins; ++w) {
    double s = 0;
    for (std::size_t i = 0; i < nv; ++i)
      for (int k = 0; k < per_bin; ++k)
        s += ctx.profiles[i].speed[static_cast<std::size_t>(w * per_bin + k)];
    ctx.speed_profile[static_cast<std::size_t>(w)] =
        s / static_cast<double>(nv * static_cast<std::size_t>(per_bin));
  }
  return ctx;
}

inline double veh_field_raw(const SceneContext& ctx, int slot, const std::string& field) {
  const std::size_t v = static_cast<std::size_t>(slot);
  if (v >= ctx.vehicles.size()) return 0.0;  // empty slot, stays at raw 0 via 'present' offset
  const auto& mp = ctx.profiles[v];
  const auto& last = ctx.vehicles[v]->history.back();
  if (field == "rel_x") return last.x - ctx.anchor_x;
  if (field == "rel_y") return last.y - ctx.anchor_y;
  if (field == "mean_vx") return mp.mean_vx;
  if (field == "mean_vy") return mp.mean_vy;
  if (field == "mean_speed") return mp.mean_speed;
  if (field == "std_speed") return mp.std_speed;
  if (field == "mean_accel") return mp.mean_accel;
  if (field == "std_accel") return mp.std_accel;
  if (field == "final_speed") return mp.final_speed;
  if (field == "heading") return mp.heading_mean;
  if (field == "heading_rate") return mp.heading_rate_mean;
  if (field == "lateral_drift") return mp.lateral_drift;
  if (field == "path_length") return mp.path_length;
  if (field == "min_lead_gap") return ctx.lead_gap[v];
  if (field == "decel_max") return mp.decel_max;
  if (field == "present") return 1.0;
  throw SchemaError("unknown vehicle field extractor: veh." + field);
}

}  // namespace detail

// Raw (pre-normalization) value for one schema entry of the scene schema.
inline double scene_raw_value(const detail::SceneContext& ctx, const FeatureSpec& e) {
  const std::string& ex = e.extractor;
  if (ex == "zero") return 0.0;
  if (ex == "scene.count") return static_cast<double>(ctx.vehicles.size());
  if (ex == "scene.mean_speed") return ctx.mean_speed;
  if (ex == "scene.std_speed") return ctx.std_speed;
  if (ex == "scene.mean_accel") return ctx.mean_accel;
  if (ex == "scene.std_accel") return ctx.std_accel;
  if (ex == "scene.density") return ctx.density;
  if (ex == "scene.mean_headway") {
    double s = 0;
    for (double g : ctx.lead_gap) s += g;
    return ctx.lead_gap.empty() ? kNoLeadGap : s / static_cast<double>(ctx.lead_gap.size());
  }
  if (ex == "scene.min_headway") {
    double m = kNoLeadGap;
    for (double g : ctx.lead_gap) m = std::min(m, g);
    return m;
  }
  if (ex == "scene.lane_change_rate") return ctx.lane_change_rate;
  if (ex == "scene.extent_x") return ctx.extent_x;
  if (ex == "scene.extent_y") return ctx.extent_y;
  if (ex == "scene.mean_heading") return ctx.mean_heading;
  if (ex == "scene.speed_profile")
    return ctx.speed_profile[static_cast<std::size_t>(e.subindex)];
  if (ex.rfind("veh.", 0) == 0) return detail::veh_field_raw(ctx, e.index, ex.substr(4));
  throw SchemaError("unknown scene extractor: " + ex);
}

// Raw value for one schema entry of the vehicle schema.
inline double vehicle_raw_value(const MotionProfile& mp, std::span<const TrackPoint> hist,
                                const FeatureSpec& e) {
  const std::string& ex = e.extractor;
  const std::size_t n = hist.size();
  auto series_at = [&](const std::vector<double>& v) -> double {
    const std::size_t i = static_cast<std::size_t>(e.index);
    return (i < v.size()) ? v[i] : 0.0;
  };
  if (ex == "zero") return 0.0;
  if (ex == "ego.mean_speed") return mp.mean_speed;
  if (ex == "ego.std_speed") return mp.std_speed;
  if (ex == "ego.mean_accel") return mp.mean_accel;
  if (ex == "ego.std_accel") return mp.std_accel;
  if (ex == "ego.mean_vx") return mp.mean_vx;
  if (ex == "ego.mean_vy") return mp.mean_vy;
  if (ex == "ego.final_speed") return mp.final_speed;
  if (ex == "ego.heading") return mp.heading_mean;
  if (ex == "ego.heading_rate") return mp.heading_rate_mean;
  if (ex == "ego.lateral_drift") return mp.lateral_drift;
  if (ex == "ego.path_length") return mp.path_length;
  if (ex == "ego.decel_max") return mp.decel_max;
  if (ex == "ego.speed_profile") {
    const int per_bin = static_cast<int>(n) / kSpeedProfileBins;
    if (per_bin == 0) return 0.0;
    double s = 0;
    for (int k = 0; k < per_bin; ++k)
      s += mp.speed[static_cast<std::size_t>(e.subindex * per_bin + k)];
    return s / per_bin;
  }
  if (ex == "ego.rel_x_series")
    return (static_cast<std::size_t>(e.index) < n) ? hist[static_cast<std::size_t>(e.index)].x -
                                                         hist[n - 1].x
                                                   : 0.0;
  if (ex == "ego.rel_y_series")
    return (static_cast<std::size_t>(e.index) < n) ? hist[static_cast<std::size_t>(e.index)].y -
                                                         hist[n - 1].y
                                                   : 0.0;
  if (ex == "ego.speed_series") return series_at(mp.speed);
  if (ex == "ego.accel_series") return series_at(mp.accel);
  if (ex == "ego.heading_series") return series_at(mp.heading);
  throw SchemaError("unknown vehicle extractor: " + ex);
}

namespace detail {

// Pad entries bypass normalization and encode exactly 0, so sparse scenes are
// zero-padded regardless of each slot's normalization bounds.
inline std::vector<char> pad_mask(const FeatureSchema& schema, std::size_t n_vehicles) {
  std::vector<char> pad(static_cast<std::size_t>(schema.width()), 0);
  for (int i = 0; i < schema.width(); ++i) {
    const auto& e = schema.entries[static_cast<std::size_t>(i)];
    if (e.extractor == "zero") pad[static_cast<std::size_t>(i)] = 1;
    if (schema.kind == SchemaKind::scene && e.extractor.rfind("veh.", 0) == 0 &&
        static_cast<std::size_t>(e.index) >= n_vehicles)
      pad[static_cast<std::size_t>(i)] = 1;
  }
  return pad;
}

inline FeatureVector normalize_all(const FeatureSchema& schema, std::span<const double> raw,
                                   const std::vector<char>& pad, ExtractionStats* stats) {
  FeatureVector fv;
  fv.schema_version = schema.version;
  fv.values.resize(static_cast<std::size_t>(schema.width()));
  for (int i = 0; i < schema.width(); ++i) {
    if (pad[static_cast<std::size_t>(i)]) {
      fv.values[static_cast<std::size_t>(i)] = 0.0;
      continue;
    }
    double v = schema.normalize(i, raw[static_cast<std::size_t>(i)]);
    if (v < -1.0 || v > 1.0) {
      if (stats != nullptr) ++stats->clamped;
      v = std::clamp(v, -1.0, 1.0);
    }
    fv.values[static_cast<std::size_t>(i)] = v;
  }
  return fv;
}

}  // namespace detail

// Raw, pre-normalization feature values in schema order. Exposed so tests can
// compare against an independent oracle.
inline std::vector<double> extract_scene_raw(const Scene& scene, const FeatureSchema& schema) {
  if (schema.kind != SchemaKind::scene) throw ConfigError("extract_scene_raw: scene schema required");
  schema.validate();
  if (scene.clips.empty()) throw ConfigError("extract_scene_raw: empty scene");
  const auto ctx = detail::build_scene_context(scene);
  std::vector<double> raw(static_cast<std::size_t>(schema.width()));
  for (int i = 0; i < schema.width(); ++i)
    raw[static_cast<std::size_t>(i)] = scene_raw_value(ctx, schema.entries[static_cast<std::size_t>(i)]);
  return raw;
}

inline std::vector<double> extract_vehicle_raw(const Clip& clip, const FeatureSchema& schema) {
  if (schema.kind != SchemaKind::vehicle)
    throw ConfigError("extract_vehicle_raw: vehicle schema required");
  schema.validate();
  if (static_cast<int>(clip.history.size()) != kHistoryLen)
    throw ShapeError("extract_vehicle_raw: history length " + std::to_string(clip.history.size()));
  const MotionProfile mp = motion_profile(clip.history);
  std::vector<double> raw(static_cast<std::size_t>(schema.width()));
  for (int i = 0; i < schema.width(); ++i)
    raw[static_cast<std::size_t>(i)] =
        vehicle_raw_value(mp, clip.history, schema.entries[static_cast<std::size_t>(i)]);
  return raw;
}

// x_fr for V2I: scene-level features, min-max normalized into [-1, 1].
inline FeatureVector extract_scene_features(const Scene& scene, const FeatureSchema& schema,
                                            ExtractionStats* stats = nullptr) {
  const auto raw = extract_scene_raw(scene, schema);
  const auto pad = detail::pad_mask(schema, scene.clips.size());
  return detail::normalize_all(schema, raw, pad, stats);
}

// Vehicle-level feature block for V2V.
inline FeatureVector extract_vehicle_features(const Clip& clip, const FeatureSchema& schema,
                                              ExtractionStats* stats = nullptr) {
  const auto raw = extract_vehicle_raw(clip, schema);
  const auto pad = detail::pad_mask(schema, 1);
  return detail::normalize_all(schema, raw, pad, stats);
}

}  // namespace semx
