// Synthetic trajectory corpus generator: a desk-scale stand-in for NGSIM
// recordings. Tracks are generated per scene group from closed-form kinematic
// profiles, so downstream oracles can rely on exact motion.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "semx/rng.hpp"
#include "semx/types.hpp"

namespace semx {

enum class Scenario { cruise_mix, congestion_approach };

struct SynthConfig {
  int n_scenes = 10;
  int vehicles_per_scene = 4;
  double duration_s = 8.0;
  int lane_count = 3;
  double lane_width_m = 3.7;
  double speed_min_mps = 8.0;
  double speed_max_mps = 28.0;
  // Maneuver mix for cruise scenes (weights, not necessarily normalized).
  double w_cv = 0.5;
  double w_ca = 0.25;
  double w_lane_change = 0.15;
  double w_brake = 0.10;
  // Fraction of scenes built as a congestion approach (stopped queue ahead,
  // upstream vehicles braking to join it).
  double congestion_fraction = 0.0;
  double noise_std_m = 0.0;

  void validate() const {
    if (n_scenes <= 0 || vehicles_per_scene <= 0)
      throw ConfigError("synth: scene and vehicle counts must be positive");
    if (vehicles_per_scene > 999) throw ConfigError("synth: at most 999 vehicles per scene");
    if (duration_s <= 0) throw ConfigError("synth: duration must be positive");
    if (lane_count <= 0 || lane_width_m <= 0) throw ConfigError("synth: invalid lane geometry");
    if (speed_min_mps < 0 || speed_max_mps < speed_min_mps)
      throw ConfigError("synth: invalid speed range");
    if (w_cv < 0 || w_ca < 0 || w_lane_change < 0 || w_brake < 0 ||
        w_cv + w_ca + w_lane_change + w_brake <= 0)
      throw ConfigError("synth: invalid maneuver mix");
    if (congestion_fraction < 0 || congestion_fraction > 1)
      throw ConfigError("synth: congestion_fraction out of [0,1]");
    if (noise_std_m < 0) throw ConfigError("synth: negative noise level");
  }

  nlohmann::json to_json() const {
    return {{"n_scenes", n_scenes},
            {"vehicles_per_scene", vehicles_per_scene},
            {"duration_s", duration_s},
            {"lane_count", lane_count},
            {"lane_width_m", lane_width_m},
            {"speed_min_mps", speed_min_mps},
            {"speed_max_mps", speed_max_mps},
            {"w_cv", w_cv},
            {"w_ca", w_ca},
            {"w_lane_change", w_lane_change},
            {"w_brake", w_brake},
            {"congestion_fraction", congestion_fraction},
            {"noise_std_m", noise_std_m}};
  }

  static SynthConfig from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.n_scenes = j.value("n_scenes", c.n_scenes);
    c.vehicles_per_scene = j.value("vehicles_per_scene", c.vehicles_per_scene);
    c.duration_s = j.value("duration_s", c.duration_s);
    c.lane_count = j.value("lane_count", c.lane_count);
    c.lane_width_m = j.value("lane_width_m", c.lane_width_m);
    c.speed_min_mps = j.value("speed_min_mps", c.speed_min_mps);
    c.speed_max_mps = j.value("speed_max_mps", c.speed_max_mps);
    c.w_cv = j.value("w_cv", c.w_cv);
    c.w_ca = j.value("w_ca", c.w_ca);
    c.w_lane_change = j.value("w_lane_change", c.w_lane_change);
    c.w_brake = j.value("w_brake", c.w_brake);
    c.congestion_fraction = j.value("congestion_fraction", c.congestion_fraction);
    c.noise_std_m = j.value("noise_std_m", c.noise_std_m);
    c.validate();
    return c;
  }
};

namespace detail {

inline double lane_center(const SynthConfig& cfg, int lane) {
  return (lane - 0.5 * (cfg.lane_count - 1)) * cfg.lane_width_m;
}

inline double smooth01(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * (3.0 - 2.0 * u);
}

// Longitudinal position for cruise -> constant-deceleration -> hold profiles.
inline double brake_profile_y(double y0, double v0, double t_b, double decel, double t) {
  if (t <= t_b) return y0 + v0 * t;
  const double t_stop = t_b + v0 / decel;
  if (t < t_stop) {
    const double tau = t - t_b;
    return y0 + v0 * t_b + v0 * tau - 0.5 * decel * tau * tau;
  }
  return y0 + v0 * t_b + 0.5 * v0 * v0 / decel;
}

}  // namespace detail

// Deterministic given (config, seed). Scene k occupies sample indices
// [k*n, (k+1)*n) on the global 10 Hz grid; vehicle ids are k*1000 + i + 1.
inline std::vector<Trajectory> synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int n_samples = static_cast<int>(std::llround(cfg.duration_s / kSampleDt));
  if (n_samples < 2) throw ConfigError("synth: duration shorter than two samples");

  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(cfg.n_scenes) * cfg.vehicles_per_scene);
  RngStream root(seed);

  for (int sc = 0; sc < cfg.n_scenes; ++sc) {
    RngStream srng = root.fork(static_cast<std::uint64_t>(sc) + 1);
    const bool congested = srng.uniform() <= cfg.congestion_fraction;
    const std::int64_t base_index = static_cast<std::int64_t>(sc) * n_samples;

    // Queue layout for congestion scenes: stopped vehicles ahead, the rest
    // approach and brake to a stop behind their lane's queue tail.
    int n_queue = 0;
    std::vector<double> queue_tail_y(static_cast<std::size_t>(cfg.lane_count), 1e18);
    if (congested && cfg.vehicles_per_scene >= 2) n_queue = cfg.vehicles_per_scene / 2;

    for (int i = 0; i < cfg.vehicles_per_scene; ++i) {
      RngStream vrng = srng.fork(static_cast<std::uint64_t>(i) + 100);
      Trajectory tr;
      tr.vehicle_id = static_cast<std::int64_t>(sc) * 1000 + i + 1;
      tr.points.resize(static_cast<std::size_t>(n_samples));

      const int lane = i % cfg.lane_count;
      const double x0 = detail::lane_center(cfg, lane);

      enum class Kind { cv, ca, lane_change, brake, queue, approach } kind;
      if (congested) {
        kind = (i < n_queue) ? Kind::queue : Kind::approach;
      } else {
        const double wsum = cfg.w_cv + cfg.w_ca + cfg.w_lane_change + cfg.w_brake;
        const double u = vrng.uniform() * wsum;
        if (u <= cfg.w_cv)
          kind = Kind::cv;
        else if (u <= cfg.w_cv + cfg.w_ca)
          kind = Kind::ca;
        else if (u <= cfg.w_cv + cfg.w_ca + cfg.w_lane_change)
          kind = Kind::lane_change;
        else
          kind = Kind::brake;
      }

      double v0 = vrng.uniform(cfg.speed_min_mps, cfg.speed_max_mps);
      double y0 = 25.0 * (i / cfg.lane_count) + vrng.uniform(0.0, 10.0);

      // Per-kind parameters, fixed before the sample loop.
      double accel = 0.0;
      double lc_start = 0.0, lc_dir = 0.0;
      double brake_start = 0.0, brake_decel = 0.0;
      switch (kind) {
        case Kind::cv:
          break;
        case Kind::ca: {
          accel = vrng.uniform(-1.5, 2.0);
          // keep speed positive over the whole track
          const double a_min = (0.5 - v0) / cfg.duration_s;
          if (accel < a_min) accel = a_min;
          break;
        }
        case Kind::lane_change: {
          if (cfg.lane_count == 1) {
            kind = Kind::cv;
            break;
          }
          lc_dir = (lane == 0) ? 1.0 : (lane == cfg.lane_count - 1 ? -1.0
                                        : (vrng.uniform() < 0.5 ? -1.0 : 1.0));
          const double latest = std::max(0.5, cfg.duration_s - 3.5);
          lc_start = vrng.uniform(0.5, latest);
          break;
        }
        case Kind::brake: {
          brake_start = vrng.uniform(2.0, std::max(2.5, cfg.duration_s / 2));
          brake_decel = vrng.uniform(1.5, 3.0);
          break;
        }
        case Kind::queue: {
          v0 = 0.0;
          y0 = 150.0 - 8.0 * (i / cfg.lane_count);
          if (y0 < queue_tail_y[static_cast<std::size_t>(lane)])
            queue_tail_y[static_cast<std::size_t>(lane)] = y0;
          break;
        }
        case Kind::approach: {
          v0 = vrng.uniform(12.0, std::max(13.0, cfg.speed_max_mps));
          brake_start = vrng.uniform(2.2, 3.0);
          const double stop_by = cfg.duration_s - 0.5;
          brake_decel = v0 / std::max(1.0, stop_by - brake_start);
          const double tail = (queue_tail_y[static_cast<std::size_t>(lane)] < 1e17)
                                  ? queue_tail_y[static_cast<std::size_t>(lane)]
                                  : 150.0;
          const double stop_y = tail - 8.0 - 10.0 * ((i - n_queue) / cfg.lane_count);
          const double brake_dist = 0.5 * v0 * v0 / brake_decel;
          y0 = stop_y - brake_dist - v0 * brake_start;
          break;
        }
      }

      for (int n = 0; n < n_samples; ++n) {
        const std::int64_t gi = base_index + n;
        const double t_local = n * kSampleDt;
        TrackPoint& p = tr.points[static_cast<std::size_t>(n)];
        p.vehicle_id = tr.vehicle_id;
        p.t = static_cast<double>(gi) / 10.0;
        p.x = x0;
        switch (kind) {
          case Kind::cv:
            p.y = y0 + v0 * t_local;
            break;
          case Kind::ca:
            p.y = y0 + v0 * t_local + 0.5 * accel * t_local * t_local;
            break;
          case Kind::lane_change:
            p.y = y0 + v0 * t_local;
            p.x = x0 + lc_dir * cfg.lane_width_m * detail::smooth01((t_local - lc_start) / 3.0);
            break;
          case Kind::brake:
          case Kind::approach:
            p.y = detail::brake_profile_y(y0, v0, brake_start, brake_decel, t_local);
            break;
          case Kind::queue:
            p.y = y0;
            break;
        }
        if (cfg.noise_std_m > 0) {
          p.x += vrng.gaussian(0.0, cfg.noise_std_m);
          p.y += vrng.gaussian(0.0, cfg.noise_std_m);
        }
      }
      out.push_back(std::move(tr));
    }
  }
  return out;
}

}  // namespace semx
