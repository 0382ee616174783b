// Core trajectory/clip/scene types shared by every module.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace semx {

inline constexpr double kSampleDt = 0.1;  // 10 Hz grid
inline constexpr int kHistoryLen = 30;    // 3 s of history
inline constexpr int kFutureLen = 50;     // 5 s horizon
inline constexpr int kClipLen = kHistoryLen + kFutureLen;
inline constexpr double kFeetToMeters = 0.3048;
inline constexpr double kTimeTol = 1e-6;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LookupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrackPoint {
  std::int64_t vehicle_id = 0;
  double t = 0.0;  // seconds on the 10 Hz grid
  double x = 0.0;  // lateral, meters
  double y = 0.0;  // longitudinal, meters
};

struct Trajectory {
  std::int64_t vehicle_id = 0;
  std::vector<TrackPoint> points;  // time-sorted

  // Uniform sampling at kSampleDt within tolerance.
  bool is_uniform(double tol = kTimeTol) const {
    if (points.size() < 2) return false;
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (std::abs((points[i].t - points[i - 1].t) - kSampleDt) > tol) return false;
    }
    return true;
  }

  double start_time() const { return points.front().t; }
  double end_time() const { return points.back().t; }
};

struct Clip {
  std::int64_t vehicle_id = 0;
  std::int64_t scene_id = 0;  // window start index on the global 10 Hz grid
  std::vector<TrackPoint> history;
  std::vector<TrackPoint> future;

  bool contiguous(double tol = kTimeTol) const {
    if (history.empty() || future.empty()) return false;
    return std::abs((future.front().t - history.back().t) - kSampleDt) <= tol;
  }
};

struct Scene {
  std::int64_t scene_id = 0;
  std::vector<Clip> clips;  // sorted by vehicle_id

  const Clip* find(std::int64_t vehicle_id) const {
    for (const auto& c : clips)
      if (c.vehicle_id == vehicle_id) return &c;
    return nullptr;
  }

  std::vector<std::int64_t> vehicle_ids() const {
    std::vector<std::int64_t> ids;
    ids.reserve(clips.size());
    for (const auto& c : clips) ids.push_back(c.vehicle_id);
    return ids;
  }
};

inline double dist2d(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

}  // namespace semx
