// Clip segmentation and scene assembly. Windows are anchored on the global
// 10 Hz grid at multiples of the stride, so clips from different vehicles
// share scene time grids.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semx/types.hpp"

namespace semx {

// Slices uniformly sampled tracks into history+future windows. A track
// shorter than one full window yields no clips.
inline std::vector<Clip> segment_clips(const std::vector<Trajectory>& tracks,
                                       double history_s = 3.0, double horizon_s = 5.0,
                                       int stride = kClipLen) {
  if (stride <= 0) throw ConfigError("segment_clips: stride must be positive");
  const int n_hist = static_cast<int>(std::llround(history_s / kSampleDt));
  const int n_fut = static_cast<int>(std::llround(horizon_s / kSampleDt));
  if (n_hist < 2 || n_fut < 1) throw ConfigError("segment_clips: window too short");
  const int win = n_hist + n_fut;

  std::vector<std::int64_t> bad;
  for (const auto& tr : tracks) {
    if (!tr.is_uniform()) bad.push_back(tr.vehicle_id);
  }
  if (!bad.empty()) {
    std::string msg = "segment_clips: non-uniform sampling in tracks:";
    for (auto id : bad) msg += " " + std::to_string(id);
    throw ConfigError(msg);
  }

  std::vector<Clip> clips;
  for (const auto& tr : tracks) {
    const auto& pts = tr.points;
    const int n = static_cast<int>(pts.size());
    if (n < win) continue;
    const std::int64_t first_index = std::llround(pts.front().t / kSampleDt);
    // First window start on the stride-anchored grid that is >= track start.
    const std::int64_t q = (first_index >= 0) ? (first_index + stride - 1) / stride
                                              : -((-first_index) / stride);
    const std::int64_t w0 = q * stride;
    for (std::int64_t ws = w0; ws + win <= first_index + n; ws += stride) {
      const int off = static_cast<int>(ws - first_index);
      Clip c;
      c.vehicle_id = tr.vehicle_id;
      c.scene_id = ws;
      c.history.assign(pts.begin() + off, pts.begin() + off + n_hist);
      c.future.assign(pts.begin() + off + n_hist, pts.begin() + off + win);
      clips.push_back(std::move(c));
    }
  }
  return clips;
}

// Groups clips by shared window into scenes; clips sorted by vehicle_id.
inline std::vector<Scene> build_scenes(std::vector<Clip> clips) {
  std::map<std::int64_t, Scene> by_id;
  for (auto& c : clips) {
    Scene& s = by_id[c.scene_id];
    s.scene_id = c.scene_id;
    if (s.find(c.vehicle_id) != nullptr) {
      throw StateError("build_scenes: duplicate vehicle " + std::to_string(c.vehicle_id) +
                       " in scene " + std::to_string(c.scene_id));
    }
    s.clips.push_back(std::move(c));
  }
  std::vector<Scene> scenes;
  scenes.reserve(by_id.size());
  for (auto& [id, s] : by_id) {
    std::sort(s.clips.begin(), s.clips.end(),
              [](const Clip& a, const Clip& b) { return a.vehicle_id < b.vehicle_id; });
    scenes.push_back(std::move(s));
  }
  return scenes;
}

// Vehicles whose position at the last history timestamp lies within radius_m
// of the queried vehicle. Sorted ascending for determinism.
inline std::vector<std::int64_t> neighbors(const Scene& scene, std::int64_t vehicle_id,
                                           double radius_m) {
  const Clip* me = scene.find(vehicle_id);
  if (me == nullptr) {
    throw LookupError("neighbors: unknown vehicle " + std::to_string(vehicle_id) + " in scene " +
                      std::to_string(scene.scene_id));
  }
  const TrackPoint& p0 = me->history.back();
  std::vector<std::int64_t> ids;
  for (const auto& c : scene.clips) {
    if (c.vehicle_id == vehicle_id) continue;
    const TrackPoint& q = c.history.back();
    if (dist2d(p0.x, p0.y, q.x, q.y) <= radius_m) ids.push_back(c.vehicle_id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace semx
