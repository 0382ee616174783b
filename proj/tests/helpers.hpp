// Shared test scaffolding: temp dirs, corpus builders.
#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "semx/clips.hpp"
#include "semx/synth.hpp"
#include "semx/types.hpp"

namespace testutil {

inline std::filesystem::path unique_temp_dir(const std::string& stem) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("semx_" + stem + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  return dir;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& stem) : path(unique_temp_dir(stem)) {}
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path);
  out << contents;
}

// Straight-line track at constant velocity on the global grid.
inline semx::Trajectory line_track(std::int64_t vid, double x0, double y0, double vx, double vy,
                                   int n, std::int64_t start_index = 0) {
  semx::Trajectory tr;
  tr.vehicle_id = vid;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(start_index + i) / 10.0;
    const double tl = i * 0.1;
    tr.points.push_back(semx::TrackPoint{vid, t, x0 + vx * tl, y0 + vy * tl});
  }
  return tr;
}

inline std::vector<semx::Scene> scenes_from_tracks(const std::vector<semx::Trajectory>& tracks,
                                                   int stride = semx::kClipLen) {
  return semx::build_scenes(semx::segment_clips(tracks, 3.0, 5.0, stride));
}

inline std::vector<semx::Scene> synth_scenes(const semx::SynthConfig& cfg, std::uint64_t seed,
                                             int stride = semx::kClipLen) {
  return scenes_from_tracks(semx::synth_generate(cfg, seed), stride);
}

}  // namespace testutil
