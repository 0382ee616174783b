// NGSIM-format CSV ingestion and serialization.
//
// Expected columns: Vehicle_ID, Frame_ID, Global_Time, Local_X, Local_Y.
// Extra columns are ignored. Global_Time is in milliseconds; positions are in
// feet or meters depending on unit_mode. Tracks with frame gaps are split into
// separate trajectories rather than interpolated.
#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "semx/types.hpp"

namespace semx {

enum class UnitMode { feet, meters };

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& cell, std::size_t line_no, const std::string& col) {
  const std::string t = trim(cell);
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    throw ParseError("non-numeric value '" + cell + "' in column " + col + " at line " +
                     std::to_string(line_no));
  }
  return v;
}

inline std::int64_t parse_int(const std::string& cell, std::size_t line_no, const std::string& col) {
  const std::string t = trim(cell);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ParseError("non-numeric value '" + cell + "' in column " + col + " at line " +
                     std::to_string(line_no));
  }
  return v;
}

}  // namespace detail

// Parses an NGSIM-style CSV into per-vehicle trajectories. Rows may arrive in
// any order; output points are sorted by time. Tracks containing timestamp
// gaps larger than one sample period are split; fragments shorter than two
// points are dropped.
inline std::vector<Trajectory> parse_ngsim(const std::string& path, UnitMode unit_mode) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) return {};  // empty file -> empty list

  const auto header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[detail::trim(header[i])] = i;

  const char* required[] = {"Vehicle_ID", "Frame_ID", "Global_Time", "Local_X", "Local_Y"};
  for (const char* name : required) {
    if (!col.count(name)) throw SchemaError(std::string("missing required column: ") + name);
  }
  const std::size_t c_vid = col["Vehicle_ID"];
  const std::size_t c_time = col["Global_Time"];
  const std::size_t c_x = col["Local_X"];
  const std::size_t c_y = col["Local_Y"];

  const double scale = (unit_mode == UnitMode::feet) ? kFeetToMeters : 1.0;

  std::map<std::int64_t, std::vector<TrackPoint>> by_vehicle;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() < header.size()) {
      throw ParseError("row with " + std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()) + " at line " + std::to_string(line_no));
    }
    TrackPoint p;
    p.vehicle_id = detail::parse_int(cells[c_vid], line_no, "Vehicle_ID");
    p.t = detail::parse_double(cells[c_time], line_no, "Global_Time") * 1e-3;
    p.x = detail::parse_double(cells[c_x], line_no, "Local_X") * scale;
    p.y = detail::parse_double(cells[c_y], line_no, "Local_Y") * scale;
    by_vehicle[p.vehicle_id].push_back(p);
  }

  std::vector<Trajectory> out;
  for (auto& [vid, pts] : by_vehicle) {
    std::stable_sort(pts.begin(), pts.end(),
                     [](const TrackPoint& a, const TrackPoint& b) { return a.t < b.t; });
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (pts[i].t - pts[i - 1].t < kTimeTol) {
        throw ParseError("duplicate timestamp for vehicle " + std::to_string(vid) + " at t=" +
                         std::to_string(pts[i].t));
      }
    }
    // Split at any deviation from the sample period.
    Trajectory cur;
    cur.vehicle_id = vid;
    auto flush = [&out](Trajectory& t) {
      if (t.points.size() >= 2) out.push_back(std::move(t));
      t.points.clear();
    };
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!cur.points.empty() &&
          std::abs((pts[i].t - cur.points.back().t) - kSampleDt) > kTimeTol) {
        flush(cur);
        cur.vehicle_id = vid;
      }
      cur.points.push_back(pts[i]);
    }
    flush(cur);
  }
  return out;
}

// Writes trajectories back to the same CSV layout, always in meters.
// Round-trips through parse_ngsim(path, UnitMode::meters).
inline void write_ngsim(const std::vector<Trajectory>& tracks, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open file for writing: " + path);
  out << "Vehicle_ID,Frame_ID,Global_Time,Local_X,Local_Y\n";
  char buf[64];
  for (const auto& tr : tracks) {
    for (const auto& p : tr.points) {
      const long long ms = std::llround(p.t * 1000.0);
      const long long frame = std::llround(p.t / kSampleDt);
      out << p.vehicle_id << ',' << frame << ',' << ms << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", p.x);
      out << buf << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", p.y);
      out << buf << '\n';
    }
  }
}

}  // namespace semx
