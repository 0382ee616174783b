// Run-directory plumbing: summary/horizon CSVs, manifests, output locking and
// the cross-run report merge. All emitted files are deterministic functions
// of (config, seed) so re-runs reproduce them byte for byte.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "semx/orchestrate.hpp"
#include "semx/types.hpp"

namespace semx {

inline std::string config_hash(const nlohmann::json& config) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

inline void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open summary file for writing: " + path);
  out << "snr_db,K,metric,value,n_clips\n";
  for (const auto& r : rows)
    out << detail::fmt_double(r.snr_db) << ',' << r.k << ',' << r.metric << ','
        << detail::fmt_double(r.value) << ',' << r.n_clips << '\n';
}

inline std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open summary file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty summary file: " + path);
  if (line != "snr_db,K,metric,value,n_clips")
    throw ParseError("unexpected summary header in " + path + ": " + line);
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    SummaryRow r;
    std::getline(ss, cell, ',');
    r.snr_db = (cell == "inf") ? std::numeric_limits<double>::infinity() : std::stod(cell);
    std::getline(ss, cell, ',');
    r.k = std::stoi(cell);
    std::getline(ss, r.metric, ',');
    std::getline(ss, cell, ',');
    r.value = std::stod(cell);
    std::getline(ss, cell, ',');
    r.n_clips = static_cast<std::size_t>(std::stoull(cell));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_horizon_csv(const std::vector<HorizonRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open horizon file for writing: " + path);
  out << "model,step,metric,value,n_clips\n";
  for (const auto& r : rows)
    out << r.model << ',' << r.step << ',' << r.metric << ',' << detail::fmt_double(r.value)
        << ',' << r.n_clips << '\n';
}

inline std::vector<HorizonRow> read_horizon_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open horizon file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty horizon file: " + path);
  if (line != "model,step,metric,value,n_clips")
    throw ParseError("unexpected horizon header in " + path + ": " + line);
  std::vector<HorizonRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    HorizonRow r;
    std::getline(ss, r.model, ',');
    std::getline(ss, cell, ',');
    r.step = std::stoi(cell);
    std::getline(ss, r.metric, ',');
    std::getline(ss, cell, ',');
    r.value = std::stod(cell);
    std::getline(ss, cell, ',');
    r.n_clips = static_cast<std::size_t>(std::stoull(cell));
    rows.push_back(std::move(r));
  }
  return rows;
}

// Every run writes a manifest beside its outputs: full config, its hash, the
// seed and versions. No timestamps -- manifests must be bitwise reproducible.
inline void write_manifest(const nlohmann::json& config, const std::string& subcommand,
                           const std::vector<std::string>& outputs, const std::string& path,
                           const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json m;
  m["semx_version"] = kSemxVersion;
  m["subcommand"] = subcommand;
  m["config"] = config;
  m["config_hash"] = config_hash(config);
  m["outputs"] = outputs;
  if (!extra.empty()) m["extra"] = extra;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open manifest for writing: " + path);
  out << m.dump(2) << '\n';
}

// Exclusive lock on an output directory; no two subcommand instances may
// share one.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir) : path_(dir / ".semx.lock") {
    std::filesystem::create_directories(dir);
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (f == nullptr)
      throw StateError("output directory is locked by another run: " + dir.string());
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct ReportOutcome {
  std::vector<HorizonRow> merged;  // keyed (model, step, metric)
  std::vector<std::string> missing;
};

// Merges run-dir summaries into one table ready for external plotting.
// Summary CSVs are folded in as step = kFutureLen rows labeled by run dir.
inline ReportOutcome merge_reports(const std::vector<std::string>& run_dirs) {
  namespace fs = std::filesystem;
  ReportOutcome out;
  for (const auto& dir : run_dirs) {
    const fs::path horizon = fs::path(dir) / "horizon.csv";
    const fs::path summary = fs::path(dir) / "summary.csv";
    if (fs::exists(horizon)) {
      for (auto& r : read_horizon_csv(horizon.string())) out.merged.push_back(std::move(r));
    } else if (fs::exists(summary)) {
      for (const auto& r : read_summary_csv(summary.string())) {
        if (r.k == 0) continue;  // reconstruction-mse bookkeeping rows
        HorizonRow h;
        h.model = fs::path(dir).filename().string() + "-snr" + detail::fmt_double(r.snr_db) +
                  "-k" + std::to_string(r.k);
        h.step = kFutureLen;
        h.metric = r.metric;
        h.value = r.value;
        h.n_clips = r.n_clips;
        out.merged.push_back(std::move(h));
      }
    } else {
      out.missing.push_back(dir);
    }
  }
  return out;
}

}  // namespace semx
