// Displacement metrics over aligned trajectories:
//   RMSE = sqrt(mean_s ||p_hat(s) - p(s)||^2)
//   ADE  = mean_s ||p_hat(s) - p(s)||
//   FDE  = ||p_hat(S) - p(S)||
// plus best-of-K aggregation (minimum over candidates).
#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semx/types.hpp"

namespace semx {

enum class MetricKind { ade, fde, rmse };

inline const char* metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::ade: return "ade";
    case MetricKind::fde: return "fde";
    case MetricKind::rmse: return "rmse";
  }
  return "?";
}

namespace detail {

inline void check_pair(std::span<const TrackPoint> pred, std::span<const TrackPoint> truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw ShapeError("metric: trajectory lengths " + std::to_string(pred.size()) + " vs " +
                     std::to_string(truth.size()));
}

}  // namespace detail

inline double rmse(std::span<const TrackPoint> pred, std::span<const TrackPoint> truth) {
  detail::check_pair(pred, truth);
  double acc = 0.0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    const double dx = pred[s].x - truth[s].x;
    const double dy = pred[s].y - truth[s].y;
    acc += dx * dx + dy * dy;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

inline double ade(std::span<const TrackPoint> pred, std::span<const TrackPoint> truth) {
  detail::check_pair(pred, truth);
  double acc = 0.0;
  for (std::size_t s = 0; s < pred.size(); ++s)
    acc += std::hypot(pred[s].x - truth[s].x, pred[s].y - truth[s].y);
  return acc / static_cast<double>(pred.size());
}

inline double fde(std::span<const TrackPoint> pred, std::span<const TrackPoint> truth) {
  detail::check_pair(pred, truth);
  const auto& p = pred.back();
  const auto& t = truth.back();
  return std::hypot(p.x - t.x, p.y - t.y);
}

inline double metric_value(MetricKind m, std::span<const TrackPoint> pred,
                           std::span<const TrackPoint> truth) {
  switch (m) {
    case MetricKind::ade: return ade(pred, truth);
    case MetricKind::fde: return fde(pred, truth);
    case MetricKind::rmse: return rmse(pred, truth);
  }
  throw ConfigError("metric_value: unknown metric");
}

// Best-of-K: minimum of the metric over candidate trajectories.
inline double best_of_k(const std::vector<std::vector<TrackPoint>>& candidates,
                        std::span<const TrackPoint> truth, MetricKind metric) {
  if (candidates.empty()) throw std::domain_error("best_of_k: empty candidate set");
  double best = metric_value(metric, candidates.front(), truth);
  for (std::size_t i = 1; i < candidates.size(); ++i)
    best = std::min(best, metric_value(metric, candidates[i], truth));
  return best;
}

enum class Aggregation { mean_of_clips, pooled };

struct MetricResult {
  std::string metric;
  int k = 1;
  Aggregation aggregation = Aggregation::mean_of_clips;
  std::vector<double> per_clip;
  double mean = 0.0;
  std::size_t n_clips = 0;
};

// Corpus aggregate of per-clip values. `pooled` pools samples before the
// outer statistic; with equal-length clips it differs from the clip mean only
// for RMSE (root of the mean of squares).
inline MetricResult corpus_summary(MetricKind metric, int k, std::vector<double> per_clip,
                                   Aggregation agg = Aggregation::mean_of_clips) {
  MetricResult r;
  r.metric = metric_name(metric);
  r.k = k;
  r.aggregation = agg;
  r.n_clips = per_clip.size();
  r.per_clip = std::move(per_clip);
  if (r.per_clip.empty()) throw ConfigError("corpus_summary: no clips");
  double acc = 0.0;
  if (agg == Aggregation::pooled && metric == MetricKind::rmse) {
    for (double v : r.per_clip) acc += v * v;
    r.mean = std::sqrt(acc / static_cast<double>(r.per_clip.size()));
  } else {
    for (double v : r.per_clip) acc += v;
    r.mean = acc / static_cast<double>(r.per_clip.size());
  }
  return r;
}

}  // namespace semx
