// Independent test oracles. Everything here re-derives expected values from
// first principles (direct definitions, naive recursions, closed forms) and
// deliberately shares no code with the library implementations it checks.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "semx/types.hpp"

namespace oracle {

// --- metrics: brute-force re-implementations -------------------------------

inline double brute_rmse(const std::vector<semx::TrackPoint>& pred,
                         const std::vector<semx::TrackPoint>& truth) {
  double sum = 0.0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    const double ex = pred[s].x - truth[s].x;
    const double ey = pred[s].y - truth[s].y;
    sum += ex * ex + ey * ey;
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

inline double brute_ade(const std::vector<semx::TrackPoint>& pred,
                        const std::vector<semx::TrackPoint>& truth) {
  double sum = 0.0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    const double ex = pred[s].x - truth[s].x;
    const double ey = pred[s].y - truth[s].y;
    sum += std::sqrt(ex * ex + ey * ey);
  }
  return sum / static_cast<double>(pred.size());
}

inline double brute_fde(const std::vector<semx::TrackPoint>& pred,
                        const std::vector<semx::TrackPoint>& truth) {
  const double ex = pred.back().x - truth.back().x;
  const double ey = pred.back().y - truth.back().y;
  return std::sqrt(ex * ex + ey * ey);
}

// --- B-spline / KAN: naive recursive evaluation -----------------------------

// Textbook Cox-de Boor recursion with indicator base case. Valid inside the
// grid interior; the production code must agree there.
inline double cox_de_boor(const std::vector<double>& knots, int i, int p, double x) {
  if (p == 0) return (x >= knots[static_cast<std::size_t>(i)] &&
                      x < knots[static_cast<std::size_t>(i + 1)])
                         ? 1.0
                         : 0.0;
  double left = 0.0, right = 0.0;
  const double dl = knots[static_cast<std::size_t>(i + p)] - knots[static_cast<std::size_t>(i)];
  const double dr =
      knots[static_cast<std::size_t>(i + p + 1)] - knots[static_cast<std::size_t>(i + 1)];
  if (dl > 0) left = (x - knots[static_cast<std::size_t>(i)]) / dl * cox_de_boor(knots, i, p - 1, x);
  if (dr > 0)
    right = (knots[static_cast<std::size_t>(i + p + 1)] - x) / dr *
            cox_de_boor(knots, i + 1, p - 1, x);
  return left + right;
}

inline std::vector<double> uniform_knots(double lo, double hi, int size, int order) {
  const double h = (hi - lo) / size;
  std::vector<double> knots;
  for (int i = 0; i <= size + 2 * order; ++i)
    knots.push_back(lo + (i - order) * h);
  return knots;
}

inline double naive_silu(double x) { return x / (1.0 + std::exp(-x)); }

// Naive double-loop KAN forward: y_j = sum_i w[j,i] silu(x_i)
//                                      + sum_i sum_g c[j,i,g] B_g(x_i)
inline std::vector<double> naive_kan_forward(int in_dim, int out_dim,
                                             const std::vector<double>& base_w,
                                             const std::vector<double>& spline_c, double lo,
                                             double hi, int grid_size, int order,
                                             const std::vector<double>& x) {
  const auto knots = uniform_knots(lo, hi, grid_size, order);
  const int n_basis = grid_size + order;
  std::vector<double> y(static_cast<std::size_t>(out_dim), 0.0);
  for (int j = 0; j < out_dim; ++j) {
    for (int i = 0; i < in_dim; ++i) {
      y[static_cast<std::size_t>(j)] +=
          base_w[static_cast<std::size_t>(j * in_dim + i)] *
          naive_silu(x[static_cast<std::size_t>(i)]);
      for (int g = 0; g < n_basis; ++g) {
        y[static_cast<std::size_t>(j)] +=
            spline_c[static_cast<std::size_t>((j * in_dim + i) * n_basis + g)] *
            cox_de_boor(knots, g, order, x[static_cast<std::size_t>(i)]);
      }
    }
  }
  return y;
}

// --- features: direct finite-difference definitions -------------------------

// Raw named features of a single uniformly sampled history, computed straight
// from the definitions (second-order differences: central inside, three-point
// one-sided at the ends; population statistics).
inline std::vector<double> second_order_diff(const std::vector<double>& f, double dt) {
  const std::size_t n = f.size();
  std::vector<double> d(n, 0.0);
  if (n < 2) return d;
  if (n == 2) {
    d[0] = d[1] = (f[1] - f[0]) / dt;
    return d;
  }
  d[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * dt);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2 * dt);
  d[n - 1] = (3 * f[n - 1] - 4 * f[n - 2] + f[n - 3]) / (2 * dt);
  return d;
}

inline std::map<std::string, double> feature_oracle(const std::vector<semx::TrackPoint>& pts) {
  const std::size_t n = pts.size();
  const double dt = 0.1;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = pts[i].x;
    ys[i] = pts[i].y;
  }
  const auto vx = second_order_diff(xs, dt);
  const auto vy = second_order_diff(ys, dt);
  std::vector<double> speed(n), heading(n);
  for (std::size_t i = 0; i < n; ++i) {
    speed[i] = std::sqrt(vx[i] * vx[i] + vy[i] * vy[i]);
    heading[i] = (speed[i] > 1e-12) ? std::atan2(vx[i], vy[i]) : 0.0;
  }
  const auto accel = second_order_diff(speed, dt);
  const auto hrate = second_order_diff(heading, dt);
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double e : v) s += e;
    return s / static_cast<double>(v.size());
  };
  auto pstd = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double e : v) s += (e - m) * (e - m);
    return std::sqrt(s / static_cast<double>(v.size()));
  };

  std::map<std::string, double> f;
  f["mean_vx"] = mean(vx);
  f["mean_vy"] = mean(vy);
  f["mean_speed"] = mean(speed);
  f["std_speed"] = pstd(speed);
  f["mean_accel"] = mean(accel);
  f["std_accel"] = pstd(accel);
  f["final_speed"] = speed[n - 1];
  const double mvx = mean(vx), mvy = mean(vy);
  f["heading"] = (std::sqrt(mvx * mvx + mvy * mvy) > 1e-12) ? std::atan2(mvx, mvy) : 0.0;
  f["heading_rate"] = mean(hrate);
  f["lateral_drift"] = pts[n - 1].x - pts[0].x;
  double plen = 0;
  for (std::size_t i = 1; i < n; ++i)
    plen += std::sqrt((pts[i].x - pts[i - 1].x) * (pts[i].x - pts[i - 1].x) +
                      (pts[i].y - pts[i - 1].y) * (pts[i].y - pts[i - 1].y));
  f["path_length"] = plen;
  double dmax = 0;
  for (double a : accel) dmax = std::max(dmax, -a);
  f["decel_max"] = std::max(0.0, dmax);
  return f;
}

// --- constant-velocity predictor on constant-acceleration motion ------------

// The LS velocity over the last 5 samples of a CA track lags the endpoint
// velocity by 2*a*dt, so the step-s displacement error is
// |a| dt^2 (s^2/2 + 2 s) and the n-step ADE has closed form
// |a| dt^2 (n+1)(2n+13)/12.
inline double cv_on_ca_ade(double accel, int n_steps, double dt = 0.1) {
  return std::abs(accel) * dt * dt * (n_steps + 1.0) * (2.0 * n_steps + 13.0) / 12.0;
}

inline double cv_on_ca_fde(double accel, int n_steps, double dt = 0.1) {
  return std::abs(accel) * dt * dt * (n_steps * n_steps / 2.0 + 2.0 * n_steps);
}

// --- misc helpers ------------------------------------------------------------

// CA history on the 10 Hz grid ending at t = (n-1)*dt.
inline std::vector<semx::TrackPoint> ca_history(double x0, double y0, double v0, double a,
                                                int n = 30, std::int64_t vid = 1) {
  std::vector<semx::TrackPoint> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = i * 0.1;
    out[static_cast<std::size_t>(i)] =
        semx::TrackPoint{vid, t, x0, y0 + v0 * t + 0.5 * a * t * t};
  }
  return out;
}

}  // namespace oracle
