// Kolmogorov-Arnold layer: per-edge learnable cubic B-splines on a fixed
// uniform grid plus a SiLU-weighted base path,
//
//   y_j = sum_i [ w_base[j,i] * silu(x_i) + sum_g c[j,i,g] * B_g(x_i) ].
//
// Basis evaluation uses the knot-span triangular recursion, which is
// polynomial in x, so inputs beyond the grid continue the boundary
// polynomial pieces instead of dropping to zero.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "semx/rng.hpp"
#include "semx/types.hpp"

namespace semx {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

struct SplineGrid {
  double lo = -1.2;
  double hi = 1.2;
  int size = 8;   // intervals on [lo, hi]
  int order = 3;  // cubic

  double step() const { return (hi - lo) / size; }
  int num_basis() const { return size + order; }

  // Uniformly extended knot vector t_i = lo + (i - order) * step.
  double knot(int i) const { return lo + (i - order) * step(); }

  void validate() const {
    if (!(hi > lo)) throw ConfigError("spline grid: hi must exceed lo");
    if (size < 1 || order < 1 || order > 7)
      throw ConfigError("spline grid: need size >= 1 and 1 <= order <= 7");
  }

  // Interior knot span, clamped so out-of-range x extends the end pieces.
  int span_of(double x) const {
    const double f = std::floor((x - lo) / step());
    int idx = 0;
    if (f >= size - 1)
      idx = size - 1;
    else if (f > 0)
      idx = static_cast<int>(f);
    return order + idx;
  }

  // Polynomial extension is exact on [lo - ext, hi + ext] and frozen beyond;
  // the cubic pieces would otherwise blow up on far-out activations (e.g.
  // unbounded ReLU outputs feeding the next layer).
  double extension() const { return (hi - lo) / 3.0; }

  double clamp_domain(double x) const {
    const double ext = extension();
    return std::clamp(x, lo - ext, hi + ext);
  }

  // Writes the order+1 non-zero basis values at x into n; `first` receives
  // the index of the basis function n[0] refers to.
  void basis(double x, int& first, double* n) const {
    const double xc = clamp_domain(x);
    const int j = span_of(xc);
    const int p = order;
    double left[8], right[8];
    n[0] = 1.0;
    for (int d = 1; d <= p; ++d) {
      left[d] = xc - knot(j + 1 - d);
      right[d] = knot(j + d) - xc;
      double saved = 0.0;
      for (int r = 0; r < d; ++r) {
        const double tmp = n[r] / (right[r + 1] + left[d - r]);
        n[r] = saved + right[r + 1] * tmp;
        saved = left[d - r] * tmp;
      }
      n[d] = saved;
    }
    first = j - p;
  }

  // Basis values plus first derivatives (uniform-knot simplification of the
  // standard derivative identity). Zero slope beyond the clamped domain.
  void basis_and_deriv(double x, int& first, double* n, double* d) const {
    const double xc = clamp_domain(x);
    const int j = span_of(xc);
    const int p = order;
    const double h = step();
    double left[8], right[8], lower[8];
    n[0] = 1.0;
    for (int q = 1; q <= p; ++q) {
      if (q == p)
        for (int r = 0; r < p; ++r) lower[r] = n[r];  // degree p-1 snapshot
      left[q] = xc - knot(j + 1 - q);
      right[q] = knot(j + q) - xc;
      double saved = 0.0;
      for (int r = 0; r < q; ++r) {
        const double tmp = n[r] / (right[r + 1] + left[q - r]);
        n[r] = saved + right[r + 1] * tmp;
        saved = left[q - r] * tmp;
      }
      n[q] = saved;
    }
    if (x != xc) {
      for (int r = 0; r <= p; ++r) d[r] = 0.0;
    } else {
      d[0] = -lower[0] / h;
      for (int r = 1; r < p; ++r) d[r] = (lower[r - 1] - lower[r]) / h;
      d[p] = lower[p - 1] / h;
    }
    first = j - p;
  }
};

struct KanLayer {
  int in_dim = 0;
  int out_dim = 0;
  SplineGrid grid;
  std::vector<double> base_w;    // [out][in]
  std::vector<double> spline_c;  // [out][in][num_basis]

  // Spline coefficients start at zero; the layer behaves like a SiLU-weighted
  // linear map at init. The base-weight scale compensates silu's 0.5 slope at
  // the origin so signal variance is preserved through stacked layers.
  static KanLayer init(int in, int out, const SplineGrid& g, RngStream& rng) {
    g.validate();
    if (in <= 0 || out <= 0) throw ConfigError("kan layer: dims must be positive");
    KanLayer l;
    l.in_dim = in;
    l.out_dim = out;
    l.grid = g;
    const double s = std::sqrt(12.0 / static_cast<double>(in));
    l.base_w.resize(static_cast<std::size_t>(out) * in);
    for (auto& w : l.base_w) w = rng.uniform(-s, s);
    l.spline_c.assign(static_cast<std::size_t>(out) * in * g.num_basis(), 0.0);
    return l;
  }

  static KanLayer zeros(int in, int out, const SplineGrid& g) {
    g.validate();
    KanLayer l;
    l.in_dim = in;
    l.out_dim = out;
    l.grid = g;
    l.base_w.assign(static_cast<std::size_t>(out) * in, 0.0);
    l.spline_c.assign(static_cast<std::size_t>(out) * in * g.num_basis(), 0.0);
    return l;
  }

  std::size_t n_base() const { return base_w.size(); }
  std::size_t n_spline() const { return spline_c.size(); }

  void forward(const double* x, double* y) const {
    const int p = grid.order;
    const int B = grid.num_basis();
    thread_local std::vector<double> silu_v, basis_v;
    thread_local std::vector<int> first_v;
    silu_v.resize(static_cast<std::size_t>(in_dim));
    basis_v.resize(static_cast<std::size_t>(in_dim) * (p + 1));
    first_v.resize(static_cast<std::size_t>(in_dim));
    for (int i = 0; i < in_dim; ++i) {
      silu_v[static_cast<std::size_t>(i)] = silu(x[i]);
      grid.basis(x[i], first_v[static_cast<std::size_t>(i)],
                 &basis_v[static_cast<std::size_t>(i) * (p + 1)]);
    }
    for (int j = 0; j < out_dim; ++j) {
      const double* bw = &base_w[static_cast<std::size_t>(j) * in_dim];
      const double* cj = &spline_c[static_cast<std::size_t>(j) * in_dim * B];
      double acc = 0.0;
      for (int i = 0; i < in_dim; ++i) {
        acc += bw[i] * silu_v[static_cast<std::size_t>(i)];
        const double* c = cj + static_cast<std::size_t>(i) * B + first_v[static_cast<std::size_t>(i)];
        const double* n = &basis_v[static_cast<std::size_t>(i) * (p + 1)];
        for (int r = 0; r <= p; ++r) acc += c[r] * n[r];
      }
      y[j] = acc;
    }
  }

  // Single-sample reverse pass. Accumulates parameter gradients into g_base /
  // g_spline (same layouts as base_w / spline_c) and writes input gradients
  // into gx unless null.
  void backward(const double* x, const double* gy, double* gx, double* g_base,
                double* g_spline) const {
    const int p = grid.order;
    const int B = grid.num_basis();
    thread_local std::vector<double> silu_v, dsilu_v, basis_v, dbasis_v;
    thread_local std::vector<int> first_v;
    silu_v.resize(static_cast<std::size_t>(in_dim));
    dsilu_v.resize(static_cast<std::size_t>(in_dim));
    basis_v.resize(static_cast<std::size_t>(in_dim) * (p + 1));
    dbasis_v.resize(static_cast<std::size_t>(in_dim) * (p + 1));
    first_v.resize(static_cast<std::size_t>(in_dim));
    for (int i = 0; i < in_dim; ++i) {
      silu_v[static_cast<std::size_t>(i)] = silu(x[i]);
      dsilu_v[static_cast<std::size_t>(i)] = silu_grad(x[i]);
      grid.basis_and_deriv(x[i], first_v[static_cast<std::size_t>(i)],
                           &basis_v[static_cast<std::size_t>(i) * (p + 1)],
                           &dbasis_v[static_cast<std::size_t>(i) * (p + 1)]);
    }
    if (gx != nullptr) std::fill(gx, gx + in_dim, 0.0);
    for (int j = 0; j < out_dim; ++j) {
      const double g = gy[j];
      if (g == 0.0) continue;
      const double* bw = &base_w[static_cast<std::size_t>(j) * in_dim];
      const double* cj = &spline_c[static_cast<std::size_t>(j) * in_dim * B];
      double* gb = &g_base[static_cast<std::size_t>(j) * in_dim];
      double* gc = &g_spline[static_cast<std::size_t>(j) * in_dim * B];
      for (int i = 0; i < in_dim; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        const int f = first_v[si];
        const double* n = &basis_v[si * (p + 1)];
        const double* dn = &dbasis_v[si * (p + 1)];
        gb[i] += g * silu_v[si];
        double* gci = gc + si * B + f;
        const double* ci = cj + si * B + f;
        double dspline = 0.0;
        for (int r = 0; r <= p; ++r) {
          gci[r] += g * n[r];
          dspline += ci[r] * dn[r];
        }
        if (gx != nullptr) gx[i] += g * (bw[i] * dsilu_v[si] + dspline);
      }
    }
  }
};

// Shape-checked single-layer evaluation.
inline std::vector<double> kan_forward(const KanLayer& layer, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != layer.in_dim)
    throw ShapeError("kan_forward: input length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(layer.in_dim));
  std::vector<double> y(static_cast<std::size_t>(layer.out_dim));
  layer.forward(x.data(), y.data());
  return y;
}

}  // namespace semx
