#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "semx/kan.hpp"
#include "semx/rng.hpp"

using namespace semx;

TEST_CASE("spline basis is a partition of unity on the grid", "[kan]") {
  SplineGrid g;
  RngStream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = rng.uniform(g.lo, g.hi);
    int first = 0;
    double n[4];
    g.basis(x, first, n);
    CHECK(first >= 0);
    CHECK(first + g.order < g.num_basis());
    double sum = 0;
    for (int r = 0; r <= g.order; ++r) {
      CHECK(n[r] >= -1e-12);
      sum += n[r];
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("spline basis matches the recursive definition", "[kan]") {
  SplineGrid g;
  const auto knots = oracle::uniform_knots(g.lo, g.hi, g.size, g.order);
  RngStream rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const double x = rng.uniform(-1.0, 1.0);
    int first = 0;
    double n[4];
    g.basis(x, first, n);
    for (int r = 0; r <= g.order; ++r) {
      const double expect = oracle::cox_de_boor(knots, first + r, g.order, x);
      CHECK(std::abs(n[r] - expect) < 1e-12);
    }
  }
}

TEST_CASE("spline derivative matches finite differences", "[kan]") {
  SplineGrid g;
  RngStream rng(5);
  const double h = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    const double x = rng.uniform(-1.0, 1.0);
    int first = 0;
    double n[4], d[4];
    g.basis_and_deriv(x, first, n, d);
    int f_p = 0, f_m = 0;
    double np[4], nm[4];
    g.basis(x + h, f_p, np);
    g.basis(x - h, f_m, nm);
    if (f_p != first || f_m != first) continue;  // skipped at knot boundaries
    for (int r = 0; r <= g.order; ++r) {
      const double fd = (np[r] - nm[r]) / (2 * h);
      CHECK(std::abs(d[r] - fd) < 1e-6);
    }
  }
}

TEST_CASE("basis extends polynomially outside the grid and stays finite", "[kan]") {
  SplineGrid g;
  for (const double x : {-2.0, -1.5, 1.5, 2.0}) {
    int first = 0;
    double n[4];
    g.basis(x, first, n);
    for (int r = 0; r <= g.order; ++r) CHECK(std::isfinite(n[r]));
  }
}

TEST_CASE("zero-parameter layer maps everything to zero", "[kan]") {
  const auto layer = KanLayer::zeros(5, 3, SplineGrid{});
  const auto y = kan_forward(layer, {0.3, -0.8, 1.0, 0.0, 0.5});
  for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("x=0 with zero splines gives zero output for any base weights", "[kan]") {
  RngStream rng(6);
  auto layer = KanLayer::init(4, 3, SplineGrid{}, rng);  // spline coeffs start at zero
  const auto y = kan_forward(layer, {0.0, 0.0, 0.0, 0.0});
  for (double v : y) CHECK(std::abs(v) < 1e-15);  // silu(0) = 0
}

TEST_CASE("kan forward matches the naive double-loop oracle", "[kan]") {
  SplineGrid g;
  RngStream rng(7);
  auto layer = KanLayer::init(3, 2, g, rng);
  for (auto& c : layer.spline_c) c = rng.uniform(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto y = kan_forward(layer, x);
    const auto expect = oracle::naive_kan_forward(3, 2, layer.base_w, layer.spline_c, g.lo, g.hi,
                                                  g.size, g.order, x);
    REQUIRE(y.size() == expect.size());
    for (std::size_t j = 0; j < y.size(); ++j) CHECK(std::abs(y[j] - expect[j]) < 1e-12);
  }
}

TEST_CASE("kan forward rejects wrong input length", "[kan]") {
  const auto layer = KanLayer::zeros(5, 3, SplineGrid{});
  CHECK_THROWS_AS(kan_forward(layer, {1.0, 2.0}), ShapeError);
}

TEST_CASE("kan input gradients match finite differences", "[kan]") {
  SplineGrid g;
  RngStream rng(8);
  auto layer = KanLayer::init(4, 3, g, rng);
  for (auto& c : layer.spline_c) c = rng.uniform(-0.5, 0.5);

  std::vector<double> x = {0.2, -0.4, 0.9, -1.1};
  std::vector<double> gy = {0.7, -0.3, 1.1};
  std::vector<double> gx(4, 0.0);
  std::vector<double> gb(layer.n_base(), 0.0), gc(layer.n_spline(), 0.0);
  layer.backward(x.data(), gy.data(), gx.data(), gb.data(), gc.data());

  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto eval = [&](double xi) {
      auto xs = x;
      xs[i] = xi;
      const auto y = kan_forward(layer, xs);
      double l = 0;
      for (std::size_t j = 0; j < y.size(); ++j) l += gy[j] * y[j];
      return l;
    };
    const double fd = (eval(x[i] + h) - eval(x[i] - h)) / (2 * h);
    CHECK(std::abs(gx[i] - fd) < 1e-6);
  }
}
