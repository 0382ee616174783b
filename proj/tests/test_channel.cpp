#include <catch2/catch_amalgamated.hpp>

#include <limits>

#include "semx/channel.hpp"

using namespace semx;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> unit_power_vector(std::size_t n) {
  // alternating +-1 has empirical mean power exactly 1
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = (i % 2 == 0) ? 1.0 : -1.0;
  return s;
}
}  // namespace

TEST_CASE("noiseless channel is the identity", "[channel]") {
  ChannelConfig cfg;
  cfg.snr_db = kInf;
  RngStream rng(1);
  const std::vector<double> s = {0.5, -0.25, 1.0, 0.0};
  const auto out = transmit(s, cfg, rng);
  CHECK(out.y == s);
  CHECK(out.realization.sigma2 == 0.0);
}

TEST_CASE("noise variance follows the SNR formula", "[channel]") {
  const auto s = unit_power_vector(64);
  RngStream rng(2);
  ChannelConfig cfg;
  cfg.snr_db = 0.0;
  CHECK(transmit(s, cfg, rng).realization.sigma2 == Catch::Approx(1.0).margin(1e-12));
  cfg.snr_db = 10.0;
  CHECK(transmit(s, cfg, rng).realization.sigma2 == Catch::Approx(0.1).margin(1e-12));
  cfg.snr_db = 20.0;
  CHECK(transmit(s, cfg, rng).realization.sigma2 == Catch::Approx(0.01).margin(1e-12));
}

TEST_CASE("transmit is deterministic given (cfg, seed, s)", "[channel]") {
  ChannelConfig cfg;
  cfg.snr_db = 5.0;
  cfg.fading = Fading::rayleigh_block;
  cfg.block_len = 4;
  const auto s = unit_power_vector(32);
  RngStream r1(77), r2(77);
  const auto a = transmit(s, cfg, r1);
  const auto b = transmit(s, cfg, r2);
  CHECK(a.y == b.y);  // bitwise
  CHECK(a.realization.gain_re == b.realization.gain_re);
}

TEST_CASE("zero-power input uses the variance floor and warns", "[channel]") {
  ChannelConfig cfg;
  cfg.snr_db = 10.0;
  RngStream rng(3);
  const std::vector<double> s(16, 0.0);
  const auto out = transmit(s, cfg, rng);
  CHECK(out.realization.sigma2 == Catch::Approx(1e-12));
  CHECK(out.realization.zero_power_warnings == 1);
}

TEST_CASE("empirical SNR of a noiseless link is the +inf sentinel", "[channel]") {
  ChannelConfig cfg;
  cfg.snr_db = kInf;
  RngStream rng(4);
  const auto s = unit_power_vector(32);
  const auto out = transmit(s, cfg, rng);
  CHECK(std::isinf(measure_empirical_snr({s}, {out.y}, {out.realization})));
}

TEST_CASE("empirical SNR concentrates near the configured value", "[channel]") {
  // 2e4 symbols keeps the unit test fast; acceptance covers 1e5.
  for (const double snr : {0.0, 10.0}) {
    for (const Fading fading : {Fading::none, Fading::rayleigh_block}) {
      ChannelConfig cfg;
      cfg.snr_db = snr;
      cfg.fading = fading;
      cfg.block_len = 8;
      RngStream rng(500 + static_cast<int>(snr));
      std::vector<std::vector<double>> ss, ys;
      std::vector<ChannelRealization> rz;
      for (int b = 0; b < 625; ++b) {
        auto s = unit_power_vector(32);
        auto out = transmit(s, cfg, rng);
        ss.push_back(std::move(s));
        ys.push_back(std::move(out.y));
        rz.push_back(std::move(out.realization));
      }
      const double measured = measure_empirical_snr(ss, ys, rz);
      CHECK(std::abs(measured - snr) < 0.7);
    }
  }
}

TEST_CASE("rayleigh gains have unit mean-square", "[channel]") {
  ChannelConfig cfg;
  cfg.snr_db = kInf;
  cfg.fading = Fading::rayleigh_block;
  cfg.block_len = 1;
  RngStream rng(6);
  const std::vector<double> s(20000, 1.0);
  const auto out = transmit(s, cfg, rng);
  double acc = 0;
  for (const double h : out.realization.gain_re) acc += h * h;
  acc /= static_cast<double>(out.realization.gain_re.size());
  CHECK(acc > 0.95);
  CHECK(acc < 1.05);
}

TEST_CASE("block fading reuses one gain per block", "[channel]") {
  ChannelConfig cfg;
  cfg.snr_db = kInf;
  cfg.fading = Fading::rayleigh_block;
  cfg.block_len = 8;
  RngStream rng(7);
  const std::vector<double> s(32, 1.0);
  const auto out = transmit(s, cfg, rng);
  const auto& h = out.realization.gain_re;
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == h[(i / 8) * 8]);
  CHECK(h[0] != h[8]);  // fresh draw per block
}

TEST_CASE("equalize inverts a noiseless fading channel", "[channel]") {
  for (const bool pairing : {false, true}) {
    ChannelConfig cfg;
    cfg.snr_db = kInf;
    cfg.fading = Fading::rayleigh_block;
    cfg.block_len = 4;
    cfg.complex_pairing = pairing;
    RngStream rng(8);
    const auto s = unit_power_vector(32);
    const auto out = transmit(s, cfg, rng);
    const auto eq = equalize(out.y, out.realization);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(eq[i] == Catch::Approx(s[i]).margin(1e-9));
  }
}

TEST_CASE("channel config validation", "[channel]") {
  ChannelConfig cfg;
  cfg.block_len = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.block_len = 1;
  cfg.snr_db = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
