#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <limits>

#include "helpers.hpp"
#include "semx/codec.hpp"

using namespace semx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ChannelConfig noiseless() {
  ChannelConfig ch;
  ch.snr_db = kInf;
  return ch;
}

// Smooth low-rank toy vectors, comfortably inside (-1, 1).
std::vector<std::vector<double>> toy_dataset(int count, int dim, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<std::vector<double>> out;
  for (int v = 0; v < count; ++v) {
    std::vector<double> x(static_cast<std::size_t>(dim));
    const double a = rng.uniform(-0.45, 0.45), b = rng.uniform(-0.45, 0.45);
    const double w1 = rng.uniform(1.0, 3.0), w2 = rng.uniform(3.0, 6.0);
    for (int i = 0; i < dim; ++i) {
      const double u = static_cast<double>(i) / dim;
      x[static_cast<std::size_t>(i)] = a * std::sin(w1 * 6.28318 * u) + b * std::cos(w2 * 6.28318 * u);
    }
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace

TEST_CASE("bandwidth ratio", "[codec]") {
  CHECK(bandwidth_ratio(32, 384) == Catch::Approx(1.0 / 12.0).margin(1e-15));
  CHECK(bandwidth_ratio(5, 5) == 1.0);
  CHECK(bandwidth_ratio(1, 2) == 0.5);
  CHECK_THROWS_AS(bandwidth_ratio(3, 2), ConfigError);
  CHECK_THROWS_AS(bandwidth_ratio(0, 2), ConfigError);
}

TEST_CASE("codec shape contract and bandwidth bookkeeping", "[codec]") {
  const CodecParams p = CodecParams::init();
  CHECK(p.input_dim() == 384);
  CHECK(p.hidden_dim() == 128);
  CHECK(p.latent_dim() == 32);
  CHECK(p.bandwidth() == Catch::Approx(1.0 / 12.0));

  std::vector<double> x(384, 0.25);
  const auto s = encode(x, p);
  CHECK(s.size() == 32);
  const auto xhat = decode(s, p);
  CHECK(xhat.size() == 384);
}

TEST_CASE("encode is deterministic in eval mode and clamps inputs", "[codec]") {
  const CodecParams p = CodecParams::init(24, 8, 4);
  std::vector<double> x(24, 0.5);
  x[0] = 1.5;  // out of range
  long clamps = 0;
  const auto s1 = encode(x, p, &clamps);
  const auto s2 = encode(x, p);
  CHECK(s1 == s2);  // bitwise
  CHECK(clamps == 1);
}

TEST_CASE("encode/decode refuse train mode", "[codec]") {
  CodecParams p = CodecParams::init(24, 8, 4);
  p.mode = CodecMode::train;
  const std::vector<double> x(24, 0.0);
  CHECK_THROWS_AS(encode(x, p), StateError);
  CHECK_THROWS_AS(decode(std::vector<double>(4, 0.0), p), StateError);
}

TEST_CASE("decode squashes into the open unit interval", "[codec]") {
  RngStream rng(9);
  CodecParams p = CodecParams::init(24, 8, 4);
  for (auto& c : p.dec2.spline_c) c = rng.uniform(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> y(4);
    for (auto& v : y) v = rng.uniform(-3, 3);
    for (const double v : decode(y, p)) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("zero-parameter decoder outputs zeros", "[codec]") {
  const CodecParams p = CodecParams::zeros(24, 8, 4);
  const auto xhat = decode(std::vector<double>(4, 0.7), p);
  for (double v : xhat) CHECK(v == 0.0);
}

TEST_CASE("decode rejects wrong input length", "[codec]") {
  const CodecParams p = CodecParams::init(24, 8, 4);
  CHECK_THROWS_AS(decode(std::vector<double>(5, 0.0), p), ShapeError);
  CHECK_THROWS_AS(encode(std::vector<double>(23, 0.0), p), ShapeError);
}

TEST_CASE("gradient check on a zero net is exact", "[codec]") {
  const CodecParams p = CodecParams::zeros(6, 4, 2);
  const auto xs = toy_dataset(3, 6, 11);
  CHECK(grad_check(p, xs) < 1e-7);
}

TEST_CASE("gradient check on random small nets", "[codec]") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CodecParams p = CodecParams::init(6, 4, 2, SplineGrid{}, seed);
    RngStream rng(seed * 31);
    for (auto& c : p.enc1.spline_c) c = rng.uniform(-0.3, 0.3);
    for (auto& c : p.dec2.spline_c) c = rng.uniform(-0.3, 0.3);
    const auto xs = toy_dataset(3, 6, 100 + seed);
    CHECK(grad_check(p, xs) < 1e-4);
  }
}

TEST_CASE("gradients flow correctly through fading gains", "[codec]") {
  // noiseless fading channels: the only channel effect on the loss is the
  // (re-seeded, thus repeatable) gain path
  for (const bool pairing : {false, true}) {
    ChannelConfig ch;
    ch.snr_db = std::numeric_limits<double>::infinity();
    ch.fading = Fading::rayleigh_block;
    ch.block_len = 1;  // fresh complex gain per symbol pair
    ch.complex_pairing = pairing;
    CodecParams p = CodecParams::init(6, 4, 2, SplineGrid{}, 3);
    RngStream rng(91);
    for (auto& c : p.enc1.spline_c) c = rng.uniform(-0.3, 0.3);
    for (auto& c : p.dec2.spline_c) c = rng.uniform(-0.3, 0.3);
    const auto xs = toy_dataset(3, 6, 55);
    CHECK(grad_check(p, xs, 1e-5, &ch) < 1e-4);
  }
}

TEST_CASE("grad_check refuses noisy channels", "[codec]") {
  ChannelConfig noisy;
  noisy.snr_db = 10.0;
  const CodecParams p = CodecParams::zeros(6, 4, 2);
  const auto xs = toy_dataset(2, 6, 56);
  CHECK_THROWS_AS(grad_check(p, xs, 1e-5, &noisy), ConfigError);
}

TEST_CASE("finite-difference truncation error grows with h", "[codec]") {
  const CodecParams p = CodecParams::init(6, 4, 2, SplineGrid{}, 77);
  const auto xs = toy_dataset(3, 6, 78);
  const double tight = grad_check(p, xs, 1e-5);
  const double loose = grad_check(p, xs, 1e-1);
  CHECK(tight < loose);
}

TEST_CASE("training reduces reconstruction error on a small net", "[codec]") {
  const auto data = toy_dataset(16, 24, 21);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 8;
  cfg.lr = 0.03;
  cfg.seed = 5;
  cfg.hidden_dim = 12;
  cfg.latent_dim = 6;
  const auto result = train_codec(data, cfg, noiseless());
  REQUIRE(result.loss_trace.size() == 150);
  CHECK(result.loss_trace.back() < result.loss_trace.front());
  CHECK(result.params.mode == CodecMode::eval);

  // eval-mode reconstruction should be finite and bounded
  const auto s = encode(data[0], result.params);
  const auto xhat = decode(s, result.params);
  for (double v : xhat) CHECK(std::isfinite(v));
}

TEST_CASE("training is bitwise deterministic per seed", "[codec]") {
  const auto data = toy_dataset(8, 24, 22);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 4;
  cfg.lr = 0.02;
  cfg.seed = 9;
  cfg.hidden_dim = 8;
  cfg.latent_dim = 4;
  ChannelConfig ch;  // noisy channel in the loop
  ch.snr_db = 10.0;
  const auto a = train_codec(data, cfg, ch);
  const auto b = train_codec(data, cfg, ch);
  CHECK(a.params.enc1.base_w == b.params.enc1.base_w);
  CHECK(a.params.enc1.spline_c == b.params.enc1.spline_c);
  CHECK(a.params.dec2.spline_c == b.params.dec2.spline_c);
  CHECK(a.params.bn.running_mean == b.params.bn.running_mean);
  CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("training rejects bad datasets", "[codec]") {
  TrainConfig cfg;
  CHECK_THROWS_AS(train_codec({}, cfg, noiseless()), ConfigError);
  CHECK_THROWS_AS(train_codec({{0.0, 2.0}}, cfg, noiseless()), ConfigError);
  CHECK_THROWS_AS(train_codec({{0.0, 0.5}, {0.0}}, cfg, noiseless()), ShapeError);
}

TEST_CASE("checkpoint round-trips bitwise", "[codec]") {
  const auto data = toy_dataset(6, 24, 23);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 3;
  cfg.hidden_dim = 8;
  cfg.latent_dim = 4;
  const auto result = train_codec(data, cfg, noiseless());
  testutil::TempDir tmp("ckpt");
  const auto path = tmp.file("c.semx");
  save_checkpoint(result.params, path, {{"note", "unit"}});
  const auto back = load_checkpoint(path);
  CHECK(back.input_dim() == 24);
  CHECK(back.enc1.base_w == result.params.enc1.base_w);
  CHECK(back.enc1.spline_c == result.params.enc1.spline_c);
  CHECK(back.enc2.spline_c == result.params.enc2.spline_c);
  CHECK(back.bn.gamma == result.params.bn.gamma);
  CHECK(back.bn.running_var == result.params.bn.running_var);
  CHECK(back.dec1.base_w == result.params.dec1.base_w);
  CHECK(back.dec2.spline_c == result.params.dec2.spline_c);
  CHECK(std::filesystem::exists(path + ".json"));

  // same latent for the same input
  const auto s1 = encode(data[0], result.params);
  const auto s2 = encode(data[0], back);
  CHECK(s1 == s2);
}

TEST_CASE("checkpoint loader rejects foreign files", "[codec]") {
  testutil::TempDir tmp("ckpt");
  const auto path = tmp.file("bogus.semx");
  testutil::write_file(path, "definitely not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(path), ConfigError);
  CHECK_THROWS_AS(load_checkpoint(tmp.file("missing.semx")), ConfigError);
}
