// Wireless link simulation, y = H * s + N. SNR is defined against the
// empirical mean power of each transmitted vector, so the knob is meaningful
// regardless of encoder output scale. No equalization is applied unless
// explicitly requested; the decoder is expected to learn noise robustness.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "semx/rng.hpp"
#include "semx/types.hpp"

namespace semx {

enum class Fading { none, rayleigh_block };

struct ChannelConfig {
  double snr_db = 10.0;  // +inf disables noise entirely
  Fading fading = Fading::none;
  int block_len = 32;           // symbols per fading realization
  bool complex_pairing = false; // pair consecutive reals into complex symbols
  bool equalize = false;        // receiver divides out the known gain
  double zero_power_floor = 1e-12;

  void validate() const {
    if (std::isnan(snr_db)) throw ConfigError("channel: snr_db is NaN");
    if (block_len < 1) throw ConfigError("channel: block_len must be >= 1");
    if (zero_power_floor <= 0) throw ConfigError("channel: zero_power_floor must be positive");
  }

  bool noiseless() const { return std::isinf(snr_db) && snr_db > 0; }
};

struct ChannelRealization {
  std::vector<double> gain_re;  // per symbol
  std::vector<double> gain_im;  // per symbol; empty in real-gain mode
  std::vector<double> faded;    // H*s, the clean post-fading signal
  double sigma2 = 0.0;          // per-component noise variance used
  int zero_power_warnings = 0;
};

struct TransmitResult {
  std::vector<double> y;
  ChannelRealization realization;
};

// One vector through the channel. Fading blocks are local to the call; the
// rng stream supplies gain draws first, then one noise draw per symbol.
inline TransmitResult transmit(std::span<const double> s, const ChannelConfig& cfg,
                               RngStream& rng) {
  cfg.validate();
  const std::size_t n = s.size();
  TransmitResult out;
  auto& rz = out.realization;
  out.y.resize(n);
  rz.faded.resize(n);
  rz.gain_re.assign(n, 1.0);
  if (cfg.complex_pairing) rz.gain_im.assign(n, 0.0);

  double power = 0.0;
  for (double v : s) {
    if (!std::isfinite(v)) throw StateError("transmit: non-finite symbol");
    power += v * v;
  }
  power = n ? power / static_cast<double>(n) : 0.0;

  double sigma2 = 0.0;
  if (!cfg.noiseless()) {
    if (power > 0.0) {
      sigma2 = power / std::pow(10.0, cfg.snr_db / 10.0);
    } else {
      sigma2 = cfg.zero_power_floor;
      rz.zero_power_warnings += 1;
    }
  }
  rz.sigma2 = sigma2;

  // Fading gains, one realization per block.
  if (cfg.fading == Fading::rayleigh_block) {
    const double rt = std::sqrt(0.5);
    for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(cfg.block_len)) {
      const double g1 = rng.gaussian() * rt;
      const double g2 = rng.gaussian() * rt;
      const std::size_t e = std::min(n, b + static_cast<std::size_t>(cfg.block_len));
      if (cfg.complex_pairing) {
        for (std::size_t i = b; i < e; ++i) {
          rz.gain_re[i] = g1;
          rz.gain_im[i] = g2;
        }
      } else {
        const double h = std::hypot(g1, g2);  // Rayleigh, E[h^2] = 1
        for (std::size_t i = b; i < e; ++i) rz.gain_re[i] = h;
      }
    }
  }

  // Apply fading.
  if (cfg.complex_pairing) {
    for (std::size_t i = 0; i + 1 < n; i += 2) {
      const double a = rz.gain_re[i], b = rz.gain_im[i];
      rz.faded[i] = a * s[i] - b * s[i + 1];
      rz.faded[i + 1] = b * s[i] + a * s[i + 1];
    }
    if (n % 2 == 1) {  // unpaired tail symbol: magnitude gain
      const std::size_t i = n - 1;
      const double h = std::hypot(rz.gain_re[i], rz.gain_im[i]);
      rz.gain_re[i] = h;
      rz.gain_im[i] = 0.0;
      rz.faded[i] = h * s[i];
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) rz.faded[i] = rz.gain_re[i] * s[i];
  }

  const double sigma = std::sqrt(sigma2);
  for (std::size_t i = 0; i < n; ++i)
    out.y[i] = rz.faded[i] + (sigma > 0.0 ? sigma * rng.gaussian() : 0.0);
  return out;
}

// Receiver-side gain compensation (only used when cfg.equalize is set).
inline std::vector<double> equalize(std::span<const double> y, const ChannelRealization& rz,
                                    double gain_floor = 1e-6) {
  std::vector<double> out(y.begin(), y.end());
  if (rz.gain_im.empty()) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] /= std::max(rz.gain_re[i], gain_floor);
  } else {
    for (std::size_t i = 0; i + 1 < out.size(); i += 2) {
      const double a = rz.gain_re[i], b = rz.gain_im[i];
      const double m2 = std::max(a * a + b * b, gain_floor * gain_floor);
      const double re = (a * y[i] + b * y[i + 1]) / m2;
      const double im = (-b * y[i] + a * y[i + 1]) / m2;
      out[i] = re;
      out[i + 1] = im;
    }
    if (out.size() % 2 == 1)
      out.back() /= std::max(rz.gain_re[out.size() - 1], gain_floor);
  }
  return out;
}

// 10*log10(sum ||H s||^2 / sum ||y - H s||^2) over matched batches; +inf when
// the noise energy is exactly zero.
inline double measure_empirical_snr(const std::vector<std::vector<double>>& s_batch,
                                    const std::vector<std::vector<double>>& y_batch,
                                    const std::vector<ChannelRealization>& realizations) {
  if (s_batch.size() != y_batch.size() || s_batch.size() != realizations.size())
    throw ShapeError("measure_empirical_snr: batch size mismatch");
  double sig = 0.0, noise = 0.0;
  for (std::size_t b = 0; b < y_batch.size(); ++b) {
    const auto& y = y_batch[b];
    const auto& rz = realizations[b];
    if (y.size() != rz.faded.size() || y.size() != s_batch[b].size())
      throw ShapeError("measure_empirical_snr: vector length mismatch at batch " +
                       std::to_string(b));
    for (std::size_t i = 0; i < y.size(); ++i) {
      sig += rz.faded[i] * rz.faded[i];
      const double d = y[i] - rz.faded[i];
      noise += d * d;
    }
  }
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / noise);
}

}  // namespace semx
