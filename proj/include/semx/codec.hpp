// Semantic encoder/decoder pair: KAN layers 384->128->32 with batch norm on
// the latent, mirrored 32->128->384 with a tanh squash, trained end-to-end
// through the simulated channel by SGD with momentum on reconstruction MSE.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "semx/channel.hpp"
#include "semx/kan.hpp"
#include "semx/rng.hpp"
#include "semx/types.hpp"

namespace semx {

inline constexpr int kCodecInputDim = 384;   // m
inline constexpr int kCodecHiddenDim = 128;
inline constexpr int kCodecLatentDim = 32;   // k

// c = k / m. Expansion is not compression.
inline double bandwidth_ratio(int k, int m) {
  if (k <= 0 || m <= 0) throw ConfigError("bandwidth_ratio: dims must be positive");
  if (k > m) throw ConfigError("bandwidth_ratio: k exceeds m");
  return static_cast<double>(k) / static_cast<double>(m);
}

struct BatchNorm {
  int dim = 0;
  double eps = 1e-5;
  double momentum = 0.1;  // running-stat update rate
  std::vector<double> gamma, beta, running_mean, running_var;

  static BatchNorm init(int dim) {
    BatchNorm bn;
    bn.dim = dim;
    bn.gamma.assign(static_cast<std::size_t>(dim), 1.0);
    bn.beta.assign(static_cast<std::size_t>(dim), 0.0);
    bn.running_mean.assign(static_cast<std::size_t>(dim), 0.0);
    bn.running_var.assign(static_cast<std::size_t>(dim), 1.0);
    return bn;
  }

  void forward_eval(const double* s, double* out) const {
    for (int c = 0; c < dim; ++c)
      out[c] = gamma[static_cast<std::size_t>(c)] *
                   (s[c] - running_mean[static_cast<std::size_t>(c)]) /
                   std::sqrt(running_var[static_cast<std::size_t>(c)] + eps) +
               beta[static_cast<std::size_t>(c)];
  }
};

enum class CodecMode { train, eval };

struct CodecParams {
  KanLayer enc1, enc2;  // m->h, h->k
  BatchNorm bn;         // k
  KanLayer dec1, dec2;  // k->h, h->m
  CodecMode mode = CodecMode::eval;

  int input_dim() const { return enc1.in_dim; }
  int hidden_dim() const { return enc1.out_dim; }
  int latent_dim() const { return enc2.out_dim; }
  double bandwidth() const { return bandwidth_ratio(latent_dim(), input_dim()); }

  static CodecParams init(int m = kCodecInputDim, int h = kCodecHiddenDim,
                          int k = kCodecLatentDim, const SplineGrid& grid = {},
                          std::uint64_t seed = 1) {
    RngStream rng(derive_seed(seed, 0xC0DECULL));
    CodecParams p;
    p.enc1 = KanLayer::init(m, h, grid, rng);
    p.enc2 = KanLayer::init(h, k, grid, rng);
    p.bn = BatchNorm::init(k);
    p.dec1 = KanLayer::init(k, h, grid, rng);
    p.dec2 = KanLayer::init(h, m, grid, rng);
    // zero output weights: the decoder starts at tanh(0) = 0, so the squash
    // cannot saturate before training has moved anything
    std::fill(p.dec2.base_w.begin(), p.dec2.base_w.end(), 0.0);
    return p;
  }

  static CodecParams zeros(int m = kCodecInputDim, int h = kCodecHiddenDim,
                           int k = kCodecLatentDim, const SplineGrid& grid = {}) {
    CodecParams p;
    p.enc1 = KanLayer::zeros(m, h, grid);
    p.enc2 = KanLayer::zeros(h, k, grid);
    p.bn = BatchNorm::init(k);
    p.dec1 = KanLayer::zeros(k, h, grid);
    p.dec2 = KanLayer::zeros(h, m, grid);
    return p;
  }
};

namespace detail {

inline void relu_inplace(std::vector<double>& v) {
  for (double& x : v)
    if (x < 0) x = 0;
}

}  // namespace detail

// s = F_se(x, alpha): deterministic in eval mode. Inputs outside [-1,1] are
// clamped (counted when a counter is supplied).
inline std::vector<double> encode(std::span<const double> x, const CodecParams& params,
                                  long* clamp_counter = nullptr) {
  if (params.mode != CodecMode::eval)
    throw StateError("encode: params are in train mode outside a training step");
  if (static_cast<int>(x.size()) != params.input_dim())
    throw ShapeError("encode: input length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(params.input_dim()));
  std::vector<double> xin(x.begin(), x.end());
  for (double& v : xin) {
    if (v < -1.0 || v > 1.0) {
      if (clamp_counter != nullptr) ++(*clamp_counter);
      v = std::clamp(v, -1.0, 1.0);
    }
  }
  std::vector<double> a1(static_cast<std::size_t>(params.hidden_dim()));
  params.enc1.forward(xin.data(), a1.data());
  detail::relu_inplace(a1);
  std::vector<double> s_pre(static_cast<std::size_t>(params.latent_dim()));
  params.enc2.forward(a1.data(), s_pre.data());
  std::vector<double> s(static_cast<std::size_t>(params.latent_dim()));
  params.bn.forward_eval(s_pre.data(), s.data());
  return s;
}

// x_hat = F_sd(y, beta): output strictly inside (-1, 1) via the tanh squash.
inline std::vector<double> decode(std::span<const double> y, const CodecParams& params) {
  if (params.mode != CodecMode::eval)
    throw StateError("decode: params are in train mode outside a training step");
  if (static_cast<int>(y.size()) != params.latent_dim())
    throw ShapeError("decode: input length " + std::to_string(y.size()) + ", expected " +
                     std::to_string(params.latent_dim()));
  std::vector<double> a3(static_cast<std::size_t>(params.hidden_dim()));
  params.dec1.forward(y.data(), a3.data());
  detail::relu_inplace(a3);
  std::vector<double> a4(static_cast<std::size_t>(params.input_dim()));
  params.dec2.forward(a3.data(), a4.data());
  // keep the squash strictly inside (-1, 1) even when tanh saturates in fp
  constexpr double inside_one = 1.0 - 0x1p-53;
  for (double& v : a4) v = std::clamp(std::tanh(v), -inside_one, inside_one);
  return a4;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 500;
  int batch_size = 32;
  double lr = 0.3;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  bool shuffle = true;
  // When non-empty, each batch draws its SNR uniformly from this list
  // (mixed-SNR training); otherwise the channel config's snr_db is used.
  std::vector<double> snr_mix_db;
  // 0 = architecture default for the input width.
  int hidden_dim = 0;
  int latent_dim = 0;
  // SGD stabilizers: global gradient-norm clip (0 disables), linear warmup
  // over the first fraction of epochs, cosine decay to lr * lr_final_frac.
  // Weight decay applies to the KAN weights only; it counters the scale
  // drift that batch norm otherwise leaves unconstrained.
  double grad_clip = 1.0;
  double warmup_frac = 0.05;
  double lr_final_frac = 0.1;
  double weight_decay = 1e-4;

  void validate() const {
    if (epochs <= 0 || batch_size <= 0) throw ConfigError("train: epochs/batch must be positive");
    if (lr <= 0) throw ConfigError("train: learning rate must be positive");
    if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum out of [0,1)");
    if (grad_clip < 0) throw ConfigError("train: grad_clip must be >= 0");
    if (warmup_frac < 0 || warmup_frac >= 1) throw ConfigError("train: warmup_frac out of [0,1)");
    if (lr_final_frac <= 0 || lr_final_frac > 1)
      throw ConfigError("train: lr_final_frac out of (0,1]");
    if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  }

  double lr_at(int epoch) const {
    const double t = (epochs > 1) ? static_cast<double>(epoch) / (epochs - 1) : 1.0;
    if (warmup_frac > 0 && t < warmup_frac) return lr * (t / warmup_frac);
    const double u = (warmup_frac < 1.0) ? (t - warmup_frac) / (1.0 - warmup_frac) : 1.0;
    const double cos_part = 0.5 * (1.0 + std::cos(3.14159265358979323846 * u));
    return lr * (lr_final_frac + (1.0 - lr_final_frac) * cos_part);
  }

  nlohmann::json to_json() const {
    return {{"epochs", epochs},        {"batch_size", batch_size},
            {"lr", lr},                {"momentum", momentum},
            {"seed", seed},            {"shuffle", shuffle},
            {"snr_mix_db", snr_mix_db}, {"grad_clip", grad_clip},
            {"warmup_frac", warmup_frac}, {"lr_final_frac", lr_final_frac},
            {"weight_decay", weight_decay}, {"loss", "reconstruction_mse"}};
  }
};

struct TrainResult {
  CodecParams params;
  std::vector<double> loss_trace;  // mean reconstruction MSE per epoch
};

namespace detail {

struct CodecGrads {
  std::vector<double> e1b, e1s, e2b, e2s, d1b, d1s, d2b, d2s, gamma, beta;

  static CodecGrads zeros_like(const CodecParams& p) {
    CodecGrads g;
    g.e1b.assign(p.enc1.n_base(), 0.0);
    g.e1s.assign(p.enc1.n_spline(), 0.0);
    g.e2b.assign(p.enc2.n_base(), 0.0);
    g.e2s.assign(p.enc2.n_spline(), 0.0);
    g.d1b.assign(p.dec1.n_base(), 0.0);
    g.d1s.assign(p.dec1.n_spline(), 0.0);
    g.d2b.assign(p.dec2.n_base(), 0.0);
    g.d2s.assign(p.dec2.n_spline(), 0.0);
    g.gamma.assign(p.bn.gamma.size(), 0.0);
    g.beta.assign(p.bn.beta.size(), 0.0);
    return g;
  }

  void zero() {
    for (auto* v : {&e1b, &e1s, &e2b, &e2s, &d1b, &d1s, &d2b, &d2s, &gamma, &beta})
      std::fill(v->begin(), v->end(), 0.0);
  }
};

struct ParamView {
  double* p;
  double* g;
  double* v;
  std::size_t n;
  bool decay;  // weight decay applies (not to the batch-norm affine params)
};

inline std::vector<ParamView> param_views(CodecParams& p, CodecGrads& g, CodecGrads& vel) {
  return {
      {p.enc1.base_w.data(), g.e1b.data(), vel.e1b.data(), g.e1b.size(), true},
      {p.enc1.spline_c.data(), g.e1s.data(), vel.e1s.data(), g.e1s.size(), true},
      {p.enc2.base_w.data(), g.e2b.data(), vel.e2b.data(), g.e2b.size(), true},
      {p.enc2.spline_c.data(), g.e2s.data(), vel.e2s.data(), g.e2s.size(), true},
      {p.bn.gamma.data(), g.gamma.data(), vel.gamma.data(), g.gamma.size(), false},
      {p.bn.beta.data(), g.beta.data(), vel.beta.data(), g.beta.size(), false},
      {p.dec1.base_w.data(), g.d1b.data(), vel.d1b.data(), g.d1b.size(), true},
      {p.dec1.spline_c.data(), g.d1s.data(), vel.d1s.data(), g.d1s.size(), true},
      {p.dec2.base_w.data(), g.d2b.data(), vel.d2b.data(), g.d2b.size(), true},
      {p.dec2.spline_c.data(), g.d2s.data(), vel.d2s.data(), g.d2s.size(), true},
  };
}

// Activations for one mini-batch; reused across batches.
struct BatchWork {
  std::vector<std::vector<double>> x, a1, r1, s_pre, s_bn, ych, a3, r3, xhat;
  std::vector<ChannelRealization> rz;
  std::vector<double> mu, var;

  void resize(std::size_t batch, int m, int h, int k) {
    auto sz = [batch](std::vector<std::vector<double>>& v, int d) {
      v.resize(batch);
      for (auto& row : v) row.resize(static_cast<std::size_t>(d));
    };
    sz(x, m);
    sz(a1, h);
    sz(r1, h);
    sz(s_pre, k);
    sz(s_bn, k);
    sz(ych, k);
    sz(a3, h);
    sz(r3, h);
    sz(xhat, m);
    rz.resize(batch);
    mu.assign(static_cast<std::size_t>(k), 0.0);
    var.assign(static_cast<std::size_t>(k), 0.0);
  }
};

// Pure forward over a batch in train mode (batch statistics, channel in the
// loop). Does not touch running stats; returns mean reconstruction MSE.
inline double forward_train(const CodecParams& p, const std::vector<const double*>& batch,
                            const ChannelConfig& ch, RngStream& chan_rng, BatchWork& w) {
  const int m = p.input_dim(), h = p.hidden_dim(), k = p.latent_dim();
  const std::size_t B = batch.size();
  w.resize(B, m, h, k);
  for (std::size_t b = 0; b < B; ++b) {
    std::memcpy(w.x[b].data(), batch[b], sizeof(double) * static_cast<std::size_t>(m));
    p.enc1.forward(w.x[b].data(), w.a1[b].data());
    w.r1[b] = w.a1[b];
    relu_inplace(w.r1[b]);
    p.enc2.forward(w.r1[b].data(), w.s_pre[b].data());
  }
  // biased batch statistics
  std::fill(w.mu.begin(), w.mu.end(), 0.0);
  std::fill(w.var.begin(), w.var.end(), 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (int c = 0; c < k; ++c) w.mu[static_cast<std::size_t>(c)] += w.s_pre[b][static_cast<std::size_t>(c)];
  for (auto& v : w.mu) v /= static_cast<double>(B);
  for (std::size_t b = 0; b < B; ++b)
    for (int c = 0; c < k; ++c) {
      const double d = w.s_pre[b][static_cast<std::size_t>(c)] - w.mu[static_cast<std::size_t>(c)];
      w.var[static_cast<std::size_t>(c)] += d * d;
    }
  for (auto& v : w.var) v /= static_cast<double>(B);

  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (int c = 0; c < k; ++c) {
      const std::size_t sc = static_cast<std::size_t>(c);
      w.s_bn[b][sc] = p.bn.gamma[sc] * (w.s_pre[b][sc] - w.mu[sc]) /
                          std::sqrt(w.var[sc] + p.bn.eps) +
                      p.bn.beta[sc];
    }
    auto tx = transmit(w.s_bn[b], ch, chan_rng);
    w.ych[b] = std::move(tx.y);
    w.rz[b] = std::move(tx.realization);
    p.dec1.forward(w.ych[b].data(), w.a3[b].data());
    w.r3[b] = w.a3[b];
    relu_inplace(w.r3[b]);
    p.dec2.forward(w.r3[b].data(), w.xhat[b].data());
    double se = 0.0;
    for (int c = 0; c < m; ++c) {
      const std::size_t sc = static_cast<std::size_t>(c);
      w.xhat[b][sc] = std::tanh(w.xhat[b][sc]);
      const double d = w.xhat[b][sc] - w.x[b][sc];
      se += d * d;
    }
    loss += se / static_cast<double>(m);
  }
  return loss / static_cast<double>(B);
}

// Reverse pass matching forward_train; channel gains pass straight through.
inline void backward_train(const CodecParams& p, BatchWork& w, CodecGrads& g) {
  const int m = p.input_dim(), h = p.hidden_dim(), k = p.latent_dim();
  const std::size_t B = w.x.size();
  const double scale = 1.0 / static_cast<double>(B);
  std::vector<double> g_out(static_cast<std::size_t>(m));
  std::vector<double> g_r3(static_cast<std::size_t>(h)), g_y(static_cast<std::size_t>(k));
  std::vector<std::vector<double>> g_sbn(B, std::vector<double>(static_cast<std::size_t>(k)));

  for (std::size_t b = 0; b < B; ++b) {
    for (int c = 0; c < m; ++c) {
      const std::size_t sc = static_cast<std::size_t>(c);
      const double xh = w.xhat[b][sc];
      const double g_xhat = scale * 2.0 * (xh - w.x[b][sc]) / static_cast<double>(m);
      g_out[sc] = g_xhat * (1.0 - xh * xh);  // through tanh
    }
    p.dec2.backward(w.r3[b].data(), g_out.data(), g_r3.data(), g.d2b.data(), g.d2s.data());
    for (int c = 0; c < h; ++c)
      if (w.a3[b][static_cast<std::size_t>(c)] <= 0.0) g_r3[static_cast<std::size_t>(c)] = 0.0;
    p.dec1.backward(w.ych[b].data(), g_r3.data(), g_y.data(), g.d1b.data(), g.d1s.data());
    const auto& rz = w.rz[b];
    if (rz.gain_im.empty()) {
      for (int c = 0; c < k; ++c)
        g_sbn[b][static_cast<std::size_t>(c)] =
            g_y[static_cast<std::size_t>(c)] * rz.gain_re[static_cast<std::size_t>(c)];
    } else {
      for (int c = 0; c + 1 < k; c += 2) {
        const std::size_t sc = static_cast<std::size_t>(c);
        const double a = rz.gain_re[sc], bb = rz.gain_im[sc];
        g_sbn[b][sc] = a * g_y[sc] + bb * g_y[sc + 1];
        g_sbn[b][sc + 1] = -bb * g_y[sc] + a * g_y[sc + 1];
      }
      if (k % 2 == 1)
        g_sbn[b][static_cast<std::size_t>(k - 1)] =
            g_y[static_cast<std::size_t>(k - 1)] * rz.gain_re[static_cast<std::size_t>(k - 1)];
    }
  }

  // Batch-norm backward over the whole batch.
  std::vector<std::vector<double>> g_spre(B, std::vector<double>(static_cast<std::size_t>(k)));
  for (int c = 0; c < k; ++c) {
    const std::size_t sc = static_cast<std::size_t>(c);
    const double inv = 1.0 / std::sqrt(w.var[sc] + p.bn.eps);
    double g_gamma = 0.0, g_beta = 0.0, g_var = 0.0, g_mu = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double xn = (w.s_pre[b][sc] - w.mu[sc]) * inv;
      g_gamma += g_sbn[b][sc] * xn;
      g_beta += g_sbn[b][sc];
      const double gxn = g_sbn[b][sc] * p.bn.gamma[sc];
      g_var += gxn * (w.s_pre[b][sc] - w.mu[sc]) * (-0.5) * inv * inv * inv;
      g_mu += gxn * (-inv);
    }
    g.gamma[sc] += g_gamma;
    g.beta[sc] += g_beta;
    for (std::size_t b = 0; b < B; ++b) {
      const double gxn = g_sbn[b][sc] * p.bn.gamma[sc];
      g_spre[b][sc] = gxn * inv +
                      g_var * 2.0 * (w.s_pre[b][sc] - w.mu[sc]) / static_cast<double>(B) +
                      g_mu / static_cast<double>(B);
    }
  }

  std::vector<double> g_r1(static_cast<std::size_t>(h));
  for (std::size_t b = 0; b < B; ++b) {
    p.enc2.backward(w.r1[b].data(), g_spre[b].data(), g_r1.data(), g.e2b.data(), g.e2s.data());
    for (int c = 0; c < h; ++c)
      if (w.a1[b][static_cast<std::size_t>(c)] <= 0.0) g_r1[static_cast<std::size_t>(c)] = 0.0;
    p.enc1.backward(w.x[b].data(), g_r1.data(), nullptr, g.e1b.data(), g.e1s.data());
  }
}

}  // namespace detail

// Mini-batch SGD with momentum; fully deterministic given cfg.seed, including
// all channel noise drawn inside the forward pass.
// Exact population statistics of the pre-norm latent over a dataset, stored
// as the frozen eval-mode running stats. Run once after training so eval
// normalization matches the converged encoder instead of a momentum average.
inline void recalibrate_batchnorm(CodecParams& params,
                                  const std::vector<std::vector<double>>& data) {
  const int h = params.hidden_dim(), k = params.latent_dim();
  std::vector<double> a1(static_cast<std::size_t>(h)), s(static_cast<std::size_t>(k));
  std::vector<double> mean(static_cast<std::size_t>(k), 0.0), m2(static_cast<std::size_t>(k), 0.0);
  for (const auto& x : data) {
    params.enc1.forward(x.data(), a1.data());
    detail::relu_inplace(a1);
    params.enc2.forward(a1.data(), s.data());
    for (int c = 0; c < k; ++c) {
      mean[static_cast<std::size_t>(c)] += s[static_cast<std::size_t>(c)];
      m2[static_cast<std::size_t>(c)] += s[static_cast<std::size_t>(c)] * s[static_cast<std::size_t>(c)];
    }
  }
  const double n = static_cast<double>(data.size());
  for (int c = 0; c < k; ++c) {
    const std::size_t sc = static_cast<std::size_t>(c);
    params.bn.running_mean[sc] = mean[sc] / n;
    params.bn.running_var[sc] = std::max(0.0, m2[sc] / n - (mean[sc] / n) * (mean[sc] / n));
  }
}

inline TrainResult train_codec(const std::vector<std::vector<double>>& data,
                               const TrainConfig& cfg, const ChannelConfig& channel) {
  cfg.validate();
  channel.validate();
  if (data.empty()) throw ConfigError("train: dataset is empty");
  const int m = static_cast<int>(data.front().size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (static_cast<int>(data[i].size()) != m)
      throw ShapeError("train: ragged dataset at vector " + std::to_string(i));
    for (double v : data[i])
      if (!(v >= -1.0 - 1e-12 && v <= 1.0 + 1e-12))
        throw ConfigError("train: dataset value out of [-1,1] at vector " + std::to_string(i));
  }

  int h = cfg.hidden_dim;
  int k = cfg.latent_dim;
  if (h <= 0) h = (m >= kCodecHiddenDim) ? kCodecHiddenDim : std::max(4, m / 2);
  if (k <= 0) k = (m == kCodecInputDim) ? kCodecLatentDim : std::max(2, m / 8);
  if (k > m) throw ConfigError("train: latent dim exceeds input dim");
  CodecParams params = CodecParams::init(m, h, k, SplineGrid{}, cfg.seed);
  params.mode = CodecMode::train;

  detail::CodecGrads grads = detail::CodecGrads::zeros_like(params);
  detail::CodecGrads vel = detail::CodecGrads::zeros_like(params);
  detail::BatchWork work;

  RngStream order_rng(derive_seed(cfg.seed, 0x0BDE));
  RngStream chan_rng(derive_seed(cfg.seed, 0xCAA7));

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  result.loss_trace.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) order_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const double*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]].data());

      ChannelConfig ch = channel;
      if (!cfg.snr_mix_db.empty()) {
        const int pick = order_rng.uniform_int(0, static_cast<int>(cfg.snr_mix_db.size()) - 1);
        ch.snr_db = cfg.snr_mix_db[static_cast<std::size_t>(pick)];
      }

      const double loss = detail::forward_train(params, batch, ch, chan_rng, work);
      if (!std::isfinite(loss))
        throw StateError("train: non-finite loss at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(batch_index));
      epoch_loss += loss * static_cast<double>(end - start);
      seen += end - start;

      grads.zero();
      detail::backward_train(params, work, grads);

      // running statistics (unbiased variance, PyTorch convention)
      const std::size_t B = end - start;
      const double unbias = (B > 1) ? static_cast<double>(B) / static_cast<double>(B - 1) : 1.0;
      for (int c = 0; c < params.latent_dim(); ++c) {
        const std::size_t sc = static_cast<std::size_t>(c);
        params.bn.running_mean[sc] =
            (1.0 - params.bn.momentum) * params.bn.running_mean[sc] + params.bn.momentum * work.mu[sc];
        params.bn.running_var[sc] = (1.0 - params.bn.momentum) * params.bn.running_var[sc] +
                                    params.bn.momentum * work.var[sc] * unbias;
      }

      double clip_scale = 1.0;
      if (cfg.grad_clip > 0) {
        double norm2 = 0.0;
        for (auto& view : detail::param_views(params, grads, vel))
          for (std::size_t i = 0; i < view.n; ++i) norm2 += view.g[i] * view.g[i];
        const double norm = std::sqrt(norm2);
        if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
      }
      const double lr_now = cfg.lr_at(epoch);
      for (auto& view : detail::param_views(params, grads, vel)) {
        const double wd = view.decay ? cfg.weight_decay : 0.0;
        for (std::size_t i = 0; i < view.n; ++i) {
          view.v[i] = cfg.momentum * view.v[i] -
                      lr_now * (clip_scale * view.g[i] + wd * view.p[i]);
          view.p[i] += view.v[i];
        }
      }
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(seen));
  }

  recalibrate_batchnorm(params, data);
  params.mode = CodecMode::eval;
  result.params = std::move(params);
  return result;
}

// Analytic gradients vs central finite differences over every parameter.
// Default is a disabled channel; a noiseless fading channel may be supplied
// to check the gradient through the gain path (realizations are re-seeded
// identically for every evaluation).
inline double grad_check(const CodecParams& params_in,
                         const std::vector<std::vector<double>>& xs, double fd_h = 1e-5,
                         const ChannelConfig* channel = nullptr,
                         std::uint64_t channel_seed = 42) {
  CodecParams params = params_in;
  params.mode = CodecMode::train;
  ChannelConfig ch;
  ch.snr_db = std::numeric_limits<double>::infinity();
  if (channel != nullptr) {
    ch = *channel;
    if (!ch.noiseless())
      throw ConfigError("grad_check: channel must be noiseless (additive noise is not a "
                        "function of the parameters)");
  }

  std::vector<const double*> batch;
  for (const auto& x : xs) {
    if (static_cast<int>(x.size()) != params.input_dim())
      throw ShapeError("grad_check: sample length mismatch");
    batch.push_back(x.data());
  }

  detail::BatchWork work;
  auto eval = [&]() {
    RngStream rng(channel_seed);  // identical gain draws on every call
    return detail::forward_train(params, batch, ch, rng, work);
  };

  detail::CodecGrads grads = detail::CodecGrads::zeros_like(params);
  detail::CodecGrads vel = detail::CodecGrads::zeros_like(params);
  eval();
  detail::backward_train(params, work, grads);

  double max_rel = 0.0;
  for (auto& view : detail::param_views(params, grads, vel)) {
    for (std::size_t i = 0; i < view.n; ++i) {
      const double saved = view.p[i];
      view.p[i] = saved + fd_h;
      const double lp = eval();
      view.p[i] = saved - fd_h;
      const double lm = eval();
      view.p[i] = saved;
      const double g_fd = (lp - lm) / (2.0 * fd_h);
      const double g_an = view.g[i];
      const double rel = std::abs(g_an - g_fd) / std::max({1e-6, std::abs(g_an), std::abs(g_fd)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Checkpoint format: "SEMXCKPT" magic, version, dims, grid, then all tensors
// as little-endian f64 in a fixed order. A JSON sidecar (path + ".json")
// carries the training config and final loss.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ofstream& out, double v) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

inline void put_block(std::ofstream& out, const std::vector<double>& v) {
  for (double x : v) put_f64(out, x);
}

inline void get_block(std::ifstream& in, std::vector<double>& v) {
  for (double& x : v) x = get_f64(in);
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const CodecParams& p, const std::string& path,
                            const nlohmann::json& sidecar = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  out.write("SEMXCKPT", 8);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(p.input_dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(p.hidden_dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(p.latent_dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(p.enc1.grid.size));
  detail::put_u32(out, static_cast<std::uint32_t>(p.enc1.grid.order));
  detail::put_f64(out, p.enc1.grid.lo);
  detail::put_f64(out, p.enc1.grid.hi);
  detail::put_f64(out, p.bn.eps);
  detail::put_f64(out, p.bn.momentum);
  detail::put_block(out, p.enc1.base_w);
  detail::put_block(out, p.enc1.spline_c);
  detail::put_block(out, p.enc2.base_w);
  detail::put_block(out, p.enc2.spline_c);
  detail::put_block(out, p.bn.gamma);
  detail::put_block(out, p.bn.beta);
  detail::put_block(out, p.bn.running_mean);
  detail::put_block(out, p.bn.running_var);
  detail::put_block(out, p.dec1.base_w);
  detail::put_block(out, p.dec1.spline_c);
  detail::put_block(out, p.dec2.base_w);
  detail::put_block(out, p.dec2.spline_c);
  if (!out) throw ConfigError("checkpoint write failed: " + path);
  std::ofstream side(path + ".json");
  side << sidecar.dump(2) << '\n';
}

inline CodecParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "SEMXCKPT")
    throw ConfigError("not a codec checkpoint: " + path);
  const std::uint32_t version = detail::get_u32(in);
  if (version != kCheckpointVersion)
    throw ConfigError("checkpoint version " + std::to_string(version) + " unsupported (want " +
                      std::to_string(kCheckpointVersion) + "): " + path);
  const int m = static_cast<int>(detail::get_u32(in));
  const int h = static_cast<int>(detail::get_u32(in));
  const int k = static_cast<int>(detail::get_u32(in));
  SplineGrid grid;
  grid.size = static_cast<int>(detail::get_u32(in));
  grid.order = static_cast<int>(detail::get_u32(in));
  grid.lo = detail::get_f64(in);
  grid.hi = detail::get_f64(in);
  grid.validate();
  CodecParams p = CodecParams::zeros(m, h, k, grid);
  p.bn.eps = detail::get_f64(in);
  p.bn.momentum = detail::get_f64(in);
  detail::get_block(in, p.enc1.base_w);
  detail::get_block(in, p.enc1.spline_c);
  detail::get_block(in, p.enc2.base_w);
  detail::get_block(in, p.enc2.spline_c);
  detail::get_block(in, p.bn.gamma);
  detail::get_block(in, p.bn.beta);
  detail::get_block(in, p.bn.running_mean);
  detail::get_block(in, p.bn.running_var);
  detail::get_block(in, p.dec1.base_w);
  detail::get_block(in, p.dec1.spline_c);
  detail::get_block(in, p.dec2.base_w);
  detail::get_block(in, p.dec2.spline_c);
  if (!in) throw ConfigError("truncated checkpoint: " + path);
  p.mode = CodecMode::eval;
  return p;
}

}  // namespace semx
