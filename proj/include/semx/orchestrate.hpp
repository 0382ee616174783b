// End-to-end V2I / V2V pipelines over a clip corpus: agents -> codec ->
// channel -> predictor, emitting PredictionRecords plus SNR and horizon
// sweeps. Every run is a pure function of (corpus, config, seed); randomness
// is forked per purpose so ablation toggles never shift unrelated draws.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "semx/channel.hpp"
#include "semx/clips.hpp"
#include "semx/codec.hpp"
#include "semx/features.hpp"
#include "semx/metrics.hpp"
#include "semx/predict.hpp"
#include "semx/rng.hpp"
#include "semx/schema.hpp"
#include "semx/semantics.hpp"
#include "semx/types.hpp"

namespace semx {

inline constexpr const char* kSemxVersion = "0.1.0";

enum class RunMode { v2i, v2v };
enum class Ablation { base, F, FS, P, FP, full };

inline const char* run_mode_name(RunMode m) { return m == RunMode::v2i ? "v2i" : "v2v"; }

inline const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::base: return "base";
    case Ablation::F: return "F";
    case Ablation::FS: return "FS";
    case Ablation::P: return "P";
    case Ablation::FP: return "FP";
    case Ablation::full: return "full";
  }
  return "?";
}

inline Ablation ablation_from_name(const std::string& s) {
  if (s == "base") return Ablation::base;
  if (s == "F") return Ablation::F;
  if (s == "FS") return Ablation::FS;
  if (s == "P") return Ablation::P;
  if (s == "FP") return Ablation::FP;
  if (s == "full") return Ablation::full;
  throw ConfigError("unknown ablation: " + s);
}

// Which optional predictor inputs an ablation wires in.
struct AblationWiring {
  bool features = false;
  bool semantics = false;
  bool neighbor_preds = false;
};

inline AblationWiring ablation_wiring(Ablation a, RunMode mode) {
  switch (a) {
    case Ablation::base: return {false, false, false};
    case Ablation::F: return {true, false, false};
    case Ablation::FS: return {true, true, false};
    case Ablation::P: return {false, false, true};
    case Ablation::FP: return {true, false, true};
    case Ablation::full: return {true, true, mode == RunMode::v2v};
  }
  return {};
}

struct RunConfig {
  RunMode mode = RunMode::v2i;
  std::string corpus;  // NGSIM-format CSV (meters)
  std::string scene_schema = "builtin:scene_v1";
  std::string vehicle_schema = "builtin:vehicle_v1";
  ChannelConfig channel;
  std::map<std::string, std::string> codecs;  // stream ("fr"|"sr"|"pr") -> checkpoint
  PredictorConfig predictor;
  Ablation ablation = Ablation::full;
  int v2v_rounds = 2;
  std::uint64_t seed = 1;
  double neighbor_radius_m = 50.0;
  int stride = kClipLen;
  RulesConfig rules;
  std::string semantic_backend = "rules";  // "rules" | "llm"
  std::string llm_semantic_template;       // template paths, llm backends only
  std::string llm_predictor_template;
  bool capture_io = false;  // keep per-scene decoded vectors (wiring checks)

  void validate() const {
    channel.validate();
    predictor.validate();
    if (v2v_rounds < 1) throw ConfigError("run: v2v_rounds must be >= 1");
    if (neighbor_radius_m <= 0) throw ConfigError("run: neighbor radius must be positive");
    if (mode == RunMode::v2i &&
        (ablation == Ablation::P || ablation == Ablation::FP))
      throw ConfigError("run: ablation " + std::string(ablation_name(ablation)) +
                        " requires v2v mode");
    if (semantic_backend != "rules" && semantic_backend != "llm")
      throw ConfigError("run: semantic_backend must be 'rules' or 'llm'");
  }

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

inline nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["mode"] = run_mode_name(mode);
  j["corpus"] = corpus;
  j["scene_schema"] = scene_schema;
  j["vehicle_schema"] = vehicle_schema;
  j["channel"] = {{"snr_db", std::isinf(channel.snr_db) ? nlohmann::json("inf")
                                                        : nlohmann::json(channel.snr_db)},
                  {"fading", channel.fading == Fading::rayleigh_block ? "rayleigh_block" : "none"},
                  {"block_len", channel.block_len},
                  {"complex_pairing", channel.complex_pairing},
                  {"equalize", channel.equalize}};
  j["codecs"] = codecs;
  j["predictor"] = {{"kind", predictor_kind_name(predictor.kind)},
                    {"k", predictor.k},
                    {"safety_gap_m", predictor.safety_gap_m},
                    {"congestion_speed_factor", predictor.congestion_speed_factor},
                    {"lane_width_m", predictor.lane_width_m},
                    {"speed_cap_mps", predictor.speed_cap_mps}};
  j["ablation"] = ablation_name(ablation);
  j["v2v_rounds"] = v2v_rounds;
  j["seed"] = seed;
  j["neighbor_radius_m"] = neighbor_radius_m;
  j["stride"] = stride;
  j["rules"] = {{"sudden_decel_mps2", rules.sudden_decel_mps2},
                {"speed_std_ref_mps", rules.speed_std_ref_mps},
                {"z_anomaly", rules.z_anomaly},
                {"stopped_speed_mps", rules.stopped_speed_mps},
                {"min_moving_speed_mps", rules.min_moving_speed_mps}};
  j["semantic_backend"] = semantic_backend;
  if (!llm_semantic_template.empty()) j["llm_semantic_template"] = llm_semantic_template;
  if (!llm_predictor_template.empty()) j["llm_predictor_template"] = llm_predictor_template;
  return j;
}

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  const std::string mode = j.value("mode", "v2i");
  if (mode == "v2i")
    c.mode = RunMode::v2i;
  else if (mode == "v2v")
    c.mode = RunMode::v2v;
  else
    throw ConfigError("run config: mode must be v2i or v2v");
  c.corpus = j.value("corpus", "");
  c.scene_schema = j.value("scene_schema", c.scene_schema);
  c.vehicle_schema = j.value("vehicle_schema", c.vehicle_schema);
  if (j.contains("channel")) {
    const auto& ch = j["channel"];
    if (ch.contains("snr_db")) {
      if (ch["snr_db"].is_string()) {
        const std::string s = ch["snr_db"].get<std::string>();
        if (s != "inf") throw ConfigError("channel.snr_db string must be 'inf'");
        c.channel.snr_db = std::numeric_limits<double>::infinity();
      } else {
        c.channel.snr_db = ch["snr_db"].get<double>();
      }
    }
    const std::string fading = ch.value("fading", "none");
    if (fading == "none")
      c.channel.fading = Fading::none;
    else if (fading == "rayleigh_block")
      c.channel.fading = Fading::rayleigh_block;
    else
      throw ConfigError("channel.fading must be none or rayleigh_block");
    c.channel.block_len = ch.value("block_len", c.channel.block_len);
    c.channel.complex_pairing = ch.value("complex_pairing", c.channel.complex_pairing);
    c.channel.equalize = ch.value("equalize", c.channel.equalize);
  }
  if (j.contains("codecs")) c.codecs = j["codecs"].get<std::map<std::string, std::string>>();
  if (j.contains("predictor")) {
    const auto& p = j["predictor"];
    const std::string kind = p.value("kind", "maneuver");
    if (kind == "cv")
      c.predictor.kind = PredictorKind::cv;
    else if (kind == "maneuver")
      c.predictor.kind = PredictorKind::maneuver;
    else if (kind == "llm")
      c.predictor.kind = PredictorKind::llm;
    else
      throw ConfigError("predictor.kind must be cv, maneuver or llm");
    c.predictor.k = p.value("k", c.predictor.k);
    c.predictor.safety_gap_m = p.value("safety_gap_m", c.predictor.safety_gap_m);
    c.predictor.congestion_speed_factor =
        p.value("congestion_speed_factor", c.predictor.congestion_speed_factor);
    c.predictor.lane_width_m = p.value("lane_width_m", c.predictor.lane_width_m);
    c.predictor.speed_cap_mps = p.value("speed_cap_mps", c.predictor.speed_cap_mps);
  }
  c.ablation = ablation_from_name(j.value("ablation", "full"));
  c.v2v_rounds = j.value("v2v_rounds", c.v2v_rounds);
  c.seed = j.value("seed", c.seed);
  c.neighbor_radius_m = j.value("neighbor_radius_m", c.neighbor_radius_m);
  c.stride = j.value("stride", c.stride);
  if (j.contains("rules")) {
    const auto& r = j["rules"];
    c.rules.sudden_decel_mps2 = r.value("sudden_decel_mps2", c.rules.sudden_decel_mps2);
    c.rules.speed_std_ref_mps = r.value("speed_std_ref_mps", c.rules.speed_std_ref_mps);
    c.rules.z_anomaly = r.value("z_anomaly", c.rules.z_anomaly);
    c.rules.stopped_speed_mps = r.value("stopped_speed_mps", c.rules.stopped_speed_mps);
    c.rules.min_moving_speed_mps = r.value("min_moving_speed_mps", c.rules.min_moving_speed_mps);
  }
  c.semantic_backend = j.value("semantic_backend", c.semantic_backend);
  c.llm_semantic_template = j.value("llm_semantic_template", "");
  c.llm_predictor_template = j.value("llm_predictor_template", "");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct RecordMetrics {
  double ade = 0, fde = 0, rmse = 0;
};

struct PredictionRecord {
  std::int64_t scene_id = 0;
  std::int64_t vehicle_id = 0;
  std::string mode;
  std::string ablation;
  double snr_db = 0;
  int k = 1;
  CandidateSet candidates;
  std::vector<TrackPoint> truth;
  std::optional<RecordMetrics> metrics;

  std::string clip_id() const {
    return std::to_string(scene_id) + ":" + std::to_string(vehicle_id);
  }
};

// Best-of-K scores; each record is scored exactly once.
inline void score_records(std::vector<PredictionRecord>& records) {
  for (auto& r : records) {
    if (r.metrics.has_value())
      throw StateError("record " + r.clip_id() + " already scored");
    const auto trajs = r.candidates.trajectories();
    RecordMetrics m;
    m.ade = best_of_k(trajs, r.truth, MetricKind::ade);
    m.fde = best_of_k(trajs, r.truth, MetricKind::fde);
    m.rmse = best_of_k(trajs, r.truth, MetricKind::rmse);
    r.metrics = m;
  }
}

inline nlohmann::json record_to_json(const PredictionRecord& r) {
  nlohmann::json j;
  j["clip_id"] = r.clip_id();
  j["scene_id"] = r.scene_id;
  j["vehicle_id"] = r.vehicle_id;
  j["mode"] = r.mode;
  j["ablation"] = r.ablation;
  j["snr_db"] = std::isinf(r.snr_db) ? nlohmann::json("inf") : nlohmann::json(r.snr_db);
  j["k"] = r.k;
  j["provenance"] = r.candidates.provenance;
  auto cands = nlohmann::json::array();
  for (const auto& c : r.candidates.candidates) {
    auto pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({p.x, p.y});
    cands.push_back({{"weight", c.weight},
                     {"hypothesis_id", c.hypothesis_id},
                     {"label", c.label},
                     {"xy", pts}});
  }
  j["candidates"] = cands;
  auto truth = nlohmann::json::array();
  for (const auto& p : r.truth) truth.push_back({p.x, p.y});
  j["truth"] = truth;
  if (r.metrics.has_value()) {
    j["metrics"] = {{"ade", r.metrics->ade}, {"fde", r.metrics->fde}, {"rmse", r.metrics->rmse}};
  }
  return j;
}

inline void write_records_jsonl(const std::vector<PredictionRecord>& records,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open records file for writing: " + path);
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Run context: loaded schemas, codecs and backends
// ---------------------------------------------------------------------------

struct NormBounds {
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

  double nx(double x) const { return 2.0 * (x - x_min) / (x_max - x_min) - 1.0; }
  double ny(double y) const { return 2.0 * (y - y_min) / (y_max - y_min) - 1.0; }
  double ix(double v) const { return x_min + (v + 1.0) * 0.5 * (x_max - x_min); }
  double iy(double v) const { return y_min + (v + 1.0) * 0.5 * (y_max - y_min); }
};

inline NormBounds corpus_bounds(const std::vector<Scene>& scenes, double margin = 10.0) {
  NormBounds b;
  b.x_min = b.y_min = std::numeric_limits<double>::max();
  b.x_max = b.y_max = std::numeric_limits<double>::lowest();
  for (const auto& sc : scenes)
    for (const auto& c : sc.clips)
      for (const auto* seq : {&c.history, &c.future})
        for (const auto& p : *seq) {
          b.x_min = std::min(b.x_min, p.x);
          b.x_max = std::max(b.x_max, p.x);
          b.y_min = std::min(b.y_min, p.y);
          b.y_max = std::max(b.y_max, p.y);
        }
  if (b.x_min > b.x_max) throw ConfigError("corpus_bounds: empty corpus");
  b.x_min -= margin;
  b.x_max += margin;
  b.y_min -= margin;
  b.y_max += margin;
  return b;
}

// x_pr layout: 50 (x, y) pairs interleaved and normalized, zero-padded to the
// codec width.
inline std::vector<double> trajectory_to_vector(const std::vector<TrackPoint>& traj,
                                                const NormBounds& b) {
  std::vector<double> v(static_cast<std::size_t>(kCodecInputDim), 0.0);
  const std::size_t n = std::min<std::size_t>(traj.size(), kFutureLen);
  for (std::size_t i = 0; i < n; ++i) {
    v[2 * i] = std::clamp(b.nx(traj[i].x), -1.0, 1.0);
    v[2 * i + 1] = std::clamp(b.ny(traj[i].y), -1.0, 1.0);
  }
  return v;
}

inline std::vector<TrackPoint> vector_to_trajectory(std::span<const double> v,
                                                    const NormBounds& b, const TrackPoint& anchor,
                                                    std::int64_t sender_id,
                                                    int horizon = kFutureLen) {
  if (static_cast<int>(v.size()) < 2 * horizon)
    throw ShapeError("vector_to_trajectory: vector too short");
  std::vector<TrackPoint> out(static_cast<std::size_t>(horizon));
  for (int s = 0; s < horizon; ++s) {
    TrackPoint p;
    p.vehicle_id = sender_id;
    p.t = anchor.t + (s + 1) * kSampleDt;
    p.x = b.ix(v[static_cast<std::size_t>(2 * s)]);
    p.y = b.iy(v[static_cast<std::size_t>(2 * s + 1)]);
    out[static_cast<std::size_t>(s)] = p;
  }
  return out;
}

struct RunContext {
  FeatureSchema scene_schema;
  FeatureSchema vehicle_schema;
  std::optional<CodecParams> codec_fr, codec_sr, codec_pr;
  std::optional<SemanticBackend> backend_scene, backend_vehicle;
  std::optional<LlmPredictorConfig> llm_predictor;
};

namespace detail {

inline void check_codec(const CodecParams& p, const std::string& stream) {
  if (p.input_dim() != kCodecInputDim || p.latent_dim() != kCodecLatentDim)
    throw ConfigError("codec '" + stream + "' has dims " + std::to_string(p.input_dim()) + "->" +
                      std::to_string(p.latent_dim()) + ", pipeline requires " +
                      std::to_string(kCodecInputDim) + "->" + std::to_string(kCodecLatentDim));
}

inline SemanticBackend make_backend(const RunConfig& cfg, const FeatureSchema& schema) {
  RulesBackend rules(schema, cfg.rules);
  if (cfg.semantic_backend == "llm") {
    const char* url = std::getenv("SEMX_LLM_URL");
    if (url == nullptr || *url == '\0')
      throw ConfigError("semantic_backend=llm requires SEMX_LLM_URL");
    LlmConfig lc;
    lc.url = url;
    if (const char* key = std::getenv("SEMX_LLM_KEY")) lc.key = key;
    if (cfg.llm_semantic_template.empty())
      throw ConfigError("semantic_backend=llm requires llm_semantic_template");
    return SemanticBackend(std::move(rules), lc, load_text_file(cfg.llm_semantic_template));
  }
  return SemanticBackend(std::move(rules));
}

}  // namespace detail

// Loads schemas, checkpoints and backends; every mismatch is a startup error
// raised before any scene is processed.
inline RunContext make_run_context(const RunConfig& cfg) {
  cfg.validate();
  RunContext ctx;
  ctx.scene_schema = FeatureSchema::load(cfg.scene_schema);
  ctx.vehicle_schema = FeatureSchema::load(cfg.vehicle_schema);
  if (ctx.scene_schema.kind != SchemaKind::scene)
    throw ConfigError("scene_schema is not a scene schema");
  if (ctx.vehicle_schema.kind != SchemaKind::vehicle)
    throw ConfigError("vehicle_schema is not a vehicle schema");

  const auto wiring = ablation_wiring(cfg.ablation, cfg.mode);
  auto load_stream = [&](const char* stream) -> std::optional<CodecParams> {
    const auto it = cfg.codecs.find(stream);
    if (it == cfg.codecs.end()) return std::nullopt;
    CodecParams p = load_checkpoint(it->second);
    detail::check_codec(p, stream);
    return p;
  };
  ctx.codec_fr = load_stream("fr");
  ctx.codec_sr = load_stream("sr");
  ctx.codec_pr = load_stream("pr");
  if (cfg.mode == RunMode::v2i) {
    if (wiring.features && !ctx.codec_fr.has_value())
      throw ConfigError("v2i run with features wired needs a 'fr' codec checkpoint");
    if (wiring.semantics && !ctx.codec_sr.has_value())
      throw ConfigError("v2i run with semantics wired needs an 'sr' codec checkpoint");
  } else if (wiring.neighbor_preds && !ctx.codec_pr.has_value()) {
    throw ConfigError("v2v run with neighbor predictions needs a 'pr' codec checkpoint");
  }

  ctx.backend_scene = detail::make_backend(cfg, ctx.scene_schema);
  ctx.backend_vehicle = detail::make_backend(cfg, ctx.vehicle_schema);

  if (cfg.predictor.kind == PredictorKind::llm) {
    const char* url = std::getenv("SEMX_LLM_URL");
    if (url == nullptr || *url == '\0')
      throw ConfigError("predictor.kind=llm requires SEMX_LLM_URL");
    if (cfg.llm_predictor_template.empty())
      throw ConfigError("predictor.kind=llm requires llm_predictor_template");
    LlmPredictorConfig lp;
    lp.llm.url = url;
    if (const char* key = std::getenv("SEMX_LLM_KEY")) lp.llm.key = key;
    lp.prompt_template = load_text_file(cfg.llm_predictor_template);
    ctx.llm_predictor = std::move(lp);
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

struct SceneIo {
  std::int64_t scene_id = 0;
  std::optional<FeatureVector> decoded_features;
  std::optional<SemanticReport> decoded_report;
  double fr_mse = std::numeric_limits<double>::quiet_NaN();
  double sr_mse = std::numeric_limits<double>::quiet_NaN();
};

struct RunResult {
  std::vector<PredictionRecord> records;
  std::vector<SceneIo> scene_io;  // populated when cfg.capture_io
  double mean_fr_mse = std::numeric_limits<double>::quiet_NaN();
  double mean_sr_mse = std::numeric_limits<double>::quiet_NaN();
  long clamp_count = 0;
  NormBounds pr_bounds;  // v2v trajectory normalization, for the manifest
};

namespace detail {

inline constexpr std::uint64_t kTagChannelFr = 0x4652;
inline constexpr std::uint64_t kTagChannelSr = 0x5352;
inline constexpr std::uint64_t kTagChannelPr = 0x5052;
inline constexpr std::uint64_t kTagPredict = 0x505245;

// encode -> transmit -> (equalize) -> decode for one vector.
inline std::vector<double> through_channel(const std::vector<double>& x, const CodecParams& codec,
                                           const ChannelConfig& ch, RngStream& rng,
                                           long* clamps) {
  const auto s = encode(x, codec, clamps);
  auto tx = transmit(s, ch, rng);
  if (ch.equalize) {
    const auto eq = equalize(tx.y, tx.realization);
    return decode(eq, codec);
  }
  return decode(tx.y, codec);
}

inline double mse_of(std::span<const double> a, std::span<const double> b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

inline CandidateSet run_predictor(const RunConfig& cfg, const RunContext& ctx,
                                  std::span<const TrackPoint> history,
                                  const FeatureVector* fv, const FeatureSchema* schema,
                                  const SemanticReport* report,
                                  const std::vector<NeighborPrediction>* nb, RngStream& rng) {
  if (cfg.predictor.kind == PredictorKind::llm && ctx.llm_predictor.has_value()) {
    return predict_llm(history, fv, schema, report, nb, cfg.predictor, *ctx.llm_predictor, rng)
        .set;
  }
  return predict_fused(history, fv, schema, report, nb, cfg.predictor, rng);
}

}  // namespace detail

// V2I: the RSU extracts scene features, analyzes them, transmits both streams
// through the channel; each vehicle fuses the decoded context with its own
// history.
inline RunResult run_v2i(const std::vector<Scene>& scenes, const RunConfig& cfg,
                         const RunContext& ctx) {
  cfg.validate();
  const auto wiring = ablation_wiring(cfg.ablation, RunMode::v2i);
  RunResult result;
  double fr_mse_sum = 0, sr_mse_sum = 0;
  std::size_t fr_n = 0, sr_n = 0;

  for (const auto& scene : scenes) {
    ExtractionStats stats;
    const FeatureVector features = extract_scene_features(scene, ctx.scene_schema, &stats);
    result.clamp_count += stats.clamped;
    const SemanticReport report = analyze(features, *ctx.backend_scene);

    std::optional<FeatureVector> decoded_features;
    std::optional<SemanticReport> decoded_report;
    SceneIo io;
    io.scene_id = scene.scene_id;

    if (wiring.features) {
      RngStream ch_rng(derive_seed(cfg.seed, detail::kTagChannelFr,
                                   static_cast<std::uint64_t>(scene.scene_id)));
      const auto xhat = detail::through_channel(features.values, *ctx.codec_fr, cfg.channel,
                                                ch_rng, &result.clamp_count);
      io.fr_mse = detail::mse_of(features.values, xhat);
      fr_mse_sum += io.fr_mse;
      ++fr_n;
      FeatureVector fv;
      fv.values = xhat;
      fv.schema_version = features.schema_version;
      decoded_features = std::move(fv);
    }
    if (wiring.semantics) {
      const auto x_sr = serialize_report(report);
      RngStream ch_rng(derive_seed(cfg.seed, detail::kTagChannelSr,
                                   static_cast<std::uint64_t>(scene.scene_id)));
      const auto xhat = detail::through_channel(x_sr, *ctx.codec_sr, cfg.channel, ch_rng,
                                                &result.clamp_count);
      io.sr_mse = detail::mse_of(x_sr, xhat);
      sr_mse_sum += io.sr_mse;
      ++sr_n;
      decoded_report = deserialize_report(xhat);
    }

    for (const auto& clip : scene.clips) {
      RngStream pred_rng(derive_seed(cfg.seed, detail::kTagPredict,
                                     static_cast<std::uint64_t>(scene.scene_id),
                                     static_cast<std::uint64_t>(clip.vehicle_id)));
      PredictionRecord rec;
      rec.scene_id = scene.scene_id;
      rec.vehicle_id = clip.vehicle_id;
      rec.mode = "v2i";
      rec.ablation = ablation_name(cfg.ablation);
      rec.snr_db = cfg.channel.snr_db;
      rec.k = cfg.predictor.k;
      rec.truth = clip.future;
      rec.candidates = detail::run_predictor(
          cfg, ctx, clip.history, decoded_features.has_value() ? &*decoded_features : nullptr,
          decoded_features.has_value() ? &ctx.scene_schema : nullptr,
          decoded_report.has_value() ? &*decoded_report : nullptr, nullptr, pred_rng);
      result.records.push_back(std::move(rec));
    }
    if (cfg.capture_io) {
      io.decoded_features = decoded_features;
      io.decoded_report = decoded_report;
      result.scene_io.push_back(std::move(io));
    }
  }
  if (fr_n > 0) result.mean_fr_mse = fr_mse_sum / static_cast<double>(fr_n);
  if (sr_n > 0) result.mean_sr_mse = sr_mse_sum / static_cast<double>(sr_n);
  return result;
}

// V2V: round 0 broadcasts CV predictions; later rounds fuse local features /
// semantics with the trajectories decoded from each neighbor's broadcast.
inline RunResult run_v2v(const std::vector<Scene>& scenes, const RunConfig& cfg,
                         const RunContext& ctx) {
  cfg.validate();
  const auto wiring = ablation_wiring(cfg.ablation, RunMode::v2v);
  RunResult result;
  result.pr_bounds = corpus_bounds(scenes);

  for (const auto& scene : scenes) {
    // round 0: CV bootstrap
    std::map<std::int64_t, std::vector<TrackPoint>> broadcast;
    for (const auto& clip : scene.clips)
      broadcast[clip.vehicle_id] = predict_cv(clip.history);

    std::map<std::int64_t, CandidateSet> final_sets;
    for (int round = 1; round <= cfg.v2v_rounds; ++round) {
      std::map<std::int64_t, std::vector<TrackPoint>> next_broadcast;
      for (const auto& clip : scene.clips) {
        std::optional<FeatureVector> features;
        std::optional<SemanticReport> report;
        if (wiring.features || wiring.semantics) {
          ExtractionStats stats;
          features = extract_vehicle_features(clip, ctx.vehicle_schema, &stats);
          result.clamp_count += stats.clamped;
        }
        if (wiring.semantics) report = analyze(*features, *ctx.backend_vehicle);

        std::vector<NeighborPrediction> decoded;
        if (wiring.neighbor_preds) {
          for (const std::int64_t nb : neighbors(scene, clip.vehicle_id, cfg.neighbor_radius_m)) {
            const auto x_pr = trajectory_to_vector(broadcast.at(nb), result.pr_bounds);
            RngStream link_rng(derive_seed(
                derive_seed(cfg.seed, detail::kTagChannelPr,
                            static_cast<std::uint64_t>(scene.scene_id),
                            static_cast<std::uint64_t>(round)),
                static_cast<std::uint64_t>(nb), static_cast<std::uint64_t>(clip.vehicle_id)));
            const auto xhat = detail::through_channel(x_pr, *ctx.codec_pr, cfg.channel, link_rng,
                                                      &result.clamp_count);
            decoded.push_back(NeighborPrediction{
                nb, vector_to_trajectory(xhat, result.pr_bounds, clip.history.back(), nb)});
          }
        }

        RngStream pred_rng(derive_seed(
            derive_seed(cfg.seed, detail::kTagPredict, static_cast<std::uint64_t>(scene.scene_id),
                        static_cast<std::uint64_t>(clip.vehicle_id)),
            static_cast<std::uint64_t>(round)));
        CandidateSet set = detail::run_predictor(
            cfg, ctx, clip.history,
            (wiring.features && features.has_value()) ? &*features : nullptr,
            (wiring.features && features.has_value()) ? &ctx.vehicle_schema : nullptr,
            report.has_value() ? &*report : nullptr, decoded.empty() ? nullptr : &decoded,
            pred_rng);
        next_broadcast[clip.vehicle_id] = set.candidates.front().points;
        if (round == cfg.v2v_rounds) final_sets[clip.vehicle_id] = std::move(set);
      }
      broadcast = std::move(next_broadcast);
    }

    for (const auto& clip : scene.clips) {
      PredictionRecord rec;
      rec.scene_id = scene.scene_id;
      rec.vehicle_id = clip.vehicle_id;
      rec.mode = "v2v";
      rec.ablation = ablation_name(cfg.ablation);
      rec.snr_db = cfg.channel.snr_db;
      rec.k = cfg.predictor.k;
      rec.truth = clip.future;
      rec.candidates = std::move(final_sets.at(clip.vehicle_id));
      result.records.push_back(std::move(rec));
    }
  }
  return result;
}

inline RunResult run_pipeline(const std::vector<Scene>& scenes, const RunConfig& cfg,
                              const RunContext& ctx) {
  return cfg.mode == RunMode::v2i ? run_v2i(scenes, cfg, ctx) : run_v2v(scenes, cfg, ctx);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

// Codec training vectors for one stream kind over a clip corpus.
inline std::vector<std::vector<double>> corpus_vectors(const std::vector<Scene>& scenes,
                                                       const std::string& kind,
                                                       const FeatureSchema& scene_schema,
                                                       const FeatureSchema& vehicle_schema,
                                                       const RulesConfig& rules = {}) {
  std::vector<std::vector<double>> out;
  if (kind == "fr") {
    for (const auto& sc : scenes) out.push_back(extract_scene_features(sc, scene_schema).values);
  } else if (kind == "sr") {
    RulesBackend backend(scene_schema, rules);
    for (const auto& sc : scenes)
      out.push_back(serialize_report(backend.analyze(extract_scene_features(sc, scene_schema))));
  } else if (kind == "vr") {
    for (const auto& sc : scenes)
      for (const auto& clip : sc.clips)
        out.push_back(extract_vehicle_features(clip, vehicle_schema).values);
  } else if (kind == "pr") {
    const NormBounds b = corpus_bounds(scenes);
    for (const auto& sc : scenes)
      for (const auto& clip : sc.clips)
        out.push_back(trajectory_to_vector(predict_cv(clip.history), b));
  } else {
    throw ConfigError("corpus_vectors: kind must be fr, sr, vr or pr (got " + kind + ")");
  }
  return out;
}

struct SummaryRow {
  double snr_db = 0;
  int k = 0;
  std::string metric;
  double value = 0;
  std::size_t n_clips = 0;
};

struct SweepResult {
  std::vector<SummaryRow> rows;
  // Records per SNR point (candidates kept at max K), for file dumps.
  std::vector<std::pair<double, std::vector<PredictionRecord>>> records_per_snr;
};

namespace detail {

inline std::uint64_t snr_tag(double snr_db) {
  if (std::isinf(snr_db)) return 0x1F1F1F1FULL;
  return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::llround(snr_db * 1000.0)) +
                                    (1LL << 40));
}

inline std::vector<double> prefix_best_of_k(const std::vector<PredictionRecord>& records, int k,
                                            MetricKind metric) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    std::vector<std::vector<TrackPoint>> trajs;
    const int take = std::min<int>(k, static_cast<int>(r.candidates.candidates.size()));
    for (int i = 0; i < take; ++i)
      trajs.push_back(r.candidates.candidates[static_cast<std::size_t>(i)].points);
    out.push_back(best_of_k(trajs, r.truth, metric));
  }
  return out;
}

}  // namespace detail

// SNR x K cross product, rows by SNR and columns by K. Each SNR point runs once
// with K = max(k_list); K columns are scored on weight-ranked candidate
// prefixes so per-cell best-of-K monotonicity is exact. Per-SNR seeds derive
// from the master seed.
inline SweepResult sweep(const std::vector<Scene>& scenes, const RunConfig& base_cfg,
                         const std::vector<double>& snr_list = {0.0, 10.0, 20.0},
                         const std::vector<int>& k_list = {1, 5, 10}) {
  if (snr_list.empty() || k_list.empty()) throw ConfigError("sweep: empty snr or k list");
  const int k_max = *std::max_element(k_list.begin(), k_list.end());

  SweepResult result;
  for (const double snr : snr_list) {
    RunConfig cfg = base_cfg;
    cfg.channel.snr_db = snr;
    cfg.predictor.k = k_max;
    cfg.seed = derive_seed(base_cfg.seed, detail::snr_tag(snr));
    const RunContext ctx = make_run_context(cfg);
    RunResult run = run_pipeline(scenes, cfg, ctx);
    score_records(run.records);

    for (const int k : k_list) {
      for (const MetricKind metric : {MetricKind::ade, MetricKind::rmse, MetricKind::fde}) {
        auto per_clip = detail::prefix_best_of_k(run.records, k, metric);
        const auto summary = corpus_summary(metric, k, std::move(per_clip));
        result.rows.push_back(
            SummaryRow{snr, k, summary.metric, summary.mean, summary.n_clips});
      }
    }
    if (!std::isnan(run.mean_fr_mse))
      result.rows.push_back(SummaryRow{snr, 0, "fr_recon_mse", run.mean_fr_mse, scenes.size()});
    if (!std::isnan(run.mean_sr_mse))
      result.rows.push_back(SummaryRow{snr, 0, "sr_recon_mse", run.mean_sr_mse, scenes.size()});
    result.records_per_snr.emplace_back(snr, std::move(run.records));
  }
  return result;
}

struct HorizonRow {
  std::string model;
  int step = 0;
  std::string metric;
  double value = 0;
  std::size_t n_clips = 0;
};

// Metrics recomputed truncating futures (and candidates) to each step count.
inline std::vector<HorizonRow> horizon_sweep(const std::vector<Scene>& scenes,
                                             const RunConfig& cfg,
                                             const std::vector<int>& steps = {10, 20, 30, 40, 50}) {
  for (int s : steps)
    if (s < 1 || s > kFutureLen) throw ConfigError("horizon_sweep: step out of range");
  const RunContext ctx = make_run_context(cfg);
  RunResult run = run_pipeline(scenes, cfg, ctx);

  const std::string model = std::string(predictor_kind_name(cfg.predictor.kind)) + "-" +
                            ablation_name(cfg.ablation);
  std::vector<HorizonRow> rows;
  for (const int step : steps) {
    for (const MetricKind metric : {MetricKind::ade, MetricKind::fde, MetricKind::rmse}) {
      std::vector<double> per_clip;
      per_clip.reserve(run.records.size());
      for (const auto& r : run.records) {
        std::vector<std::vector<TrackPoint>> trajs;
        const int take = std::min<int>(cfg.predictor.k,
                                       static_cast<int>(r.candidates.candidates.size()));
        for (int i = 0; i < take; ++i) {
          const auto& pts = r.candidates.candidates[static_cast<std::size_t>(i)].points;
          trajs.emplace_back(pts.begin(), pts.begin() + step);
        }
        const std::vector<TrackPoint> truth(r.truth.begin(), r.truth.begin() + step);
        per_clip.push_back(best_of_k(trajs, truth, metric));
      }
      const auto summary = corpus_summary(metric, cfg.predictor.k, std::move(per_clip));
      rows.push_back(HorizonRow{model, step, summary.metric, summary.mean, summary.n_clips});
    }
  }
  return rows;
}

}  // namespace semx
