// semx: batch simulator CLI for semantic-communication-assisted trajectory
// prediction. Subcommands: ingest, synth, train-codec, run-v2i, run-v2v,
// sweep, horizon-sweep, report.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "semx/clips.hpp"
#include "semx/codec.hpp"
#include "semx/ngsim.hpp"
#include "semx/orchestrate.hpp"
#include "semx/reporting.hpp"
#include "semx/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw semx::ConfigError("cannot open config file: " + path);
  json j;
  in >> j;
  return j;
}

double parse_snr(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  return std::stod(s);
}

std::vector<semx::Scene> load_corpus(const std::string& path, int stride) {
  const auto tracks = semx::parse_ngsim(path, semx::UnitMode::meters);
  return semx::build_scenes(semx::segment_clips(tracks, 3.0, 5.0, stride));
}

semx::RunConfig load_run_config(const std::string& config_path,
                                const std::optional<double>& snr,
                                const std::optional<std::string>& fading,
                                const std::optional<std::uint64_t>& seed,
                                const std::optional<std::string>& ablation,
                                const std::optional<std::string>& corpus) {
  semx::RunConfig cfg = semx::RunConfig::from_json(load_json_file(config_path));
  if (snr) cfg.channel.snr_db = *snr;
  if (fading) {
    if (*fading == "none")
      cfg.channel.fading = semx::Fading::none;
    else if (*fading == "rayleigh_block")
      cfg.channel.fading = semx::Fading::rayleigh_block;
    else
      throw semx::ConfigError("--fading must be none or rayleigh_block");
  }
  if (seed) cfg.seed = *seed;
  if (ablation) cfg.ablation = semx::ablation_from_name(*ablation);
  if (corpus) cfg.corpus = *corpus;
  if (cfg.corpus.empty()) throw semx::ConfigError("run config: corpus path is required");
  cfg.validate();
  return cfg;
}

void write_per_clip_jsonl(const std::vector<semx::PredictionRecord>& records,
                          const std::string& path) {
  std::ofstream out(path);
  for (const auto& r : records) {
    json j = {{"clip_id", r.clip_id()},
              {"ade", r.metrics->ade},
              {"fde", r.metrics->fde},
              {"rmse", r.metrics->rmse}};
    out << j.dump() << '\n';
  }
}

void run_single(semx::RunConfig cfg, const std::string& out_dir, const std::string& subcommand,
                bool per_clip) {
  semx::DirLock lock(out_dir);
  cfg.capture_io = true;  // keeps decoded reports for the report dump
  const auto scenes = load_corpus(cfg.corpus, cfg.stride);
  const semx::RunContext ctx = semx::make_run_context(cfg);
  semx::RunResult result = semx::run_pipeline(scenes, cfg, ctx);
  semx::score_records(result.records);

  std::vector<semx::SummaryRow> rows;
  for (const semx::MetricKind m :
       {semx::MetricKind::ade, semx::MetricKind::rmse, semx::MetricKind::fde}) {
    std::vector<double> per_clip;
    for (const auto& r : result.records)
      per_clip.push_back(m == semx::MetricKind::ade    ? r.metrics->ade
                         : m == semx::MetricKind::rmse ? r.metrics->rmse
                                                       : r.metrics->fde);
    const auto summary = semx::corpus_summary(m, cfg.predictor.k, std::move(per_clip));
    rows.push_back(semx::SummaryRow{cfg.channel.snr_db, cfg.predictor.k, summary.metric,
                                    summary.mean, summary.n_clips});
  }
  if (!std::isnan(result.mean_fr_mse))
    rows.push_back(
        semx::SummaryRow{cfg.channel.snr_db, 0, "fr_recon_mse", result.mean_fr_mse, scenes.size()});
  if (!std::isnan(result.mean_sr_mse))
    rows.push_back(
        semx::SummaryRow{cfg.channel.snr_db, 0, "sr_recon_mse", result.mean_sr_mse, scenes.size()});

  semx::write_records_jsonl(result.records, (fs::path(out_dir) / "records.jsonl").string());
  semx::write_summary_csv(rows, (fs::path(out_dir) / "summary.csv").string());
  std::vector<std::string> outputs = {"records.jsonl", "summary.csv"};
  std::vector<semx::SemanticReport> decoded_reports;
  for (const auto& io : result.scene_io)
    if (io.decoded_report.has_value()) decoded_reports.push_back(*io.decoded_report);
  if (!decoded_reports.empty()) {
    semx::write_reports_jsonl(decoded_reports, (fs::path(out_dir) / "reports.jsonl").string());
    outputs.push_back("reports.jsonl");
  }
  if (per_clip) {
    write_per_clip_jsonl(result.records, (fs::path(out_dir) / "metrics_per_clip.jsonl").string());
    outputs.push_back("metrics_per_clip.jsonl");
  }
  json extra;
  if (cfg.mode == semx::RunMode::v2v) {
    extra["pr_bounds"] = {{"x_min", result.pr_bounds.x_min},
                          {"x_max", result.pr_bounds.x_max},
                          {"y_min", result.pr_bounds.y_min},
                          {"y_max", result.pr_bounds.y_max}};
  }
  extra["clamp_count"] = result.clamp_count;
  semx::write_manifest(cfg.to_json(), subcommand, outputs,
                       (fs::path(out_dir) / "manifest.json").string(), extra);
  std::printf("%s: %zu scenes, %zu records -> %s\n", subcommand.c_str(), scenes.size(),
              result.records.size(), out_dir.c_str());
}

std::string snr_label(double snr) {
  if (std::isinf(snr)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", snr);
  std::string s = buf;
  for (auto& c : s)
    if (c == '.') c = 'p';
  if (!s.empty() && s[0] == '-') s[0] = 'm';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semx: semantic-communication trajectory prediction simulator"};
  app.require_subcommand(1);

  // --- ingest ---------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "Normalize an NGSIM CSV to meters");
  std::string ingest_input, ingest_out, ingest_units = "feet";
  ingest->add_option("--input", ingest_input, "raw NGSIM-format CSV")->required();
  ingest->add_option("--units", ingest_units, "source units: feet|meters")
      ->check(CLI::IsMember({"feet", "meters"}));
  ingest->add_option("--out", ingest_out, "output CSV (meters)")->required();

  // --- synth ----------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string synth_config, synth_out;
  std::uint64_t synth_seed = 1;
  synth->add_option("--config", synth_config, "SynthConfig JSON")->required();
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output CSV")->required();

  // --- train-codec ----------------------------------------------------------
  auto* train = app.add_subcommand("train-codec", "Train a semantic codec");
  std::string train_data, train_kind = "fr", train_out;
  std::string train_scene_schema = "builtin:scene_v1", train_vehicle_schema = "builtin:vehicle_v1";
  std::string train_snr = "10", train_fading = "none";
  int train_epochs = 500, train_batch = 32, train_stride = semx::kClipLen;
  double train_lr = 0.02;
  std::uint64_t train_seed = 1;
  train->add_option("--data", train_data, "corpus CSV (meters)")->required();
  train->add_option("--kind", train_kind, "vector stream: fr|sr|vr|pr")
      ->check(CLI::IsMember({"fr", "sr", "vr", "pr"}));
  train->add_option("--schema", train_scene_schema, "scene schema (fr/sr)");
  train->add_option("--vehicle-schema", train_vehicle_schema, "vehicle schema (vr)");
  train->add_option("--snr", train_snr, "training SNR in dB, 'inf', or 'mixed'");
  train->add_option("--fading", train_fading, "none|rayleigh_block")
      ->check(CLI::IsMember({"none", "rayleigh_block"}));
  train->add_option("--epochs", train_epochs, "training epochs");
  train->add_option("--batch", train_batch, "mini-batch size");
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--stride", train_stride, "clip stride in samples");
  train->add_option("--out", train_out, "checkpoint path")->required();

  // --- runs / sweeps ----------------------------------------------------------
  std::string cfg_path, out_dir, corpus_override, schema_override;
  std::optional<double> snr_override;
  std::optional<std::string> fading_override, ablation_override;
  std::optional<std::uint64_t> seed_override;
  bool equalize_flag = false, per_clip_flag = false;
  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", cfg_path, "run config JSON")->required();
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option_function<std::string>(
        "--snr", [&](const std::string& s) { snr_override = parse_snr(s); },
        "override channel SNR (dB or 'inf')");
    cmd->add_option_function<std::string>(
        "--fading", [&](const std::string& s) { fading_override = s; }, "override fading");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { seed_override = s; }, "override master seed");
    cmd->add_option_function<std::string>(
        "--ablation", [&](const std::string& s) { ablation_override = s; }, "override ablation");
    cmd->add_option("--corpus", corpus_override, "override corpus CSV");
    cmd->add_option("--schema", schema_override, "override scene feature schema");
    cmd->add_flag("--equalize", equalize_flag, "divide the known gain out at the receiver");
    cmd->add_flag("--per-clip", per_clip_flag, "also dump per-clip metrics JSON-lines");
  };

  auto* run_v2i_cmd = app.add_subcommand("run-v2i", "Run the V2I pipeline");
  add_run_options(run_v2i_cmd);
  auto* run_v2v_cmd = app.add_subcommand("run-v2v", "Run the V2V pipeline");
  add_run_options(run_v2v_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "SNR x K metrics sweep");
  add_run_options(sweep_cmd);
  std::vector<double> sweep_snrs = {0.0, 10.0, 20.0};
  std::vector<int> sweep_ks = {1, 5, 10};
  sweep_cmd->add_option("--snr-list", sweep_snrs, "SNR points in dB");
  sweep_cmd->add_option("--k-list", sweep_ks, "K values");

  auto* horizon_cmd = app.add_subcommand("horizon-sweep", "Metrics vs prediction horizon");
  add_run_options(horizon_cmd);
  std::vector<int> horizon_steps = {10, 20, 30, 40, 50};
  horizon_cmd->add_option("--steps", horizon_steps, "horizon step counts");

  // --- report -----------------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "Merge run summaries for plotting");
  std::vector<std::string> report_dirs;
  std::string report_out;
  report_cmd->add_option("--runs", report_dirs, "run directories")->required();
  report_cmd->add_option("--out", report_out, "merged CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*ingest) {
      const auto unit = (ingest_units == "feet") ? semx::UnitMode::feet : semx::UnitMode::meters;
      const auto tracks = semx::parse_ngsim(ingest_input, unit);
      if (const auto dir = fs::path(ingest_out).parent_path(); !dir.empty())
        fs::create_directories(dir);
      semx::write_ngsim(tracks, ingest_out);
      json cfg = {{"input", ingest_input}, {"units", ingest_units}};
      semx::write_manifest(cfg, "ingest", {ingest_out}, ingest_out + ".manifest.json");
      std::printf("ingest: %zu tracks -> %s\n", tracks.size(), ingest_out.c_str());
    } else if (*synth) {
      const auto cfg = semx::SynthConfig::from_json(load_json_file(synth_config));
      const auto tracks = semx::synth_generate(cfg, synth_seed);
      if (const auto dir = fs::path(synth_out).parent_path(); !dir.empty())
        fs::create_directories(dir);
      semx::write_ngsim(tracks, synth_out);
      json mcfg = cfg.to_json();
      mcfg["seed"] = synth_seed;
      semx::write_manifest(mcfg, "synth", {synth_out}, synth_out + ".manifest.json");
      std::printf("synth: %zu tracks -> %s\n", tracks.size(), synth_out.c_str());
    } else if (*train) {
      const auto scenes = load_corpus(train_data, train_stride);
      const auto scene_schema = semx::FeatureSchema::load(train_scene_schema);
      const auto vehicle_schema = semx::FeatureSchema::load(train_vehicle_schema);
      const auto data = semx::corpus_vectors(scenes, train_kind, scene_schema, vehicle_schema);
      if (data.empty()) throw semx::ConfigError("train-codec: corpus produced no vectors");

      semx::TrainConfig tc;
      tc.epochs = train_epochs;
      tc.batch_size = train_batch;
      tc.lr = train_lr;
      tc.seed = train_seed;
      semx::ChannelConfig ch;
      ch.fading = (train_fading == "rayleigh_block") ? semx::Fading::rayleigh_block
                                                     : semx::Fading::none;
      if (train_snr == "mixed")
        tc.snr_mix_db = {0.0, 10.0, 20.0};
      else
        ch.snr_db = parse_snr(train_snr);

      const auto result = semx::train_codec(data, tc, ch);
      if (const auto dir = fs::path(train_out).parent_path(); !dir.empty())
        fs::create_directories(dir);
      json sidecar = {{"train_config", tc.to_json()},
                      {"channel",
                       {{"snr_db", train_snr}, {"fading", train_fading}}},
                      {"kind", train_kind},
                      {"n_vectors", data.size()},
                      {"final_loss", result.loss_trace.back()}};
      semx::save_checkpoint(result.params, train_out, sidecar);
      std::printf("train-codec: %zu vectors, %d epochs, final mse %.6g -> %s\n", data.size(),
                  train_epochs, result.loss_trace.back(), train_out.c_str());
    } else if (*run_v2i_cmd || *run_v2v_cmd) {
      auto cfg = load_run_config(cfg_path, snr_override, fading_override, seed_override,
                                 ablation_override,
                                 corpus_override.empty()
                                     ? std::nullopt
                                     : std::optional<std::string>(corpus_override));
      cfg.mode = (*run_v2i_cmd) ? semx::RunMode::v2i : semx::RunMode::v2v;
      if (!schema_override.empty()) cfg.scene_schema = schema_override;
      if (equalize_flag) cfg.channel.equalize = true;
      cfg.validate();
      run_single(cfg, out_dir, (*run_v2i_cmd) ? "run-v2i" : "run-v2v", per_clip_flag);
    } else if (*sweep_cmd) {
      auto cfg = load_run_config(cfg_path, snr_override, fading_override, seed_override,
                                 ablation_override,
                                 corpus_override.empty()
                                     ? std::nullopt
                                     : std::optional<std::string>(corpus_override));
      if (!schema_override.empty()) cfg.scene_schema = schema_override;
      if (equalize_flag) cfg.channel.equalize = true;
      semx::DirLock lock(out_dir);
      const auto scenes = load_corpus(cfg.corpus, cfg.stride);
      const auto result = semx::sweep(scenes, cfg, sweep_snrs, sweep_ks);
      semx::write_summary_csv(result.rows, (fs::path(out_dir) / "summary.csv").string());
      std::vector<std::string> outputs = {"summary.csv"};
      for (const auto& [snr, records] : result.records_per_snr) {
        const std::string name = "records_snr" + snr_label(snr) + ".jsonl";
        semx::write_records_jsonl(records, (fs::path(out_dir) / name).string());
        outputs.push_back(name);
      }
      json jcfg = cfg.to_json();
      jcfg["snr_list"] = sweep_snrs;
      jcfg["k_list"] = sweep_ks;
      semx::write_manifest(jcfg, "sweep", outputs,
                           (fs::path(out_dir) / "manifest.json").string());
      std::printf("sweep: %zu rows -> %s\n", result.rows.size(), out_dir.c_str());
    } else if (*horizon_cmd) {
      auto cfg = load_run_config(cfg_path, snr_override, fading_override, seed_override,
                                 ablation_override,
                                 corpus_override.empty()
                                     ? std::nullopt
                                     : std::optional<std::string>(corpus_override));
      if (!schema_override.empty()) cfg.scene_schema = schema_override;
      if (equalize_flag) cfg.channel.equalize = true;
      semx::DirLock lock(out_dir);
      const auto scenes = load_corpus(cfg.corpus, cfg.stride);
      const auto rows = semx::horizon_sweep(scenes, cfg, horizon_steps);
      semx::write_horizon_csv(rows, (fs::path(out_dir) / "horizon.csv").string());
      json jcfg = cfg.to_json();
      jcfg["steps"] = horizon_steps;
      semx::write_manifest(jcfg, "horizon-sweep", {"horizon.csv"},
                           (fs::path(out_dir) / "manifest.json").string());
      std::printf("horizon-sweep: %zu rows -> %s\n", rows.size(), out_dir.c_str());
    } else if (*report_cmd) {
      const auto outcome = semx::merge_reports(report_dirs);
      if (const auto dir = fs::path(report_out).parent_path(); !dir.empty())
        fs::create_directories(dir);
      semx::write_horizon_csv(outcome.merged, report_out);
      for (const auto& miss : outcome.missing)
        std::fprintf(stderr, "report: no summary in %s (skipped)\n", miss.c_str());
      std::printf("report: %zu rows -> %s\n", outcome.merged.size(), report_out.c_str());
      if (!outcome.missing.empty()) return 2;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "semx: %s\n", e.what());
    return 2;
  }
  return 0;
}
