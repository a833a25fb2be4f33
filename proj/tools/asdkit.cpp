// asdkit: score fusion and evaluation pipelines for active speaker
// detection. Subcommands cover the full flow: simulate or ingest a bundle,
// score face-voice matches, project them onto frames, fuse with sync
// scores, evaluate, and run the stratified analyses.
//
// Exit codes: 0 success, 1 validation/data errors (findings on stderr, one
// per line), 2 usage errors. Data goes to files only.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asdkit/asdkit.hpp"

namespace fs = std::filesystem;

namespace {

using namespace asdkit;

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    double lo = 0.0, hi = 0.0, step = 0.0;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0.0 || hi < lo)
      throw InvalidConfig("grid spec must be lo:hi:step with step > 0");
    const int n = static_cast<int>(std::llround((hi - lo) / step));
    for (int i = 0; i <= n; ++i) out.push_back(std::min(lo + i * step, hi));
    if (out.empty() || out.back() < hi) out.push_back(hi);
  } else {
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      out.push_back(std::stod(item));
    }
  }
  if (out.empty()) throw InvalidConfig("grid spec \"" + spec + "\" is empty");
  return out;
}

// Flat key = value config file for the simulator; '#' starts a comment.
void apply_sim_config_file(const fs::path& path, SimConfig& cfg, bool* seed_set) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "n_clips") cfg.n_clips = std::stoi(value);
      else if (key == "identities_min") cfg.identities_min = std::stoi(value);
      else if (key == "identities_max") cfg.identities_max = std::stoi(value);
      else if (key == "duration_s") cfg.duration_s = std::stod(value);
      else if (key == "fps") cfg.fps = std::stod(value);
      else if (key == "audio_sample_rate") cfg.audio_sample_rate = std::stod(value);
      else if (key == "spurt_on_mean_s") cfg.spurt_on_mean_s = std::stod(value);
      else if (key == "spurt_off_mean_s") cfg.spurt_off_mean_s = std::stod(value);
      else if (key == "overlap_rate") cfg.overlap_rate = std::stod(value);
      else if (key == "d_s") cfg.d_s = std::stoi(value);
      else if (key == "d_f") cfg.d_f = std::stoi(value);
      else if (key == "q_lo") cfg.q_lo = std::stod(value);
      else if (key == "q_hi") cfg.q_hi = std::stod(value);
      else if (key == "ar1_rho") cfg.ar1_rho = std::stod(value);
      else if (key == "sigma_q") cfg.sigma_q = std::stod(value);
      else if (key == "sigma_a") cfg.sigma_a = std::stod(value);
      else if (key == "sigma_f") cfg.sigma_f = std::stod(value);
      else if (key == "sync_gain") cfg.sync_gain = std::stod(value);
      else if (key == "sigma_s") cfg.sigma_s = std::stod(value);
      else if (key == "person_pool") cfg.person_pool = std::stoi(value);
      else if (key == "seed") {
        cfg.seed = std::stoull(value);
        *seed_set = true;
      } else {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": unknown key \"" + key +
                         "\"");
      }
    } catch (const std::invalid_argument&) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad value for " + key);
    }
  }
}

Bundle load_validated_bundle(const fs::path& dir, bool lenient) {
  ParseOptions opts;
  opts.lenient = lenient;
  Bundle b = load_bundle(dir, opts);
  const auto findings = validate_bundle(b);
  if (!findings.empty()) {
    for (const auto& f : findings) std::cerr << f.line() << "\n";
    throw ValidationError("bundle in " + dir.string() + " has " +
                          std::to_string(findings.size()) + " finding(s)");
  }
  return b;
}

std::vector<Match> load_matches(const fs::path& path) {
  std::vector<Match> out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Match m;
    m.utt_id = j.at("utt_id").get<std::string>();
    m.person_id = j.at("person_id").get<std::string>();
    m.prob = j.at("prob").get<double>();
    if (!(m.prob >= 0.0 && m.prob <= 1.0))
      throw ValidationError("match at " + path.string() + ":" + std::to_string(lineno) +
                            ": prob outside [0,1]");
    out.push_back(std::move(m));
  }
  return out;
}

void write_matches(const fs::path& path, const std::vector<Match>& matches) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& m : matches) {
    nlohmann::ordered_json j;
    j["utt_id"] = m.utt_id;
    j["person_id"] = m.person_id;
    j["prob"] = m.prob;
    out << j.dump() << '\n';
  }
}

struct ReportEntrySpec {
  std::string model;
  bool ensemble = false;
  std::optional<double> alpha;
  fs::path report_path;
};

// "model:ensemble:alpha:path" with alpha possibly empty, e.g.
// "TalkNet:0::sync_report.json" or "TalkNet+FVA:1:0.55:ens_report.json".
ReportEntrySpec parse_entry_spec(const std::string& spec) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : spec) {
    if (ch == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 4)
    throw InvalidConfig("entry \"" + spec + "\" must be model:ensemble:alpha:path");
  ReportEntrySpec e;
  e.model = parts[0];
  e.ensemble = parts[1] == "1" || parts[1] == "true";
  if (!parts[2].empty()) e.alpha = std::stod(parts[2]);
  e.report_path = parts[3];
  return e;
}

int run(int argc, char** argv) {
  CLI::App app{"active speaker detection score fusion & evaluation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  int threads_flag = 0;
  app.add_option("--threads", threads_flag,
                 "worker threads (default: ASDKIT_THREADS or 1); outputs do not depend on it");

  // --- ingest ---------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "load manifests, validate, write canonical copies");
  fs::path ingest_in, ingest_out;
  bool ingest_lenient = false, ingest_binary = false;
  ingest->add_option("--in", ingest_in, "input bundle directory")->required();
  ingest->add_option("--out", ingest_out, "output bundle directory")->required();
  ingest->add_flag("--lenient", ingest_lenient, "ignore unknown manifest keys");
  ingest->add_flag("--binary-embeddings", ingest_binary,
                   "write embeddings as little-endian f32 sidecars instead of JSONL");

  // --- validate -------------------------------------------------------
  auto* validate = app.add_subcommand("validate", "cross-reference audit of a bundle");
  fs::path validate_in;
  bool validate_lenient = false;
  validate->add_option("--in", validate_in, "bundle directory")->required();
  validate->add_flag("--lenient", validate_lenient, "ignore unknown manifest keys");

  // --- simulate -------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "generate a seeded synthetic bundle");
  fs::path sim_config_path, sim_out;
  std::optional<std::uint64_t> sim_seed;
  std::optional<int> sim_n_clips, sim_d_s, sim_d_f, sim_ids_min, sim_ids_max, sim_pool;
  std::optional<double> sim_duration, sim_overlap, sim_q_lo, sim_q_hi, sim_sigma_a, sim_sigma_f,
      sim_sigma_s, sim_sync_gain;
  simulate->add_option("--config", sim_config_path, "flat key=value config file");
  simulate->add_option("--out", sim_out, "output bundle directory")->required();
  simulate->add_option("--seed", sim_seed, "generator seed (required here or in the config)");
  simulate->add_option("--n-clips", sim_n_clips, "number of clips");
  simulate->add_option("--duration", sim_duration, "clip duration in seconds");
  simulate->add_option("--identities-min", sim_ids_min, "min identities per clip");
  simulate->add_option("--identities-max", sim_ids_max, "max identities per clip");
  simulate->add_option("--overlap-rate", sim_overlap, "speech overlap probability");
  simulate->add_option("--d-s", sim_d_s, "speaker embedding dimension");
  simulate->add_option("--d-f", sim_d_f, "face embedding dimension");
  simulate->add_option("--q-lo", sim_q_lo, "quality base lower bound");
  simulate->add_option("--q-hi", sim_q_hi, "quality base upper bound");
  simulate->add_option("--sigma-a", sim_sigma_a, "audio embedding noise");
  simulate->add_option("--sigma-f", sim_sigma_f, "face embedding noise");
  simulate->add_option("--sigma-s", sim_sigma_s, "sync logit noise");
  simulate->add_option("--sync-gain", sim_sync_gain, "sync logit gain");
  simulate->add_option("--person-pool", sim_pool, "shared identity pool size (0 = auto)");

  // --- fva-train ------------------------------------------------------
  auto* train = app.add_subcommand("fva-train", "train the face-voice scoring head");
  fs::path train_data, train_out;
  std::uint64_t train_seed = 0;
  int train_d = 64, train_heads = 4, train_epochs = 10, train_decay_every = 5;
  double train_lr = 1e-5, train_decay = 0.2;
  bool train_freeze = false, train_no_ffn = false, train_lenient = false;
  train->add_option("--data", train_data, "bundle directory")->required();
  train->add_option("--out", train_out, "output params file (.fvab)")->required();
  train->add_option("--seed", train_seed, "init seed")->required();
  train->add_option("--d", train_d, "shared embedding dimension");
  train->add_option("--heads", train_heads, "attention heads");
  train->add_option("--epochs", train_epochs, "training epochs");
  train->add_option("--lr", train_lr, "initial learning rate");
  train->add_option("--decay", train_decay, "learning-rate decay factor");
  train->add_option("--decay-every", train_decay_every, "epochs between decays");
  train->add_flag("--freeze-projections", train_freeze,
                  "keep the modality projections at their initialization");
  train->add_flag("--no-train-ffn", train_no_ffn, "freeze the encoder feed-forward block");
  train->add_flag("--lenient", train_lenient, "ignore unknown manifest keys");

  // --- fva-score ------------------------------------------------------
  auto* score = app.add_subcommand("fva-score", "score utterance-identity matches");
  fs::path score_data, score_params, score_out;
  bool score_lenient = false;
  score->add_option("--data", score_data, "bundle directory")->required();
  score->add_option("--params", score_params, "trained params file")->required();
  score->add_option("--out", score_out, "matches JSONL output")->required();
  score->add_flag("--lenient", score_lenient, "ignore unknown manifest keys");

  // --- project --------------------------------------------------------
  auto* project = app.add_subcommand("project", "project match probabilities onto frames");
  fs::path project_data, project_matches, project_out;
  bool project_lenient = false;
  project->add_option("--data", project_data, "bundle directory")->required();
  project->add_option("--matches", project_matches, "matches JSONL from fva-score")->required();
  project->add_option("--out", project_out, "association scores JSONL output")->required();
  project->add_flag("--lenient", project_lenient, "ignore unknown manifest keys");

  // --- fuse -----------------------------------------------------------
  auto* fuse_cmd = app.add_subcommand("fuse", "framewise weighted mean of two score streams");
  fs::path fuse_sync, fuse_assoc, fuse_out;
  double fuse_alpha = 0.5;
  fuse_cmd->add_option("--sync", fuse_sync, "sync scores JSONL")->required();
  fuse_cmd->add_option("--assoc", fuse_assoc, "association scores JSONL")->required();
  fuse_cmd->add_option("--alpha", fuse_alpha, "weight of the sync stream")->required();
  fuse_cmd->add_option("--out", fuse_out, "fused scores JSONL output")->required();

  // --- sweep ----------------------------------------------------------
  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate the ensemble over an alpha grid");
  fs::path sweep_labels, sweep_sync, sweep_assoc, sweep_out, sweep_csv_path;
  std::string sweep_grid = "0:1:0.05", sweep_metric = "map";
  sweep_cmd->add_option("--labels", sweep_labels, "labels JSONL")->required();
  sweep_cmd->add_option("--sync", sweep_sync, "sync scores JSONL")->required();
  sweep_cmd->add_option("--assoc", sweep_assoc, "association scores JSONL")->required();
  sweep_cmd->add_option("--grid", sweep_grid, "alpha grid, lo:hi:step or comma list");
  sweep_cmd->add_option("--metric", sweep_metric, "map|ap");
  sweep_cmd->add_option("--out", sweep_out, "sweep JSON output")->required();
  sweep_cmd->add_option("--csv", sweep_csv_path, "optional CSV table output");

  // --- eval -----------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "pooled framewise evaluation");
  fs::path eval_scores, eval_labels, eval_out;
  std::string eval_metric = "map";
  eval_cmd->add_option("--scores", eval_scores, "scores JSONL")->required();
  eval_cmd->add_option("--labels", eval_labels, "labels JSONL")->required();
  eval_cmd->add_option("--metric", eval_metric, "map|ap (headline metric)");
  eval_cmd->add_option("--out", eval_out, "report JSON output")->required();

  // --- stratify -------------------------------------------------------
  auto* stratify_cmd = app.add_subcommand("stratify", "face-quality stratified evaluation");
  fs::path strat_data, strat_sync, strat_fva, strat_ens, strat_out, strat_json;
  int strat_bins = 8;
  std::string strat_metric = "ap";
  bool strat_lenient = false;
  stratify_cmd->add_option("--data", strat_data, "bundle directory")->required();
  stratify_cmd->add_option("--bins", strat_bins, "number of equal-size strata");
  stratify_cmd->add_option("--sync", strat_sync, "sync scores JSONL");
  stratify_cmd->add_option("--fva", strat_fva, "association scores JSONL");
  stratify_cmd->add_option("--ens", strat_ens, "ensemble scores JSONL");
  stratify_cmd->add_option("--metric", strat_metric, "map|ap");
  stratify_cmd->add_option("--out", strat_out, "strata CSV output")->required();
  stratify_cmd->add_option("--json", strat_json, "optional strata JSON output");
  stratify_cmd->add_flag("--lenient", strat_lenient, "ignore unknown manifest keys");

  // --- mask-sweep -----------------------------------------------------
  auto* mask_cmd = app.add_subcommand("mask-sweep", "randomised utterance masking sweep");
  fs::path mask_data, mask_params, mask_sync, mask_out, mask_json;
  std::string mask_grid = "0:1:0.25", mask_degrade_mode = "silence";
  int mask_trials = 10;
  std::uint64_t mask_seed = 0;
  double mask_alpha = 0.5, mask_strength = 0.5;
  bool mask_lenient = false;
  mask_cmd->add_option("--data", mask_data, "bundle directory")->required();
  mask_cmd->add_option("--params", mask_params, "trained params file")->required();
  mask_cmd->add_option("--sync", mask_sync, "sync scores JSONL")->required();
  mask_cmd->add_option("--grid", mask_grid, "p_mask grid, lo:hi:step or comma list");
  mask_cmd->add_option("--trials", mask_trials, "trials per grid point");
  mask_cmd->add_option("--seed", mask_seed, "masking seed")->required();
  mask_cmd->add_option("--alpha", mask_alpha, "ensemble coefficient");
  mask_cmd->add_option("--degrade-mode", mask_degrade_mode, "silence|noise");
  mask_cmd->add_option("--degrade-strength", mask_strength, "pull toward chance in [0,1]");
  mask_cmd->add_option("--out", mask_out, "masking CSV output")->required();
  mask_cmd->add_option("--json", mask_json, "optional per-trial JSON output");
  mask_cmd->add_flag("--lenient", mask_lenient, "ignore unknown manifest keys");

  // --- report ---------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "assemble a summary table from eval reports");
  std::vector<std::string> report_entries;
  fs::path report_out, report_json;
  report_cmd
      ->add_option("--entry", report_entries,
                   "model:ensemble:alpha:report.json (repeatable; alpha may be empty)")
      ->required();
  report_cmd->add_option("--out", report_out, "summary CSV output")->required();
  report_cmd->add_option("--json", report_json, "optional summary JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  const unsigned threads = resolve_threads(threads_flag);

  if (*ingest) {
    ParseOptions opts;
    opts.lenient = ingest_lenient;
    Bundle b = load_bundle(ingest_in, opts);
    const auto findings = validate_bundle(b);
    if (!findings.empty()) {
      for (const auto& f : findings) std::cerr << f.line() << "\n";
      return 1;
    }
    fs::create_directories(ingest_out);
    if (ingest_binary) {
      write_manifest(ingest_out / BundleFiles::clips, b.clips);
      write_manifest(ingest_out / BundleFiles::tracks, b.tracks);
      write_manifest(ingest_out / BundleFiles::labels, b.labels);
      write_manifest(ingest_out / BundleFiles::utterances, b.utterances);
      write_utt_embeddings_binary(ingest_out / "utt_emb.bin", b.utt_embeddings);
      write_face_embeddings_binary(ingest_out / "face_emb.bin", b.face_embeddings);
    } else {
      write_bundle(ingest_out, b);
    }
    return 0;
  }

  if (*validate) {
    ParseOptions opts;
    opts.lenient = validate_lenient;
    const Bundle b = load_bundle(validate_in, opts);
    const auto findings = validate_bundle(b);
    for (const auto& f : findings) std::cerr << f.line() << "\n";
    return findings.empty() ? 0 : 1;
  }

  if (*simulate) {
    SimConfig cfg;
    bool seed_set = false;
    if (!sim_config_path.empty()) apply_sim_config_file(sim_config_path, cfg, &seed_set);
    if (sim_seed) {
      cfg.seed = *sim_seed;
      seed_set = true;
    }
    if (!seed_set) {
      std::cerr << "simulate requires an explicit --seed (or a seed in --config)\n";
      return 2;
    }
    if (sim_n_clips) cfg.n_clips = *sim_n_clips;
    if (sim_duration) cfg.duration_s = *sim_duration;
    if (sim_ids_min) cfg.identities_min = *sim_ids_min;
    if (sim_ids_max) cfg.identities_max = *sim_ids_max;
    if (sim_overlap) cfg.overlap_rate = *sim_overlap;
    if (sim_d_s) cfg.d_s = *sim_d_s;
    if (sim_d_f) cfg.d_f = *sim_d_f;
    if (sim_q_lo) cfg.q_lo = *sim_q_lo;
    if (sim_q_hi) cfg.q_hi = *sim_q_hi;
    if (sim_sigma_a) cfg.sigma_a = *sim_sigma_a;
    if (sim_sigma_f) cfg.sigma_f = *sim_sigma_f;
    if (sim_sigma_s) cfg.sigma_s = *sim_sigma_s;
    if (sim_sync_gain) cfg.sync_gain = *sim_sync_gain;
    if (sim_pool) cfg.person_pool = *sim_pool;
    cfg.validate();
    const Bundle b = generate_bundle(cfg, threads);
    write_bundle(sim_out, b);
    write_manifest(sim_out / BundleFiles::sync_scores, synth_sync_scores(cfg, b, threads));
    return 0;
  }

  if (*train) {
    const Bundle b = load_validated_bundle(train_data, train_lenient);
    if (b.utt_embeddings.empty() || b.face_embeddings.empty())
      throw ValidationError("bundle has no embeddings to train on");
    const int d_s = static_cast<int>(b.utt_embeddings.front().vector.size());
    const int d_f = static_cast<int>(b.face_embeddings.front().frames.front().size());
    HeadParams init = init_head_params(d_s, d_f, train_d, train_heads, train_seed);
    TrainConfig cfg;
    cfg.lr = train_lr;
    cfg.decay_factor = train_decay;
    cfg.decay_every = train_decay_every;
    cfg.epochs = train_epochs;
    cfg.freeze_projections = train_freeze;
    cfg.train_ffn = !train_no_ffn;
    const TrainResult r = train_head(init, b, cfg);
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
      std::cerr << "epoch " << e << " loss " << r.epoch_loss[e] << "\n";
    save_head_params(train_out, r.params);
    return 0;
  }

  if (*score) {
    const Bundle b = load_validated_bundle(score_data, score_lenient);
    const HeadParams p = load_head_params(score_params);
    write_matches(score_out, score_all_clips(p, b, threads));
    return 0;
  }

  if (*project) {
    const Bundle b = load_validated_bundle(project_data, project_lenient);
    const auto matches = load_matches(project_matches);
    write_manifest(project_out, project_assoc(matches, b));
    return 0;
  }

  if (*fuse_cmd) {
    const auto sync = load_scores(fuse_sync);
    const auto assoc = load_scores(fuse_assoc);
    write_manifest(fuse_out, fuse_streams(sync, assoc, FusionConfig{fuse_alpha}));
    return 0;
  }

  if (*sweep_cmd) {
    const auto labels = load_labels(sweep_labels);
    const auto sync = load_scores(sweep_sync);
    const auto assoc = load_scores(sweep_assoc);
    const auto result =
        sweep_alpha(labels, sync, assoc, parse_grid(sweep_grid), metric_from_name(sweep_metric));
    detail::write_text(sweep_out, sweep_to_json(result, sweep_metric).dump() + "\n");
    if (!sweep_csv_path.empty()) detail::write_text(sweep_csv_path, sweep_csv(result));
    return 0;
  }

  if (*eval_cmd) {
    const auto streams = load_scores(eval_scores);
    const auto labels = load_labels(eval_labels);
    const EvalReport r = evaluate(streams, labels);
    const MetricKind kind = metric_from_name(eval_metric);
    nlohmann::ordered_json j = eval_report_to_json(r);
    j["metric"] = eval_metric;
    j["score"] = kind == MetricKind::Map ? r.map : r.binary;
    detail::write_text(eval_out, j.dump() + "\n");
    return 0;
  }

  if (*stratify_cmd) {
    const Bundle b = load_validated_bundle(strat_data, strat_lenient);
    std::map<std::string, std::vector<FrameScoreStream>> methods;
    if (!strat_sync.empty()) methods["sync"] = load_scores(strat_sync);
    if (!strat_fva.empty()) methods["fva"] = load_scores(strat_fva);
    if (!strat_ens.empty()) methods["ens"] = load_scores(strat_ens);
    if (methods.empty()) {
      std::cerr << "stratify needs at least one of --sync/--fva/--ens\n";
      return 2;
    }
    auto strata = stratify_by_quality(b.tracks, strat_bins);
    fill_stratum_aps(strata, methods, b.labels, metric_from_name(strat_metric));
    write_strata_csv(strat_out, strata);
    if (!strat_json.empty()) {
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (const auto& s : strata) {
        nlohmann::ordered_json js;
        js["bin_index"] = s.bin_index;
        js["quality_lo"] = s.quality_lo;
        js["quality_hi"] = s.quality_hi;
        js["n_tracks"] = s.track_keys.size();
        js["ap"] = s.ap_per_method;
        j.push_back(js);
      }
      detail::write_text(strat_json, j.dump() + "\n");
    }
    return 0;
  }

  if (*mask_cmd) {
    const Bundle b = load_validated_bundle(mask_data, mask_lenient);
    const HeadParams p = load_head_params(mask_params);
    const auto sync = load_scores(mask_sync);
    MaskingConfig cfg;
    cfg.p_grid = parse_grid(mask_grid);
    cfg.trials_per_point = mask_trials;
    cfg.seed = mask_seed;
    cfg.alpha = mask_alpha;
    cfg.degrade_mode = degrade_mode_from_name(mask_degrade_mode);
    cfg.degrade_strength = mask_strength;
    const auto trials = masking_experiment(b, p, sync, cfg, threads);
    write_masking_csv(mask_out, summarize_masking(trials));
    if (!mask_json.empty()) {
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (const auto& t : trials) {
        nlohmann::ordered_json jt;
        jt["p_mask"] = t.p_mask;
        jt["trial_index"] = t.trial_index;
        jt["masked_utt_ids"] = t.masked_utt_ids;
        jt["ap"] = t.ap_per_method;
        j.push_back(jt);
      }
      detail::write_text(mask_json, j.dump() + "\n");
    }
    return 0;
  }

  if (*report_cmd) {
    std::vector<SummaryEntry> entries;
    for (const auto& spec : report_entries) {
      const ReportEntrySpec e = parse_entry_spec(spec);
      const EvalReport r = load_eval_report(e.report_path);
      SummaryEntry s;
      s.model = e.model;
      s.ensemble = e.ensemble;
      s.alpha = e.alpha;
      s.map = r.map;
      entries.push_back(std::move(s));
    }
    write_summary_csv(report_out, entries);
    if (!report_json.empty())
      detail::write_text(report_json, summary_to_json(entries).dump() + "\n");
    return 0;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const asdkit::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
