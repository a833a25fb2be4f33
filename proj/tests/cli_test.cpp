#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string stderr_text;
};

std::string cli_path() {
  const char* p = std::getenv("ASDKIT_CLI");
  EXPECT_NE(p, nullptr) << "ASDKIT_CLI must point at the asdkit binary";
  return p ? p : "";
}

RunResult run_cli(const std::string& args) {
  const fs::path err = fs::path(::testing::TempDir()) / "cli_stderr.txt";
  const std::string cmd = cli_path() + " " + args + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WEXITSTATUS(status);
  std::ifstream in(err);
  r.stderr_text.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Cli, MissingRequiredFlagIsUsageError) {
  const auto r = run_cli("eval --scores nowhere.jsonl");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_FALSE(r.stderr_text.empty());
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(run_cli("frobnicate").exit_code, 2);
}

TEST(Cli, SimulateRequiresSeed) {
  const auto dir = fresh_dir("sim_noseed");
  const auto r = run_cli("simulate --out " + dir.string() + " --n-clips 1");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.stderr_text.find("seed"), std::string::npos);
}

TEST(Cli, EvalLengthMismatchIsFinding) {
  const auto dir = fresh_dir("eval_mismatch");
  {
    std::ofstream labels(dir / "labels.jsonl");
    labels << R"({"clip_id":"c0","track_id":"t0","active":[1,0]})" << "\n";
    std::ofstream scores(dir / "scores.jsonl");
    scores << R"({"clip_id":"c0","track_id":"t0","scores":[0.5]})" << "\n";
  }
  const auto r = run_cli("eval --scores " + (dir / "scores.jsonl").string() + " --labels " +
                         (dir / "labels.jsonl").string() + " --out " +
                         (dir / "report.json").string());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.stderr_text.find("LengthMismatch"), std::string::npos);
}

TEST(Cli, ValidateReportsFindingsOnePerLine) {
  const auto dir = fresh_dir("validate_bad");
  {
    std::ofstream(dir / "clips.jsonl")
        << R"({"clip_id":"c0","duration_s":1.0,"video_fps":30.0,"audio_sample_rate":16000.0,"n_audio_samples":16000})"
        << "\n";
    std::ofstream(dir / "tracks.jsonl")
        << R"({"clip_id":"c0","track_id":"t0","person_id":"p0","start_frame":0,"frame_count":30})"
        << "\n";
    std::ofstream(dir / "labels.jsonl")
        << R"({"clip_id":"c0","track_id":"ghost","active":[1,0]})" << "\n";
    std::ofstream(dir / "utterances.jsonl");
    std::ofstream(dir / "utt_emb.jsonl");
    std::ofstream(dir / "face_emb.jsonl");
  }
  const auto r = run_cli("validate --in " + dir.string());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.stderr_text.find("DanglingReference"), std::string::npos);
  EXPECT_NE(r.stderr_text.find("MissingLabel"), std::string::npos);
}

TEST(Cli, SimulateIsByteDeterministic) {
  const auto dir1 = fresh_dir("sim_det1");
  const auto dir2 = fresh_dir("sim_det2");
  const std::string base =
      "simulate --seed 5 --n-clips 2 --duration 3 --d-s 5 --d-f 5 --out ";
  ASSERT_EQ(run_cli(base + dir1.string()).exit_code, 0);
  ASSERT_EQ(run_cli(base + dir2.string() + " --threads 4").exit_code, 0);
  for (const char* name : {"clips.jsonl", "tracks.jsonl", "labels.jsonl", "utterances.jsonl",
                           "utt_emb.jsonl", "face_emb.jsonl", "sync_scores.jsonl"}) {
    EXPECT_EQ(slurp(dir1 / name), slurp(dir2 / name)) << name;
  }
}

TEST(Cli, SimConfigFileWithFlagOverrides) {
  const auto dir = fresh_dir("sim_cfgfile");
  const fs::path cfg = dir / "sim.toml";
  {
    std::ofstream out(cfg);
    out << "# desk-scale scenario\n";
    out << "n_clips = 3\n";
    out << "duration_s = 2.0\n";
    out << "d_s = 4\n";
    out << "d_f = 4\n";
    out << "seed = 9\n";
  }
  const auto out_dir = dir / "bundle";
  ASSERT_EQ(run_cli("simulate --config " + cfg.string() + " --n-clips 1 --out " +
                    out_dir.string())
                .exit_code,
            0);
  // Flag wins over the file: one clip only.
  const std::string clips = slurp(out_dir / "clips.jsonl");
  EXPECT_EQ(std::count(clips.begin(), clips.end(), '\n'), 1);
}

TEST(Cli, EndToEndPipeline) {
  const auto dir = fresh_dir("pipeline");
  const auto data = dir / "data";
  const std::string sim =
      "simulate --seed 3 --n-clips 4 --duration 8 --d-s 8 --d-f 8 --sigma-a 0.05 --out " +
      data.string();
  ASSERT_EQ(run_cli(sim).exit_code, 0);

  ASSERT_EQ(run_cli("validate --in " + data.string()).exit_code, 0);

  const auto params = dir / "head.fvab";
  ASSERT_EQ(run_cli("fva-train --data " + data.string() + " --out " + params.string() +
                    " --seed 1 --d 8 --heads 2 --epochs 2 --lr 0.01")
                .exit_code,
            0);

  const auto matches = dir / "matches.jsonl";
  ASSERT_EQ(run_cli("fva-score --data " + data.string() + " --params " + params.string() +
                    " --out " + matches.string())
                .exit_code,
            0);

  const auto assoc = dir / "assoc_scores.jsonl";
  ASSERT_EQ(run_cli("project --data " + data.string() + " --matches " + matches.string() +
                    " --out " + assoc.string())
                .exit_code,
            0);

  const auto fused = dir / "ens_scores.jsonl";
  ASSERT_EQ(run_cli("fuse --alpha 0.5 --sync " + (data / "sync_scores.jsonl").string() +
                    " --assoc " + assoc.string() + " --out " + fused.string())
                .exit_code,
            0);

  const auto report = dir / "report.json";
  ASSERT_EQ(run_cli("eval --scores " + fused.string() + " --labels " +
                    (data / "labels.jsonl").string() + " --metric map --out " + report.string())
                .exit_code,
            0);
  const auto j = nlohmann::json::parse(slurp(report));
  EXPECT_TRUE(j.contains("map"));
  EXPECT_TRUE(j.contains("binary_ap"));
  EXPECT_GE(j["map"].get<double>(), 0.0);
  EXPECT_LE(j["map"].get<double>(), 1.0);

  const auto sweep_json = dir / "sweep.json";
  ASSERT_EQ(run_cli("sweep --labels " + (data / "labels.jsonl").string() + " --sync " +
                    (data / "sync_scores.jsonl").string() + " --assoc " + assoc.string() +
                    " --grid 0:1:0.5 --metric ap --out " + sweep_json.string())
                .exit_code,
            0);
  const auto sj = nlohmann::json::parse(slurp(sweep_json));
  EXPECT_EQ(sj["grid"].size(), 3u);
  EXPECT_TRUE(sj.contains("best_alpha"));

  // Table-shaped summary, percentages to one decimal.
  const auto summary = dir / "summary.csv";
  ASSERT_EQ(run_cli("report --entry ens:1:0.5:" + report.string() + " --entry sync:0::" +
                    report.string() + " --out " + summary.string())
                .exit_code,
            0);
  const std::string csv = slurp(summary);
  EXPECT_EQ(csv.rfind("model,ensemble,alpha,map_pct\n", 0), 0u);
  EXPECT_NE(csv.find("ens,1,0.5,"), std::string::npos);
  EXPECT_NE(csv.find("sync,0,,"), std::string::npos);

  const auto strata_csv_path = dir / "strata.csv";
  ASSERT_EQ(run_cli("stratify --data " + data.string() + " --bins 2 --sync " +
                    (data / "sync_scores.jsonl").string() + " --fva " + assoc.string() +
                    " --ens " + fused.string() + " --out " + strata_csv_path.string())
                .exit_code,
            0);
  const std::string strata_text = slurp(strata_csv_path);
  EXPECT_EQ(strata_text.rfind("bin_index,quality_lo,quality_hi,method,ap\n", 0), 0u);
  EXPECT_NE(strata_text.find("sync"), std::string::npos);

  const auto masking_csv_path = dir / "masking.csv";
  ASSERT_EQ(run_cli("mask-sweep --data " + data.string() + " --params " + params.string() +
                    " --sync " + (data / "sync_scores.jsonl").string() +
                    " --grid 0,1 --trials 2 --seed 4 --alpha 0.5 --out " +
                    masking_csv_path.string())
                .exit_code,
            0);
  const std::string masking_text = slurp(masking_csv_path);
  EXPECT_EQ(masking_text.rfind("p_mask,method,ap_mean,ap_std\n", 0), 0u);

  // Ingest round-trip: canonical output loads cleanly and byte-matches.
  const auto canon = dir / "canon";
  ASSERT_EQ(run_cli("ingest --in " + data.string() + " --out " + canon.string()).exit_code, 0);
  for (const char* name : {"clips.jsonl", "tracks.jsonl", "labels.jsonl", "utterances.jsonl"})
    EXPECT_EQ(slurp(data / name), slurp(canon / name)) << name;

  // Binary embedding sidecars keep the bundle loadable.
  const auto canon_bin = dir / "canon_bin";
  ASSERT_EQ(
      run_cli("ingest --in " + data.string() + " --out " + canon_bin.string() +
              " --binary-embeddings")
          .exit_code,
      0);
  EXPECT_TRUE(fs::exists(canon_bin / "utt_emb.bin"));
  EXPECT_FALSE(fs::exists(canon_bin / "utt_emb.jsonl"));
  EXPECT_EQ(run_cli("validate --in " + canon_bin.string()).exit_code, 0);
}

}  // namespace
