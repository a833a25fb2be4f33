#include <map>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "asdkit/rng.hpp"
#include "asdkit/simgen.hpp"
#include "asdkit/strata.hpp"

using namespace asdkit;

namespace {

FaceTrack track_with_quality(const std::string& id, std::vector<double> quality) {
  FaceTrack t;
  t.clip_id = "c0";
  t.track_id = id;
  t.person_id = id + "_p";
  t.start_frame = 0;
  t.frame_count = static_cast<std::int64_t>(quality.size());
  t.quality = std::move(quality);
  return t;
}

TEST(TrackQuality, MeanOfPerFrameScores) {
  EXPECT_DOUBLE_EQ(track_quality(track_with_quality("t0", {0.2, 0.4, 0.6})), 0.4);
  EXPECT_DOUBLE_EQ(track_quality(track_with_quality("t1", {0.7, 0.7, 0.7, 0.7})), 0.7);
}

TEST(TrackQuality, MatchesBruteForceOnRandomTracks) {
  Rng rng(3);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<double> q;
    const int n = static_cast<int>(rng.uniform_int(1, 50));
    for (int i = 0; i < n; ++i) q.push_back(rng.uniform01());
    double sum = 0.0;
    for (double v : q) sum += v;
    EXPECT_DOUBLE_EQ(track_quality(track_with_quality("t", q)), sum / n);
  }
}

TEST(TrackQuality, MissingQualityThrows) {
  FaceTrack t;
  t.clip_id = "c0";
  t.track_id = "t0";
  t.person_id = "p0";
  t.frame_count = 3;
  EXPECT_THROW(track_quality(t), MissingQuality);
}

std::vector<FaceTrack> tracks_with_qualities(const std::vector<double>& qs) {
  std::vector<FaceTrack> out;
  for (std::size_t i = 0; i < qs.size(); ++i)
    out.push_back(track_with_quality("t" + std::to_string(i), {qs[i]}));
  return out;
}

TEST(Stratify, EqualSplitSixIntoThree) {
  const auto strata = stratify_by_quality(tracks_with_qualities({0.9, 0.1, 0.5, 0.3, 0.7, 0.2}), 3);
  ASSERT_EQ(strata.size(), 3u);
  EXPECT_EQ(strata[0].track_keys.size(), 2u);
  EXPECT_EQ(strata[1].track_keys.size(), 2u);
  EXPECT_EQ(strata[2].track_keys.size(), 2u);
  EXPECT_DOUBLE_EQ(strata[0].quality_lo, 0.1);
  EXPECT_DOUBLE_EQ(strata[0].quality_hi, 0.2);
  EXPECT_DOUBLE_EQ(strata[2].quality_hi, 0.9);
}

TEST(Stratify, RemainderGoesToLowestBins) {
  const auto strata =
      stratify_by_quality(tracks_with_qualities({0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.4}), 3);
  ASSERT_EQ(strata.size(), 3u);
  EXPECT_EQ(strata[0].track_keys.size(), 3u);
  EXPECT_EQ(strata[1].track_keys.size(), 2u);
  EXPECT_EQ(strata[2].track_keys.size(), 2u);
}

TEST(Stratify, TooFewTracksRejected) {
  EXPECT_THROW(stratify_by_quality(tracks_with_qualities({0.5, 0.6}), 3), TooFewTracks);
  EXPECT_THROW(stratify_by_quality(tracks_with_qualities({0.5}), 0), InvalidConfig);
}

TEST(Stratify, PartitionOnSimulatedBundle) {
  SimConfig cfg;
  cfg.n_clips = 6;
  cfg.duration_s = 4.0;
  cfg.identities_min = 2;
  cfg.identities_max = 5;
  cfg.seed = 19;
  const Bundle b = generate_bundle(cfg);
  const auto strata = stratify_by_quality(b.tracks, 5);

  std::set<std::pair<std::string, std::string>> seen;
  std::size_t total = 0;
  std::size_t min_size = b.tracks.size(), max_size = 0;
  for (const auto& s : strata) {
    min_size = std::min(min_size, s.track_keys.size());
    max_size = std::max(max_size, s.track_keys.size());
    for (const auto& key : s.track_keys) {
      EXPECT_TRUE(seen.insert(key).second) << "track in two strata";
      ++total;
    }
  }
  EXPECT_EQ(total, b.tracks.size());
  EXPECT_LE(max_size - min_size, 1u);
  for (std::size_t i = 1; i < strata.size(); ++i)
    EXPECT_GE(strata[i].quality_lo, strata[i - 1].quality_hi);
}

struct MaskFixture {
  SimConfig cfg;
  Bundle bundle;
  HeadParams params;
  std::vector<FrameScoreStream> sync;
};

MaskFixture mask_fixture() {
  MaskFixture fx;
  fx.cfg.n_clips = 4;
  fx.cfg.duration_s = 5.0;
  fx.cfg.d_s = 6;
  fx.cfg.d_f = 6;
  fx.cfg.seed = 23;
  fx.bundle = generate_bundle(fx.cfg);
  fx.params = init_head_params(6, 6, 8, 2, 5);
  fx.sync = synth_sync_scores(fx.cfg, fx.bundle);
  return fx;
}

MaskingConfig mask_config(std::vector<double> grid, int trials) {
  MaskingConfig mc;
  mc.p_grid = std::move(grid);
  mc.trials_per_point = trials;
  mc.seed = 99;
  mc.alpha = 0.6;
  return mc;
}

TEST(Masking, ZeroProbabilityEqualsUnmaskedEvaluation) {
  const MaskFixture fx = mask_fixture();
  const auto trials = masking_experiment(fx.bundle, fx.params, fx.sync, mask_config({0.0}, 3));
  ASSERT_EQ(trials.size(), 3u);

  const auto matches = score_all_clips(fx.params, fx.bundle);
  const auto assoc = project_assoc(matches, fx.bundle);
  const double sync_ap = evaluate(fx.sync, fx.bundle.labels).binary;
  const double fva_ap = evaluate(assoc, fx.bundle.labels).binary;
  const double ens_ap =
      evaluate(fuse_streams(fx.sync, assoc, FusionConfig{0.6}), fx.bundle.labels).binary;
  for (const auto& t : trials) {
    EXPECT_TRUE(t.masked_utt_ids.empty());
    EXPECT_EQ(t.ap_per_method.at("sync"), sync_ap);
    EXPECT_EQ(t.ap_per_method.at("fva"), fva_ap);
    EXPECT_EQ(t.ap_per_method.at("ens"), ens_ap);
  }
}

TEST(Masking, TotalMaskingZeroesAssociationStream) {
  const MaskFixture fx = mask_fixture();
  const auto trials = masking_experiment(fx.bundle, fx.params, fx.sync, mask_config({1.0}, 2));
  ASSERT_EQ(trials.size(), 2u);
  // Every utterance masked; the fva stream is all zeros so its AP sits at
  // the single-threshold floor (prevalence), and labels keep their positives.
  std::int64_t frames = 0, positives = 0;
  for (const auto& l : fx.bundle.labels) {
    frames += static_cast<std::int64_t>(l.active.size());
    for (auto v : l.active) positives += v;
  }
  const double prevalence = static_cast<double>(positives) / static_cast<double>(frames);
  for (const auto& t : trials) {
    EXPECT_EQ(t.masked_utt_ids.size(), fx.bundle.utterances.size());
    EXPECT_DOUBLE_EQ(t.ap_per_method.at("fva"), prevalence);
    EXPECT_GT(t.ap_per_method.at("sync"), 0.0);
  }
}

TEST(Masking, DeterministicAcrossRunsAndThreadCounts) {
  const MaskFixture fx = mask_fixture();
  const auto cfg = mask_config({0.0, 0.5, 1.0}, 4);
  const auto a = masking_experiment(fx.bundle, fx.params, fx.sync, cfg, 1);
  const auto b = masking_experiment(fx.bundle, fx.params, fx.sync, cfg, 1);
  const auto c = masking_experiment(fx.bundle, fx.params, fx.sync, cfg, 4);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.size(), c.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].p_mask, b[i].p_mask);
    EXPECT_EQ(a[i].masked_utt_ids, b[i].masked_utt_ids);
    EXPECT_EQ(a[i].ap_per_method, b[i].ap_per_method);
    EXPECT_EQ(a[i].masked_utt_ids, c[i].masked_utt_ids);
    EXPECT_EQ(a[i].ap_per_method, c[i].ap_per_method);
  }
}

TEST(Masking, NestedMasksAcrossGrid) {
  // Same trial index shares uniforms across p values, so masked sets nest.
  const MaskFixture fx = mask_fixture();
  const auto trials =
      masking_experiment(fx.bundle, fx.params, fx.sync, mask_config({0.3, 0.7}, 2));
  std::map<std::pair<double, int>, std::set<std::string>> masked;
  for (const auto& t : trials)
    masked[{t.p_mask, t.trial_index}] =
        std::set<std::string>(t.masked_utt_ids.begin(), t.masked_utt_ids.end());
  for (int trial = 0; trial < 2; ++trial) {
    const auto& low = masked.at({0.3, trial});
    const auto& high = masked.at({0.7, trial});
    for (const auto& id : low) EXPECT_TRUE(high.count(id));
  }
}

TEST(Masking, SummaryAggregatesTrials) {
  const MaskFixture fx = mask_fixture();
  const auto trials =
      masking_experiment(fx.bundle, fx.params, fx.sync, mask_config({0.0, 1.0}, 3));
  const auto rows = summarize_masking(trials);
  EXPECT_EQ(rows.size(), 6u);  // 2 grid points x 3 methods
  for (const auto& r : rows) {
    EXPECT_GE(r.ap_mean, 0.0);
    EXPECT_LE(r.ap_mean, 1.0);
    EXPECT_GE(r.ap_std, 0.0);
  }
}

}  // namespace
