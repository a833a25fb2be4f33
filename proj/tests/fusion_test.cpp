#include <algorithm>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "asdkit/align.hpp"
#include "asdkit/fusion.hpp"
#include "asdkit/rng.hpp"
#include "asdkit/simgen.hpp"

using namespace asdkit;

namespace {

FrameScoreStream stream_of(const std::string& track, std::vector<double> scores) {
  FrameScoreStream s;
  s.clip_id = "c0";
  s.track_id = track;
  s.scores = std::move(scores);
  return s;
}

std::pair<FrameScoreStream, FrameScoreStream> random_pair(Rng& rng, int len) {
  std::vector<double> a(static_cast<std::size_t>(len)), b(static_cast<std::size_t>(len));
  for (auto& v : a) v = rng.uniform01();
  for (auto& v : b) v = rng.uniform01();
  return {stream_of("t0", std::move(a)), stream_of("t0", std::move(b))};
}

TEST(Fuse, EndpointsReproduceInputsBitwise) {
  Rng rng(3);
  for (int iter = 0; iter < 100; ++iter) {
    const auto [sync, assoc] = random_pair(rng, 64);
    const auto at_one = fuse(sync, assoc, FusionConfig{1.0});
    const auto at_zero = fuse(sync, assoc, FusionConfig{0.0});
    for (std::size_t t = 0; t < sync.scores.size(); ++t) {
      EXPECT_EQ(at_one.scores[t], sync.scores[t]);
      EXPECT_EQ(at_zero.scores[t], assoc.scores[t]);
    }
  }
}

TEST(Fuse, WorkedMidpoint) {
  const auto out = fuse(stream_of("t0", {0.8}), stream_of("t0", {0.4}), FusionConfig{0.5});
  EXPECT_DOUBLE_EQ(out.scores[0], 0.6);
  EXPECT_EQ(out.source.value_or(""), "ens");
}

TEST(Fuse, ValuesStayInsideEnvelope) {
  Rng rng(4);
  for (int iter = 0; iter < 300; ++iter) {
    const auto [sync, assoc] = random_pair(rng, 32);
    const double alpha = rng.uniform01();
    const auto out = fuse(sync, assoc, FusionConfig{alpha});
    for (std::size_t t = 0; t < out.scores.size(); ++t) {
      EXPECT_GE(out.scores[t], std::min(sync.scores[t], assoc.scores[t]));
      EXPECT_LE(out.scores[t], std::max(sync.scores[t], assoc.scores[t]));
      EXPECT_GE(out.scores[t], 0.0);
      EXPECT_LE(out.scores[t], 1.0);
    }
  }
}

TEST(Fuse, MismatchErrors) {
  EXPECT_THROW(fuse(stream_of("t0", {0.1, 0.2}), stream_of("t0", {0.1}), FusionConfig{0.5}),
               LengthMismatch);
  auto other = stream_of("t1", {0.1, 0.2});
  EXPECT_THROW(fuse(stream_of("t0", {0.1, 0.2}), other, FusionConfig{0.5}), TrackMismatch);
  EXPECT_THROW(fuse(stream_of("t0", {0.1}), stream_of("t0", {0.1}), FusionConfig{1.5}),
               InvalidConfig);
}

TEST(FuseStreams, MissingAssocTreatedAsZeros) {
  std::vector<FrameScoreStream> sync = {stream_of("t0", {0.6, 0.8})};
  const auto fused = fuse_streams(sync, {}, FusionConfig{0.5});
  ASSERT_EQ(fused.size(), 1u);
  EXPECT_DOUBLE_EQ(fused[0].scores[0], 0.3);
  EXPECT_DOUBLE_EQ(fused[0].scores[1], 0.4);
}

struct SweepFixture {
  std::vector<SpeakingLabel> labels;
  std::vector<FrameScoreStream> sync;
  std::vector<FrameScoreStream> assoc;
};

SweepFixture sweep_fixture(std::uint64_t seed) {
  Rng rng(seed);
  SweepFixture fx;
  for (int t = 0; t < 4; ++t) {
    SpeakingLabel l;
    l.clip_id = "c0";
    l.track_id = "t" + std::to_string(t);
    FrameScoreStream s = stream_of(l.track_id, {});
    FrameScoreStream a = stream_of(l.track_id, {});
    for (int f = 0; f < 120; ++f) {
      const int y = rng.bernoulli(0.4) ? 1 : 0;
      l.active.push_back(static_cast<std::uint8_t>(y));
      // Two noisy, complementary views of the label.
      s.scores.push_back(std::clamp(0.5 + (y - 0.5) * rng.uniform(0.0, 0.9), 0.0, 1.0));
      a.scores.push_back(std::clamp(0.5 + (y - 0.5) * rng.uniform(-0.2, 1.0), 0.0, 1.0));
    }
    fx.labels.push_back(std::move(l));
    fx.sync.push_back(std::move(s));
    fx.assoc.push_back(std::move(a));
  }
  return fx;
}

TEST(SweepAlpha, EndpointsReproduceComponentMetrics) {
  const auto fx = sweep_fixture(11);
  const auto r = sweep_alpha(fx.labels, fx.sync, fx.assoc, {0.0, 1.0}, MetricKind::BinaryAp);
  ASSERT_EQ(r.table.size(), 2u);
  EXPECT_EQ(r.table[0].score, evaluate(fx.assoc, fx.labels).binary);
  EXPECT_EQ(r.table[1].score, evaluate(fx.sync, fx.labels).binary);
}

TEST(SweepAlpha, TunedEnsembleAtLeastEndpointsOnSimulatedBundle) {
  // Sync scores from the synthetic model; assoc stream projected from
  // near-oracle matches, the shape a trained head produces.
  SimConfig cfg;
  cfg.n_clips = 4;
  cfg.duration_s = 8.0;
  cfg.d_s = 6;
  cfg.d_f = 6;
  cfg.seed = 29;
  const Bundle bundle = generate_bundle(cfg);
  const auto sync = synth_sync_scores(cfg, bundle);

  std::map<std::string, int> ids_per_clip;
  for (const auto& t : bundle.tracks) ids_per_clip[t.clip_id] += 1;
  std::vector<Match> matches;
  for (const auto& u : bundle.utterances) {
    const int k = ids_per_clip.at(u.clip_id);
    for (const auto& t : bundle.tracks) {
      if (t.clip_id != u.clip_id) continue;
      const bool hit = t.person_id == *u.speaker_hint;
      matches.push_back(Match{u.utt_id, t.person_id, hit ? 0.8 : 0.2 / std::max(1, k - 1)});
    }
  }
  const auto assoc = project_assoc(matches, bundle);

  const auto r = sweep_alpha(bundle.labels, sync, assoc, {0.0, 0.5, 1.0}, MetricKind::BinaryAp);
  const double endpoint_best = std::max(r.table.front().score, r.table.back().score);
  EXPECT_GE(r.best_score, endpoint_best);
  EXPECT_EQ(r.table.front().score, evaluate(assoc, bundle.labels).binary);
  EXPECT_EQ(r.table.back().score, evaluate(sync, bundle.labels).binary);
}

TEST(SweepAlpha, SingleElementGridAndTies) {
  const auto fx = sweep_fixture(13);
  const auto r = sweep_alpha(fx.labels, fx.sync, fx.assoc, {0.25}, MetricKind::Map);
  ASSERT_EQ(r.table.size(), 1u);
  EXPECT_EQ(r.best_alpha, 0.25);

  // Identical streams: every alpha scores the same; tie goes to smallest.
  const auto tied =
      sweep_alpha(fx.labels, fx.sync, fx.sync, {0.0, 0.3, 0.7, 1.0}, MetricKind::BinaryAp);
  EXPECT_EQ(tied.best_alpha, 0.0);
}

TEST(SweepAlpha, EmptyGridRejected) {
  const auto fx = sweep_fixture(14);
  EXPECT_THROW(sweep_alpha(fx.labels, fx.sync, fx.assoc, {}, MetricKind::Map), InvalidConfig);
}

}  // namespace
