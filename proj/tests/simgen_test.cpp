#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "asdkit/manifest.hpp"
#include "asdkit/simgen.hpp"

using namespace asdkit;

namespace {

std::string bundle_fingerprint(const Bundle& b) {
  std::ostringstream out;
  for (const auto& c : b.clips) out << to_jsonl(c) << '\n';
  for (const auto& t : b.tracks) out << to_jsonl(t) << '\n';
  for (const auto& l : b.labels) out << to_jsonl(l) << '\n';
  for (const auto& u : b.utterances) out << to_jsonl(u) << '\n';
  for (const auto& e : b.utt_embeddings) out << to_jsonl(e) << '\n';
  for (const auto& f : b.face_embeddings) out << to_jsonl(f) << '\n';
  return out.str();
}

SimConfig small_config(std::uint64_t seed) {
  SimConfig cfg;
  cfg.n_clips = 4;
  cfg.duration_s = 6.0;
  cfg.d_s = 6;
  cfg.d_f = 5;
  cfg.seed = seed;
  return cfg;
}

TEST(GenerateBundle, DeterministicAndThreadCountIndependent) {
  const SimConfig cfg = small_config(123);
  const std::string a = bundle_fingerprint(generate_bundle(cfg, 1));
  const std::string b = bundle_fingerprint(generate_bundle(cfg, 1));
  const std::string c = bundle_fingerprint(generate_bundle(cfg, 4));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(GenerateBundle, ValidatesCleanly) {
  const Bundle b = generate_bundle(small_config(9));
  const auto findings = validate_bundle(b);
  for (const auto& f : findings) ADD_FAILURE() << f.line();
  EXPECT_TRUE(findings.empty());
}

TEST(GenerateBundle, ZeroOverlapRateMeansNoSimultaneousSpeech) {
  SimConfig cfg = small_config(31);
  cfg.overlap_rate = 0.0;
  cfg.n_clips = 10;
  cfg.identities_min = 3;
  cfg.identities_max = 4;
  const Bundle b = generate_bundle(cfg);
  std::map<std::string, std::vector<const SpeakingLabel*>> by_clip;
  for (const auto& l : b.labels) by_clip[l.clip_id].push_back(&l);
  for (const auto& [clip, labels] : by_clip) {
    const std::size_t frames = labels.front()->active.size();
    for (std::size_t f = 0; f < frames; ++f) {
      int speaking = 0;
      for (const auto* l : labels) speaking += l->active[f];
      EXPECT_LE(speaking, 1) << clip << " frame " << f;
    }
  }
}

TEST(GenerateBundle, ZeroNoiseGivesExactIdentityEmbeddings) {
  SimConfig cfg = small_config(77);
  cfg.sigma_a = 0.0;
  cfg.sigma_f = 0.0;
  const Bundle b = generate_bundle(cfg);
  // All frames of one identity must be identical when sigma_f = 0.
  for (const auto& fe : b.face_embeddings) {
    for (const auto& row : fe.frames) EXPECT_EQ(row, fe.frames.front());
  }
  // All utterances of one identity share the speaker vector when sigma_a = 0.
  std::map<std::string, const Utterance*> utt_by_id;
  for (const auto& u : b.utterances) utt_by_id.emplace(u.utt_id, &u);
  std::map<std::string, std::vector<double>> seen;
  for (const auto& e : b.utt_embeddings) {
    const std::string person = *utt_by_id.at(e.utt_id)->speaker_hint;
    auto [it, inserted] = seen.emplace(person, e.vector);
    if (!inserted) EXPECT_EQ(e.vector, it->second);
  }
}

TEST(GenerateBundle, UtterancesMatchLabelRuns) {
  const Bundle b = generate_bundle(small_config(55));
  BundleIndex index(b);
  for (const auto& u : b.utterances) {
    const double fps = index.clip_by_id.at(u.clip_id)->video_fps;
    ASSERT_TRUE(u.speaker_hint.has_value());
    // The hinted person's label must be active exactly on the span.
    const auto span = utterance_to_span(u, fps);
    ASSERT_TRUE(span.has_value());
    const FaceTrack* track = nullptr;
    for (const auto* t : index.tracks_by_clip.at(u.clip_id))
      if (t->person_id == *u.speaker_hint) track = t;
    ASSERT_NE(track, nullptr);
    const SpeakingLabel* label = index.label_by_key.at({u.clip_id, track->track_id});
    for (std::int64_t f = span->begin; f < span->end; ++f)
      EXPECT_EQ(label->active[static_cast<std::size_t>(f)], 1);
    if (span->begin > 0) EXPECT_EQ(label->active[static_cast<std::size_t>(span->begin - 1)], 0);
    if (span->end < track->frame_count)
      EXPECT_EQ(label->active[static_cast<std::size_t>(span->end)], 0);
  }
}

TEST(SynthSyncScores, WorkedLogisticValues) {
  SimConfig cfg = small_config(1);
  cfg.sigma_s = 0.0;
  cfg.sync_gain = 4.0;
  cfg.sigma_q = 0.0;
  cfg.q_lo = cfg.q_hi = 1.0;  // quality pinned at 1
  const Bundle b = generate_bundle(cfg);
  const auto streams = synth_sync_scores(cfg, b);
  BundleIndex index(b);
  for (const auto& s : streams) {
    const SpeakingLabel* l = index.label_by_key.at({s.clip_id, s.track_id});
    for (std::size_t f = 0; f < s.scores.size(); ++f) {
      const double want = l->active[f] ? 1.0 / (1.0 + std::exp(-4.0)) : 1.0 / (1.0 + std::exp(4.0));
      EXPECT_NEAR(s.scores[f], want, 1e-12);
    }
  }
}

TEST(SynthSyncScores, ZeroQualityIsChance) {
  SimConfig cfg = small_config(2);
  cfg.sigma_s = 0.0;
  cfg.sigma_q = 0.0;
  cfg.q_lo = cfg.q_hi = 0.0;
  const Bundle b = generate_bundle(cfg);
  for (const auto& s : synth_sync_scores(cfg, b))
    for (double v : s.scores) EXPECT_EQ(v, 0.5);
}

TEST(SynthSyncScores, ScoresStrictlyInsideUnitInterval) {
  SimConfig cfg = small_config(3);
  cfg.sigma_s = 2.0;
  const Bundle b = generate_bundle(cfg);
  for (const auto& s : synth_sync_scores(cfg, b))
    for (double v : s.scores) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
}

TEST(SynthSyncScores, DeterministicAcrossThreadCounts) {
  const SimConfig cfg = small_config(4);
  const Bundle b = generate_bundle(cfg);
  const auto s1 = synth_sync_scores(cfg, b, 1);
  const auto s4 = synth_sync_scores(cfg, b, 4);
  ASSERT_EQ(s1.size(), s4.size());
  for (std::size_t i = 0; i < s1.size(); ++i) EXPECT_EQ(s1[i].scores, s4[i].scores);
}

TEST(DegradeSync, PullsMaskedFramesTowardChance) {
  FaceTrack t;
  t.clip_id = "c0";
  t.track_id = "t0";
  t.person_id = "p0";
  t.start_frame = 0;
  t.frame_count = 4;
  FrameScoreStream s;
  s.clip_id = "c0";
  s.track_id = "t0";
  s.scores = {0.9, 0.9, 0.9, 0.9};
  const std::vector<MaskedSpan> spans = {{"c0", FrameSpan{1, 3}}};

  auto zero = degrade_sync({s}, {t}, spans, DegradeMode::Silence, 0.0);
  EXPECT_EQ(zero[0].scores, (std::vector<double>{0.9, 0.9, 0.9, 0.9}));

  auto full = degrade_sync({s}, {t}, spans, DegradeMode::Silence, 1.0);
  EXPECT_EQ(full[0].scores, (std::vector<double>{0.9, 0.5, 0.5, 0.9}));

  auto half = degrade_sync({s}, {t}, spans, DegradeMode::Silence, 0.5);
  EXPECT_DOUBLE_EQ(half[0].scores[1], 0.7);
  EXPECT_DOUBLE_EQ(half[0].scores[0], 0.9);

  EXPECT_THROW(degrade_sync({s}, {t}, {{"c0", FrameSpan{3, 1}}}, DegradeMode::Silence, 0.5),
               SpanOutOfRange);
}

TEST(RenewalProcess, MeanSpurtDurationNearConfigured) {
  // Long clips keep the boundary-stopping bias of the pooled estimate small.
  SimConfig cfg;
  cfg.n_clips = 150;
  cfg.duration_s = 60.0;
  cfg.overlap_rate = 0.0;  // pure renewal, no merging
  cfg.d_s = 2;
  cfg.d_f = 2;
  cfg.spurt_on_mean_s = 1.5;
  cfg.seed = 99;
  const Bundle b = generate_bundle(cfg, 2);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& u : b.utterances) {
    total += u.end_s - u.start_s;
    ++count;
  }
  ASSERT_GT(count, 500u);
  const double mean = total / static_cast<double>(count);
  EXPECT_NEAR(mean, cfg.spurt_on_mean_s, 0.1 * cfg.spurt_on_mean_s);
}

}  // namespace
