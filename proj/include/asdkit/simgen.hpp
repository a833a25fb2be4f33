#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asdkit/align.hpp"
#include "asdkit/datamodel.hpp"
#include "asdkit/error.hpp"
#include "asdkit/parallel.hpp"
#include "asdkit/rng.hpp"

namespace asdkit {

struct SimConfig {
  int n_clips = 8;
  int identities_min = 2;
  int identities_max = 4;
  double duration_s = 60.0;
  double fps = 30.0;
  double audio_sample_rate = 16000.0;
  double spurt_on_mean_s = 1.5;   // mean talk-spurt length
  double spurt_off_mean_s = 2.0;  // mean silence between spurts
  double overlap_rate = 0.1;      // probability a spurt starts inside another speaker's
  int d_s = 16;                   // speaker embedding dimension
  int d_f = 16;                   // face embedding dimension
  double q_lo = 0.15;             // face quality base ~ Uniform(q_lo, q_hi)
  double q_hi = 0.95;
  double ar1_rho = 0.98;          // quality trajectory AR(1) coefficient
  double sigma_q = 0.02;          // quality innovation noise
  double sigma_a = 0.25;          // audio embedding noise scale
  double sigma_f = 0.9;           // face embedding noise scale, multiplied by (1 - q_t)
  double sync_gain = 4.0;         // logit gain of the synthetic sync model
  double sigma_s = 0.6;           // sync logit noise
  int person_pool = 0;            // shared identity pool size; 0 picks a default
  std::uint64_t seed = 0;

  void validate() const {
    auto bad = [](const std::string& m) { return InvalidConfig(m); };
    if (n_clips < 1) throw bad("n_clips must be >= 1");
    if (identities_min < 1 || identities_max < identities_min)
      throw bad("identities_per_clip range invalid");
    if (!(duration_s > 0.0)) throw bad("duration_s must be > 0");
    if (!(fps > 0.0)) throw bad("fps must be > 0");
    if (!(audio_sample_rate > 0.0)) throw bad("audio_sample_rate must be > 0");
    if (!(spurt_on_mean_s > 0.0) || !(spurt_off_mean_s > 0.0))
      throw bad("spurt mean durations must be > 0");
    if (!(overlap_rate >= 0.0 && overlap_rate <= 1.0)) throw bad("overlap_rate must lie in [0,1]");
    if (d_s < 1 || d_f < 1) throw bad("embedding dimensions must be >= 1");
    if (!(q_lo >= 0.0 && q_lo <= q_hi && q_hi <= 1.0)) throw bad("quality range invalid");
    if (!(ar1_rho >= 0.0 && ar1_rho < 1.0)) throw bad("ar1_rho must lie in [0,1)");
    if (sigma_q < 0.0 || sigma_a < 0.0 || sigma_f < 0.0 || sigma_s < 0.0)
      throw bad("noise scales must be >= 0");
    if (!(sync_gain >= 0.0)) throw bad("sync_gain must be >= 0");
    if (person_pool != 0 && person_pool < identities_max)
      throw bad("person_pool must be 0 or >= identities_max");
  }
};

namespace detail {

inline std::string zero_pad(std::int64_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*lld", width, static_cast<long long>(v));
  return buf;
}

inline std::vector<double> unit_sphere_vector(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-300));
  for (auto& x : v) x *= inv;
  return v;
}

struct ClipData {
  ClipMeta clip;
  std::vector<FaceTrack> tracks;
  std::vector<SpeakingLabel> labels;
  std::vector<Utterance> utterances;
  std::vector<UtteranceEmbedding> utt_embeddings;
  std::vector<FaceEmbeddingTrack> face_embeddings;
};

// Recurring participants: clips draw their identities from a shared person
// pool, mirroring egocentric corpora where the same people appear in many
// clips. Each person's embeddings are drawn once, from a stream keyed by the
// person index alone.
inline std::int64_t person_pool_size(const SimConfig& cfg) {
  if (cfg.person_pool > 0) return cfg.person_pool;
  return std::max<std::int64_t>(cfg.identities_max + 1, (cfg.n_clips + 1) / 2);
}

inline ClipData generate_clip(const SimConfig& cfg, std::int64_t clip_index) {
  Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(clip_index));
  ClipData out;

  const std::string clip_id = "c" + zero_pad(clip_index, 3);
  const std::int64_t frames = std::llround(cfg.duration_s * cfg.fps);
  out.clip.clip_id = clip_id;
  out.clip.duration_s = cfg.duration_s;
  out.clip.video_fps = cfg.fps;
  out.clip.audio_sample_rate = cfg.audio_sample_rate;
  out.clip.n_audio_samples = std::llround(cfg.duration_s * cfg.audio_sample_rate);

  const int n_ids =
      static_cast<int>(rng.uniform_int(cfg.identities_min, cfg.identities_max));

  // Draw distinct pool members for this clip (partial Fisher-Yates).
  const std::int64_t pool = person_pool_size(cfg);
  std::vector<std::int64_t> pool_ids(static_cast<std::size_t>(pool));
  for (std::int64_t k = 0; k < pool; ++k) pool_ids[static_cast<std::size_t>(k)] = k;
  for (int s = 0; s < n_ids; ++s) {
    const std::int64_t j = rng.uniform_int(s, pool - 1);
    std::swap(pool_ids[static_cast<std::size_t>(s)], pool_ids[static_cast<std::size_t>(j)]);
  }

  std::vector<std::string> person_ids(static_cast<std::size_t>(n_ids));
  std::vector<std::vector<double>> voice_id(static_cast<std::size_t>(n_ids));
  std::vector<std::vector<double>> face_id(static_cast<std::size_t>(n_ids));
  for (int s = 0; s < n_ids; ++s) {
    const std::int64_t person = pool_ids[static_cast<std::size_t>(s)];
    person_ids[s] = "p" + zero_pad(person, 3);
    Rng person_rng = Rng::derive(cfg.seed, 2, static_cast<std::uint64_t>(person));
    voice_id[s] = unit_sphere_vector(person_rng, cfg.d_s);
    face_id[s] = unit_sphere_vector(person_rng, cfg.d_f);
  }

  // Two-state renewal speech timeline. Spurts are placed sequentially with
  // geometric gaps; with probability overlap_rate a spurt instead starts
  // inside the most recent one, under a different identity.
  const double on_mean = cfg.spurt_on_mean_s * cfg.fps;
  const double off_mean = cfg.spurt_off_mean_s * cfg.fps;
  std::vector<std::vector<std::uint8_t>> active(
      static_cast<std::size_t>(n_ids), std::vector<std::uint8_t>(static_cast<std::size_t>(frames), 0));
  struct Spurt {
    int id;
    std::int64_t begin, end;
  };
  std::optional<Spurt> anchor;  // spurt with the largest end so far
  std::int64_t last_end = 0;
  const std::size_t max_events =
      16 + static_cast<std::size_t>(8.0 * static_cast<double>(frames) /
                                    std::max(on_mean + off_mean, 1.0));
  for (std::size_t ev = 0; ev < max_events; ++ev) {
    int id;
    std::int64_t start;
    const bool overlapping = anchor && n_ids >= 2 && anchor->end - anchor->begin >= 1 &&
                             rng.bernoulli(cfg.overlap_rate);
    if (overlapping) {
      start = rng.uniform_int(anchor->begin, anchor->end - 1);
      const std::int64_t k = rng.uniform_int(0, n_ids - 2);
      id = static_cast<int>(k >= anchor->id ? k + 1 : k);
    } else {
      start = last_end + rng.geometric(off_mean);
      id = static_cast<int>(rng.uniform_int(0, n_ids - 1));
    }
    const std::int64_t len = rng.geometric(on_mean);
    if (start >= frames) break;
    const std::int64_t stop = std::min(start + len, frames);
    for (std::int64_t f = start; f < stop; ++f) active[id][f] = 1;
    const Spurt cur{id, start, start + len};
    if (!anchor || cur.end > anchor->end) anchor = cur;
    last_end = std::max(last_end, cur.end);
  }

  // One full-length track per identity, with an AR(1) quality trajectory and
  // per-frame face embeddings whose noise grows as quality drops.
  for (int s = 0; s < n_ids; ++s) {
    const std::string& person_id = person_ids[static_cast<std::size_t>(s)];
    FaceTrack t;
    t.clip_id = clip_id;
    t.track_id = clip_id + "_" + person_id + "_t0";
    t.person_id = person_id;
    t.start_frame = 0;
    t.frame_count = frames;

    std::vector<double> quality(static_cast<std::size_t>(frames));
    const double q_base = rng.uniform(cfg.q_lo, cfg.q_hi);
    double q_prev = q_base;
    for (std::int64_t f = 0; f < frames; ++f) {
      const double q = cfg.ar1_rho * q_prev + (1.0 - cfg.ar1_rho) * q_base +
                       cfg.sigma_q * rng.normal();
      q_prev = std::clamp(q, 0.0, 1.0);
      quality[f] = q_prev;
    }
    t.quality = quality;
    out.tracks.push_back(std::move(t));

    FaceEmbeddingTrack fe;
    fe.clip_id = clip_id;
    fe.person_id = person_id;
    fe.frames.resize(static_cast<std::size_t>(frames));
    for (std::int64_t f = 0; f < frames; ++f) {
      std::vector<double> row(face_id[s]);
      const double scale = cfg.sigma_f * (1.0 - quality[f]);
      for (auto& x : row) x += scale * rng.normal();
      fe.frames[f] = std::move(row);
    }
    out.face_embeddings.push_back(std::move(fe));

    SpeakingLabel l;
    l.clip_id = clip_id;
    l.track_id = clip_id + "_" + person_id + "_t0";
    l.active = active[s];
    out.labels.push_back(std::move(l));
  }

  // Utterances: maximal single-speaker activity runs, chronological ids.
  struct Run {
    int id;
    std::int64_t begin, end;
  };
  std::vector<Run> runs;
  for (int s = 0; s < n_ids; ++s) {
    std::int64_t f = 0;
    while (f < frames) {
      if (!active[s][f]) {
        ++f;
        continue;
      }
      std::int64_t e = f;
      while (e < frames && active[s][e]) ++e;
      runs.push_back(Run{s, f, e});
      f = e;
    }
  }
  std::sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) {
    return std::tie(a.begin, a.id) < std::tie(b.begin, b.id);
  });
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const Run& r = runs[i];
    Utterance u;
    u.clip_id = clip_id;
    u.utt_id = clip_id + "_u" + zero_pad(static_cast<std::int64_t>(i), 3);
    u.start_s = static_cast<double>(r.begin) / cfg.fps;
    u.end_s = static_cast<double>(r.end) / cfg.fps;
    u.speaker_hint = person_ids[static_cast<std::size_t>(r.id)];
    out.utterances.push_back(u);

    std::int64_t overlapped = 0;
    for (std::int64_t f = r.begin; f < r.end; ++f) {
      for (int s2 = 0; s2 < n_ids; ++s2) {
        if (s2 != r.id && active[s2][f]) {
          ++overlapped;
          break;
        }
      }
    }
    const double overlap_frac =
        static_cast<double>(overlapped) / static_cast<double>(r.end - r.begin);

    UtteranceEmbedding e;
    e.utt_id = u.utt_id;
    e.vector = voice_id[r.id];
    const double scale = cfg.sigma_a * (1.0 + overlap_frac);
    for (auto& x : e.vector) x += scale * rng.normal();
    out.utt_embeddings.push_back(std::move(e));
  }

  return out;
}

}  // namespace detail

// Generates a full, self-consistent manifest bundle. Clips are independent
// streams derived from (seed, clip_index), so results do not depend on the
// worker count.
inline Bundle generate_bundle(const SimConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  std::vector<detail::ClipData> clips(static_cast<std::size_t>(cfg.n_clips));
  parallel_for(clips.size(), threads,
               [&](std::size_t i) { clips[i] = detail::generate_clip(cfg, static_cast<std::int64_t>(i)); });
  Bundle b;
  for (auto& c : clips) {
    b.clips.push_back(std::move(c.clip));
    for (auto& x : c.tracks) b.tracks.push_back(std::move(x));
    for (auto& x : c.labels) b.labels.push_back(std::move(x));
    for (auto& x : c.utterances) b.utterances.push_back(std::move(x));
    for (auto& x : c.utt_embeddings) b.utt_embeddings.push_back(std::move(x));
    for (auto& x : c.face_embeddings) b.face_embeddings.push_back(std::move(x));
  }
  return b;
}

// Synthetic synchronisation-model scores:
//   p[t] = logistic(gain * (2 y_t - 1) * q_t + noise),
// so zero quality pins the score at chance and high quality separates the
// classes sharply.
inline std::vector<FrameScoreStream> synth_sync_scores(const SimConfig& cfg, const Bundle& bundle,
                                                       unsigned threads = 1) {
  cfg.validate();
  std::map<std::string, std::size_t> clip_index;
  for (std::size_t i = 0; i < bundle.clips.size(); ++i)
    clip_index.emplace(bundle.clips[i].clip_id, i);
  std::map<std::pair<std::string, std::string>, const SpeakingLabel*> label_by_key;
  for (const auto& l : bundle.labels)
    label_by_key.emplace(std::make_pair(l.clip_id, l.track_id), &l);

  std::vector<FrameScoreStream> out(bundle.tracks.size());
  // Tracks of one clip share a generator; group them to keep draw order fixed.
  std::map<std::string, std::vector<std::size_t>> track_ids_by_clip;
  for (std::size_t i = 0; i < bundle.tracks.size(); ++i)
    track_ids_by_clip[bundle.tracks[i].clip_id].push_back(i);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> clip_groups(
      track_ids_by_clip.begin(), track_ids_by_clip.end());

  parallel_for(clip_groups.size(), threads, [&](std::size_t g) {
    const auto& [clip_id, track_indices] = clip_groups[g];
    auto cit = clip_index.find(clip_id);
    if (cit == clip_index.end()) throw DanglingReference("track references unknown clip " + clip_id);
    Rng rng = Rng::derive(cfg.seed, 1, cit->second);
    for (std::size_t ti : track_indices) {
      const FaceTrack& t = bundle.tracks[ti];
      if (!t.quality)
        throw MissingQuality("track " + t.clip_id + "/" + t.track_id + " has no quality scores");
      auto lit = label_by_key.find(std::make_pair(t.clip_id, t.track_id));
      if (lit == label_by_key.end())
        throw MissingLabels("track " + t.clip_id + "/" + t.track_id + " has no label");
      const SpeakingLabel& l = *lit->second;
      if (static_cast<std::int64_t>(l.active.size()) != t.frame_count)
        throw LengthMismatch("label length does not match track " + t.track_id);
      FrameScoreStream s;
      s.clip_id = t.clip_id;
      s.track_id = t.track_id;
      s.source = "sync";
      s.scores.resize(static_cast<std::size_t>(t.frame_count));
      for (std::int64_t f = 0; f < t.frame_count; ++f) {
        const double y = l.active[f] ? 1.0 : -1.0;
        const double q = (*t.quality)[f];
        const double eps = cfg.sigma_s > 0.0 ? cfg.sigma_s * rng.normal() : 0.0;
        const double logit = cfg.sync_gain * y * q + eps;
        s.scores[f] = 1.0 / (1.0 + std::exp(-logit));
      }
      out[ti] = std::move(s);
    }
  });
  return out;
}

enum class DegradeMode { Silence, Noise };

inline DegradeMode degrade_mode_from_name(const std::string& name) {
  if (name == "silence") return DegradeMode::Silence;
  if (name == "noise") return DegradeMode::Noise;
  throw InvalidConfig("unknown degrade mode \"" + name + "\" (expected silence|noise)");
}

// A clip-level frame range whose audio evidence was destroyed.
struct MaskedSpan {
  std::string clip_id;
  FrameSpan span;
};

// Pulls masked frames toward chance: score <- (1-strength)*score + strength*0.5.
// Both modes model evidence destruction as a shift toward 0.5; they differ
// only in how the masking is described upstream.
inline std::vector<FrameScoreStream> degrade_sync(std::vector<FrameScoreStream> streams,
                                                  const std::vector<FaceTrack>& tracks,
                                                  const std::vector<MaskedSpan>& spans,
                                                  DegradeMode /*mode*/, double strength) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw InvalidConfig("strength must lie in [0,1]");
  std::map<std::pair<std::string, std::string>, const FaceTrack*> track_by_key;
  for (const auto& t : tracks) track_by_key.emplace(std::make_pair(t.clip_id, t.track_id), &t);
  for (const auto& m : spans) {
    if (m.span.begin < 0 || m.span.begin >= m.span.end)
      throw SpanOutOfRange("masked span [" + std::to_string(m.span.begin) + "," +
                           std::to_string(m.span.end) + ") is invalid");
  }
  for (auto& s : streams) {
    auto it = track_by_key.find(std::make_pair(s.clip_id, s.track_id));
    if (it == track_by_key.end())
      throw DanglingReference("stream references unknown track " + s.clip_id + "/" + s.track_id);
    const FaceTrack& t = *it->second;
    if (static_cast<std::int64_t>(s.scores.size()) != t.frame_count)
      throw LengthMismatch("stream length does not match track " + s.track_id);
    for (const auto& m : spans) {
      if (m.clip_id != s.clip_id) continue;
      const std::int64_t lo = std::max(m.span.begin, t.start_frame);
      const std::int64_t hi = std::min(m.span.end, t.start_frame + t.frame_count);
      for (std::int64_t f = lo; f < hi; ++f) {
        double& cell = s.scores[static_cast<std::size_t>(f - t.start_frame)];
        cell = (1.0 - strength) * cell + strength * 0.5;
      }
    }
  }
  return streams;
}

}  // namespace asdkit
