#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "asdkit/error.hpp"

namespace asdkit {

struct ClipMeta {
  std::string clip_id;
  double duration_s = 0.0;
  double video_fps = 30.0;
  double audio_sample_rate = 16000.0;
  std::int64_t n_audio_samples = 0;

  // Upper bound on valid frame indices (exclusive).
  std::int64_t max_frame_bound() const {
    return static_cast<std::int64_t>(std::floor(duration_s * video_fps)) + 1;
  }
};

struct FaceTrack {
  std::string clip_id;
  std::string track_id;
  std::string person_id;
  std::int64_t start_frame = 0;
  std::int64_t frame_count = 0;
  std::optional<std::vector<double>> quality;
};

struct SpeakingLabel {
  std::string clip_id;
  std::string track_id;
  std::vector<std::uint8_t> active;
};

struct Utterance {
  std::string clip_id;
  std::string utt_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::optional<std::string> speaker_hint;
};

struct UtteranceEmbedding {
  std::string utt_id;
  std::vector<double> vector;
};

struct FaceEmbeddingTrack {
  std::string clip_id;
  std::string person_id;
  std::vector<std::vector<double>> frames;  // T x d_f
};

struct FrameScoreStream {
  std::string clip_id;
  std::string track_id;
  std::vector<double> scores;
  std::optional<std::string> source;
};

namespace detail {

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_in_unit(const std::vector<double>& v) {
  for (double x : v)
    if (!(x >= 0.0 && x <= 1.0)) return false;
  return true;
}

}  // namespace detail

// Record-level invariant checks. Cross-record invariants live in
// validate_bundle.

inline void check_record(const ClipMeta& c) {
  if (c.clip_id.empty()) throw ValidationError("clip with empty clip_id");
  if (!(c.duration_s > 0.0))
    throw ValidationError("clip " + c.clip_id + ": duration_s must be > 0");
  if (!(c.video_fps > 0.0))
    throw ValidationError("clip " + c.clip_id + ": video_fps must be > 0");
  if (!(c.audio_sample_rate > 0.0))
    throw ValidationError("clip " + c.clip_id + ": audio_sample_rate must be > 0");
  const double expected = c.duration_s * c.audio_sample_rate;
  if (std::abs(static_cast<double>(c.n_audio_samples) - expected) > 1.0 + 1e-9)
    throw ValidationError("clip " + c.clip_id +
                          ": n_audio_samples inconsistent with duration_s * audio_sample_rate");
}

inline void check_record(const FaceTrack& t) {
  if (t.track_id.empty()) throw ValidationError("track with empty track_id");
  if (t.start_frame < 0)
    throw ValidationError("track " + t.track_id + ": start_frame must be >= 0");
  if (t.frame_count < 1)
    throw ValidationError("track " + t.track_id + ": frame_count must be >= 1");
  if (t.quality) {
    if (static_cast<std::int64_t>(t.quality->size()) != t.frame_count)
      throw ValidationError("track " + t.track_id + ": quality length " +
                            std::to_string(t.quality->size()) + " != frame_count " +
                            std::to_string(t.frame_count));
    if (!detail::all_in_unit(*t.quality))
      throw ValidationError("track " + t.track_id + ": quality values must lie in [0,1]");
  }
}

inline void check_record(const SpeakingLabel& l) {
  if (l.track_id.empty()) throw ValidationError("label with empty track_id");
  if (l.active.empty())
    throw ValidationError("label for track " + l.track_id + ": empty active sequence");
  for (auto v : l.active)
    if (v > 1)
      throw ValidationError("label for track " + l.track_id + ": active values must be 0/1");
}

inline void check_record(const Utterance& u) {
  if (u.utt_id.empty()) throw ValidationError("utterance with empty utt_id");
  if (!(u.start_s >= 0.0) || !(u.start_s < u.end_s))
    throw ValidationError("utterance " + u.utt_id + ": requires 0 <= start_s < end_s");
}

inline void check_record(const UtteranceEmbedding& e) {
  if (e.utt_id.empty()) throw ValidationError("utterance embedding with empty utt_id");
  if (e.vector.empty())
    throw ValidationError("utterance embedding " + e.utt_id + ": empty vector");
  if (!detail::all_finite(e.vector))
    throw ValidationError("utterance embedding " + e.utt_id + ": non-finite values");
}

inline void check_record(const FaceEmbeddingTrack& f) {
  if (f.person_id.empty()) throw ValidationError("face embedding with empty person_id");
  const std::string id = f.clip_id + "/" + f.person_id;
  if (f.frames.empty())
    throw ValidationError("face embeddings " + id + ": needs at least one frame");
  const std::size_t dim = f.frames.front().size();
  if (dim == 0) throw ValidationError("face embeddings " + id + ": empty rows");
  for (const auto& row : f.frames) {
    if (row.size() != dim)
      throw ValidationError("face embeddings " + id + ": ragged frame matrix");
    if (!detail::all_finite(row))
      throw ValidationError("face embeddings " + id + ": non-finite values");
  }
}

inline void check_record(const FrameScoreStream& s) {
  if (s.track_id.empty()) throw ValidationError("score stream with empty track_id");
  if (s.scores.empty())
    throw ValidationError("scores for track " + s.track_id + ": empty sequence");
  if (!detail::all_in_unit(s.scores))
    throw ValidationError("scores for track " + s.track_id + ": values must lie in [0,1]");
}

struct Bundle {
  std::vector<ClipMeta> clips;
  std::vector<FaceTrack> tracks;
  std::vector<SpeakingLabel> labels;
  std::vector<Utterance> utterances;
  std::vector<UtteranceEmbedding> utt_embeddings;
  std::vector<FaceEmbeddingTrack> face_embeddings;
};

// Read-only lookup tables over an already validated bundle. Views only;
// the bundle must outlive the index.
struct BundleIndex {
  std::map<std::string, const ClipMeta*> clip_by_id;
  std::map<std::pair<std::string, std::string>, const FaceTrack*> track_by_key;
  std::map<std::string, std::vector<const FaceTrack*>> tracks_by_clip;
  std::map<std::pair<std::string, std::string>, const SpeakingLabel*> label_by_key;
  std::map<std::string, const Utterance*> utterance_by_id;
  std::map<std::string, std::vector<const Utterance*>> utterances_by_clip;
  std::map<std::string, const UtteranceEmbedding*> utt_embedding_by_id;
  std::map<std::pair<std::string, std::string>, const FaceEmbeddingTrack*> face_embedding_by_key;
  std::map<std::string, std::vector<const FaceEmbeddingTrack*>> face_embeddings_by_clip;

  explicit BundleIndex(const Bundle& b) {
    for (const auto& c : b.clips) clip_by_id.emplace(c.clip_id, &c);
    for (const auto& t : b.tracks) {
      track_by_key.emplace(std::make_pair(t.clip_id, t.track_id), &t);
      tracks_by_clip[t.clip_id].push_back(&t);
    }
    for (const auto& l : b.labels)
      label_by_key.emplace(std::make_pair(l.clip_id, l.track_id), &l);
    for (const auto& u : b.utterances) {
      utterance_by_id.emplace(u.utt_id, &u);
      utterances_by_clip[u.clip_id].push_back(&u);
    }
    for (const auto& e : b.utt_embeddings) utt_embedding_by_id.emplace(e.utt_id, &e);
    for (const auto& f : b.face_embeddings) {
      face_embedding_by_key.emplace(std::make_pair(f.clip_id, f.person_id), &f);
      face_embeddings_by_clip[f.clip_id].push_back(&f);
    }
  }
};

struct Finding {
  std::string kind;
  std::string id;
  std::string message;

  std::string line() const { return kind + " [" + id + "]: " + message; }
};

// Cross-reference and duplicate audit. Empty result means the bundle can be
// scored and evaluated end to end.
inline std::vector<Finding> validate_bundle(const Bundle& b) {
  std::vector<Finding> out;
  auto add = [&out](const char* kind, const std::string& id, const std::string& msg) {
    out.push_back(Finding{kind, id, msg});
  };

  std::map<std::string, const ClipMeta*> clips;
  for (const auto& c : b.clips) {
    if (!clips.emplace(c.clip_id, &c).second)
      add("DuplicateId", c.clip_id, "clip_id appears more than once");
  }

  std::map<std::pair<std::string, std::string>, const FaceTrack*> tracks;
  std::map<std::string, std::set<std::string>> persons_by_clip;
  for (const auto& t : b.tracks) {
    const auto key = std::make_pair(t.clip_id, t.track_id);
    if (!tracks.emplace(key, &t).second)
      add("DuplicateId", t.clip_id + "/" + t.track_id, "track_id appears more than once in clip");
    auto it = clips.find(t.clip_id);
    if (it == clips.end()) {
      add("DanglingReference", t.clip_id + "/" + t.track_id, "track references unknown clip");
    } else if (t.start_frame + t.frame_count > it->second->max_frame_bound()) {
      add("OutOfBounds", t.clip_id + "/" + t.track_id, "track extends past the end of its clip");
    }
    persons_by_clip[t.clip_id].insert(t.person_id);
  }

  std::set<std::pair<std::string, std::string>> labelled;
  for (const auto& l : b.labels) {
    const auto key = std::make_pair(l.clip_id, l.track_id);
    if (!labelled.insert(key).second)
      add("DuplicateId", l.clip_id + "/" + l.track_id, "more than one label for track");
    auto it = tracks.find(key);
    if (it == tracks.end()) {
      add("DanglingReference", l.clip_id + "/" + l.track_id, "label references unknown track");
    } else if (static_cast<std::int64_t>(l.active.size()) != it->second->frame_count) {
      add("LengthMismatch", l.clip_id + "/" + l.track_id,
          "label length " + std::to_string(l.active.size()) + " != track frame_count " +
              std::to_string(it->second->frame_count));
    }
  }
  for (const auto& [key, t] : tracks) {
    (void)t;
    if (!labelled.count(key))
      add("MissingLabel", key.first + "/" + key.second, "track has no speaking label");
  }

  std::map<std::string, const Utterance*> utts;
  for (const auto& u : b.utterances) {
    if (!utts.emplace(u.utt_id, &u).second)
      add("DuplicateId", u.utt_id, "utt_id appears more than once");
    auto it = clips.find(u.clip_id);
    if (it == clips.end()) {
      add("DanglingReference", u.utt_id, "utterance references unknown clip");
    } else if (u.end_s > it->second->duration_s + 1e-9) {
      add("OutOfBounds", u.utt_id, "utterance extends past the end of its clip");
    }
  }

  std::set<std::string> embedded_utts;
  std::size_t d_s = 0;
  for (const auto& e : b.utt_embeddings) {
    if (!embedded_utts.insert(e.utt_id).second)
      add("DuplicateId", e.utt_id, "more than one embedding for utterance");
    if (!utts.count(e.utt_id))
      add("DanglingReference", e.utt_id, "embedding references unknown utterance");
    if (d_s == 0) d_s = e.vector.size();
    if (e.vector.size() != d_s)
      add("DimensionMismatch", e.utt_id,
          "utterance embedding dimension " + std::to_string(e.vector.size()) +
              " != first seen d_S " + std::to_string(d_s));
  }
  for (const auto& [id, u] : utts) {
    (void)u;
    if (!embedded_utts.count(id))
      add("MissingEmbedding", id, "utterance has no speaker embedding");
  }

  std::set<std::pair<std::string, std::string>> embedded_faces;
  std::size_t d_f = 0;
  for (const auto& f : b.face_embeddings) {
    const auto key = std::make_pair(f.clip_id, f.person_id);
    const std::string id = f.clip_id + "/" + f.person_id;
    if (!embedded_faces.insert(key).second)
      add("DuplicateId", id, "person_id appears more than once in clip");
    if (!clips.count(f.clip_id)) add("DanglingReference", id, "face embeddings reference unknown clip");
    auto pit = persons_by_clip.find(f.clip_id);
    if (pit == persons_by_clip.end() || !pit->second.count(f.person_id))
      add("DanglingReference", id, "face embeddings for a person with no track in clip");
    if (!f.frames.empty()) {
      if (d_f == 0) d_f = f.frames.front().size();
      if (f.frames.front().size() != d_f)
        add("DimensionMismatch", id,
            "face embedding dimension " + std::to_string(f.frames.front().size()) +
                " != first seen d_F " + std::to_string(d_f));
    }
  }
  for (const auto& [clip, persons] : persons_by_clip) {
    for (const auto& person : persons) {
      if (!embedded_faces.count(std::make_pair(clip, person)))
        add("MissingEmbedding", clip + "/" + person, "visible person has no face embeddings");
    }
  }

  return out;
}

}  // namespace asdkit
