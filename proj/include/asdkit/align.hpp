#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "asdkit/datamodel.hpp"
#include "asdkit/error.hpp"

namespace asdkit {

// Half-open range of video frame indices.
struct FrameSpan {
  std::int64_t begin = 0;
  std::int64_t end = 0;  // exclusive

  std::int64_t length() const { return end - begin; }
  bool contains(std::int64_t f) const { return f >= begin && f < end; }
};

// Frame f belongs to an utterance iff its midpoint time (f + 0.5) / fps lies
// in [start_s, end_s). Returns nullopt when no midpoint falls inside (the
// utterance is shorter than the midpoint spacing and straddles none).
inline std::optional<FrameSpan> utterance_to_span(const Utterance& u, double fps) {
  if (!(fps > 0.0)) throw InvalidConfig("fps must be > 0");
  const auto midpoint_inside = [&](std::int64_t f) {
    const double mid = (static_cast<double>(f) + 0.5) / fps;
    return mid >= u.start_s && mid < u.end_s;
  };
  // Closed-form candidates, then a predicate fix-up so the boundary decision
  // is made by exactly the midpoint test above (float-safe at both ends).
  std::int64_t first =
      static_cast<std::int64_t>(std::ceil(u.start_s * fps - 0.5));
  std::int64_t last =
      static_cast<std::int64_t>(std::ceil(u.end_s * fps - 0.5));  // exclusive
  first = std::max<std::int64_t>(first - 2, 0);
  last = std::max(last + 2, first);
  while (first < last && !midpoint_inside(first)) ++first;
  while (last > first && !midpoint_inside(last - 1)) --last;
  if (first >= last) return std::nullopt;
  return FrameSpan{first, last};
}

// One face-voice match score: utterance `utt_id` was spoken by `person_id`
// with the given probability.
struct Match {
  std::string utt_id;
  std::string person_id;
  double prob = 0.0;
};

// Projects utterance-level matching probabilities uniformly onto the frames
// of every track they overlap. Frames covered by several utterances keep the
// maximum probability; uncovered frames stay 0. Every track receives a
// stream, so downstream fusion is total.
inline std::vector<FrameScoreStream> project_assoc(const std::vector<Match>& matches,
                                                   const std::vector<Utterance>& utterances,
                                                   const std::vector<FaceTrack>& tracks,
                                                   double fps) {
  std::map<std::string, const Utterance*> utt_by_id;
  for (const auto& u : utterances) utt_by_id.emplace(u.utt_id, &u);

  std::vector<const FaceTrack*> ordered;
  ordered.reserve(tracks.size());
  for (const auto& t : tracks) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(), [](const FaceTrack* a, const FaceTrack* b) {
    return std::tie(a->clip_id, a->track_id) < std::tie(b->clip_id, b->track_id);
  });

  std::vector<FrameScoreStream> out;
  std::map<std::pair<std::string, std::string>, std::size_t> stream_index;
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> tracks_by_clip_person;
  for (const FaceTrack* t : ordered) {
    FrameScoreStream s;
    s.clip_id = t->clip_id;
    s.track_id = t->track_id;
    s.scores.assign(static_cast<std::size_t>(t->frame_count), 0.0);
    s.source = "assoc";
    stream_index.emplace(std::make_pair(t->clip_id, t->track_id), out.size());
    tracks_by_clip_person[std::make_pair(t->clip_id, t->person_id)].push_back(out.size());
    out.push_back(std::move(s));
  }

  for (const auto& m : matches) {
    if (!(m.prob >= 0.0 && m.prob <= 1.0))
      throw ValidationError("match for utterance " + m.utt_id + ": probability outside [0,1]");
    auto uit = utt_by_id.find(m.utt_id);
    if (uit == utt_by_id.end())
      throw DanglingReference("match references unknown utterance " + m.utt_id);
    const Utterance& u = *uit->second;
    auto tit = tracks_by_clip_person.find(std::make_pair(u.clip_id, m.person_id));
    if (tit == tracks_by_clip_person.end())
      throw DanglingReference("match for utterance " + m.utt_id + ": person " + m.person_id +
                              " is not visible in clip " + u.clip_id);
    const auto span = utterance_to_span(u, fps);
    if (!span) continue;
    for (std::size_t si : tit->second) {
      FrameScoreStream& s = out[si];
      const FaceTrack* t = ordered[si];
      // Projection is intersected with the track's own frame range.
      const std::int64_t lo = std::max(span->begin, t->start_frame);
      const std::int64_t hi = std::min(span->end, t->start_frame + t->frame_count);
      for (std::int64_t f = lo; f < hi; ++f) {
        double& cell = s.scores[static_cast<std::size_t>(f - t->start_frame)];
        cell = std::max(cell, m.prob);
      }
    }
  }
  return out;
}

// Per-clip fps variant used by the pipelines.
inline std::vector<FrameScoreStream> project_assoc(const std::vector<Match>& matches,
                                                   const Bundle& bundle) {
  std::map<std::string, double> fps_by_clip;
  for (const auto& c : bundle.clips) fps_by_clip.emplace(c.clip_id, c.video_fps);

  std::vector<FrameScoreStream> out;
  std::map<std::string, std::vector<Match>> matches_by_clip;
  std::map<std::string, const Utterance*> utt_by_id;
  for (const auto& u : bundle.utterances) utt_by_id.emplace(u.utt_id, &u);
  for (const auto& m : matches) {
    auto it = utt_by_id.find(m.utt_id);
    if (it == utt_by_id.end())
      throw DanglingReference("match references unknown utterance " + m.utt_id);
    matches_by_clip[it->second->clip_id].push_back(m);
  }

  std::map<std::string, std::vector<Utterance>> utts_by_clip;
  for (const auto& u : bundle.utterances) utts_by_clip[u.clip_id].push_back(u);
  std::map<std::string, std::vector<FaceTrack>> tracks_by_clip;
  for (const auto& t : bundle.tracks) tracks_by_clip[t.clip_id].push_back(t);

  for (const auto& [clip_id, clip_tracks] : tracks_by_clip) {
    auto fit = fps_by_clip.find(clip_id);
    if (fit == fps_by_clip.end())
      throw DanglingReference("track references unknown clip " + clip_id);
    auto streams = project_assoc(matches_by_clip[clip_id], utts_by_clip[clip_id], clip_tracks,
                                 fit->second);
    for (auto& s : streams) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace asdkit
