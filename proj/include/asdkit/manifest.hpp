#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "asdkit/datamodel.hpp"
#include "asdkit/error.hpp"

namespace asdkit {

struct ParseOptions {
  bool lenient = false;  // when set, unknown keys are ignored instead of rejected
};

namespace detail {

using nlohmann::json;
using nlohmann::ordered_json;

inline std::string where(const std::filesystem::path& path, std::size_t lineno) {
  return path.string() + ":" + std::to_string(lineno);
}

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::filesystem::path& path, std::size_t lineno,
                                const ParseOptions& opts) {
  if (opts.lenient) return;
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ParseError(where(path, lineno) + ": unknown key \"" + item.key() + "\"");
  }
}

inline const json& require(const json& j, const char* key, const std::filesystem::path& path,
                           std::size_t lineno) {
  auto it = j.find(key);
  if (it == j.end())
    throw ParseError(where(path, lineno) + ": missing key \"" + std::string(key) + "\"");
  return *it;
}

template <typename T>
T get_as(const json& j, const char* key, const std::filesystem::path& path, std::size_t lineno) {
  try {
    return require(j, key, path, lineno).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where(path, lineno) + ": key \"" + std::string(key) + "\": " + e.what());
  }
}

// Parses a whole JSONL file, applying `parse(record_json, lineno)` per line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& parse) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where(path, lineno) + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(where(path, lineno) + ": record is not a JSON object");
    parse(j, lineno);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Loaders: one collection per manifest file, record invariants enforced.

inline std::vector<ClipMeta> load_clips(const std::filesystem::path& path,
                                        const ParseOptions& opts = {}) {
  std::vector<ClipMeta> out;
  detail::for_each_record(path, [&](const detail::json& j, std::size_t lineno) {
    detail::reject_unknown_keys(
        j, {"clip_id", "duration_s", "video_fps", "audio_sample_rate", "n_audio_samples"}, path,
        lineno, opts);
    ClipMeta c;
    c.clip_id = detail::get_as<std::string>(j, "clip_id", path, lineno);
    c.duration_s = detail::get_as<double>(j, "duration_s", path, lineno);
    if (j.contains("video_fps")) c.video_fps = detail::get_as<double>(j, "video_fps", path, lineno);
    if (j.contains("audio_sample_rate"))
      c.audio_sample_rate = detail::get_as<double>(j, "audio_sample_rate", path, lineno);
    c.n_audio_samples = detail::get_as<std::int64_t>(j, "n_audio_samples", path, lineno);
    check_record(c);
    out.push_back(std::move(c));
  });
  return out;
}

inline std::vector<FaceTrack> load_tracks(const std::filesystem::path& path,
                                          const ParseOptions& opts = {}) {
  std::vector<FaceTrack> out;
  detail::for_each_record(path, [&](const detail::json& j, std::size_t lineno) {
    detail::reject_unknown_keys(
        j, {"clip_id", "track_id", "person_id", "start_frame", "frame_count", "quality"}, path,
        lineno, opts);
    FaceTrack t;
    t.clip_id = detail::get_as<std::string>(j, "clip_id", path, lineno);
    t.track_id = detail::get_as<std::string>(j, "track_id", path, lineno);
    t.person_id = detail::get_as<std::string>(j, "person_id", path, lineno);
    t.start_frame = detail::get_as<std::int64_t>(j, "start_frame", path, lineno);
    t.frame_count = detail::get_as<std::int64_t>(j, "frame_count", path, lineno);
    if (j.contains("quality"))
      t.quality = detail::get_as<std::vector<double>>(j, "quality", path, lineno);
    check_record(t);
    out.push_back(std::move(t));
  });
  return out;
}

inline std::vector<SpeakingLabel> load_labels(const std::filesystem::path& path,
                                              const ParseOptions& opts = {}) {
  std::vector<SpeakingLabel> out;
  detail::for_each_record(path, [&](const detail::json& j, std::size_t lineno) {
    detail::reject_unknown_keys(j, {"clip_id", "track_id", "active"}, path, lineno, opts);
    SpeakingLabel l;
    l.clip_id = detail::get_as<std::string>(j, "clip_id", path, lineno);
    l.track_id = detail::get_as<std::string>(j, "track_id", path, lineno);
    for (int v : detail::get_as<std::vector<int>>(j, "active", path, lineno)) {
      if (v != 0 && v != 1)
        throw ParseError(detail::where(path, lineno) + ": active values must be 0 or 1");
      l.active.push_back(static_cast<std::uint8_t>(v));
    }
    check_record(l);
    out.push_back(std::move(l));
  });
  return out;
}

inline std::vector<Utterance> load_utterances(const std::filesystem::path& path,
                                              const ParseOptions& opts = {}) {
  std::vector<Utterance> out;
  detail::for_each_record(path, [&](const detail::json& j, std::size_t lineno) {
    detail::reject_unknown_keys(j, {"clip_id", "utt_id", "start_s", "end_s", "speaker_hint"}, path,
                                lineno, opts);
    Utterance u;
    u.clip_id = detail::get_as<std::string>(j, "clip_id", path, lineno);
    u.utt_id = detail::get_as<std::string>(j, "utt_id", path, lineno);
    u.start_s = detail::get_as<double>(j, "start_s", path, lineno);
    u.end_s = detail::get_as<double>(j, "end_s", path, lineno);
    if (j.contains("speaker_hint"))
      u.speaker_hint = detail::get_as<std::string>(j, "speaker_hint", path, lineno);
    check_record(u);
    out.push_back(std::move(u));
  });
  return out;
}

inline std::vector<UtteranceEmbedding> load_utt_embeddings(const std::filesystem::path& path,
                                                           const ParseOptions& opts = {}) {
  std::vector<UtteranceEmbedding> out;
  detail::for_each_record(path, [&](const detail::json& j, std::size_t lineno) {
    detail::reject_unknown_keys(j, {"utt_id", "vector"}, path, lineno, opts);
    UtteranceEmbedding e;
    e.utt_id = detail::get_as<std::string>(j, "utt_id", path, lineno);
    e.vector = detail::get_as<std::vector<double>>(j, "vector", path, lineno);
    check_record(e);
    out.push_back(std::move(e));
  });
  return out;
}

inline std::vector<FaceEmbeddingTrack> load_face_embeddings(const std::filesystem::path& path,
                                                            const ParseOptions& opts = {}) {
  std::vector<FaceEmbeddingTrack> out;
  detail::for_each_record(path, [&](const detail::json& j, std::size_t lineno) {
    detail::reject_unknown_keys(j, {"clip_id", "person_id", "frames"}, path, lineno, opts);
    FaceEmbeddingTrack f;
    f.clip_id = detail::get_as<std::string>(j, "clip_id", path, lineno);
    f.person_id = detail::get_as<std::string>(j, "person_id", path, lineno);
    f.frames = detail::get_as<std::vector<std::vector<double>>>(j, "frames", path, lineno);
    check_record(f);
    out.push_back(std::move(f));
  });
  return out;
}

inline std::vector<FrameScoreStream> load_scores(const std::filesystem::path& path,
                                                 const ParseOptions& opts = {}) {
  std::vector<FrameScoreStream> out;
  detail::for_each_record(path, [&](const detail::json& j, std::size_t lineno) {
    detail::reject_unknown_keys(j, {"clip_id", "track_id", "scores", "source"}, path, lineno, opts);
    FrameScoreStream s;
    s.clip_id = detail::get_as<std::string>(j, "clip_id", path, lineno);
    s.track_id = detail::get_as<std::string>(j, "track_id", path, lineno);
    s.scores = detail::get_as<std::vector<double>>(j, "scores", path, lineno);
    if (j.contains("source")) s.source = detail::get_as<std::string>(j, "source", path, lineno);
    check_record(s);
    out.push_back(std::move(s));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Canonical writers. Key order is fixed, numbers use shortest round-trip
// formatting, one record per line; load(write(x)) is byte-identical.

inline std::string to_jsonl(const ClipMeta& c) {
  detail::ordered_json j;
  j["clip_id"] = c.clip_id;
  j["duration_s"] = c.duration_s;
  j["video_fps"] = c.video_fps;
  j["audio_sample_rate"] = c.audio_sample_rate;
  j["n_audio_samples"] = c.n_audio_samples;
  return j.dump();
}

inline std::string to_jsonl(const FaceTrack& t) {
  detail::ordered_json j;
  j["clip_id"] = t.clip_id;
  j["track_id"] = t.track_id;
  j["person_id"] = t.person_id;
  j["start_frame"] = t.start_frame;
  j["frame_count"] = t.frame_count;
  if (t.quality) j["quality"] = *t.quality;
  return j.dump();
}

inline std::string to_jsonl(const SpeakingLabel& l) {
  detail::ordered_json j;
  j["clip_id"] = l.clip_id;
  j["track_id"] = l.track_id;
  j["active"] = std::vector<int>(l.active.begin(), l.active.end());
  return j.dump();
}

inline std::string to_jsonl(const Utterance& u) {
  detail::ordered_json j;
  j["clip_id"] = u.clip_id;
  j["utt_id"] = u.utt_id;
  j["start_s"] = u.start_s;
  j["end_s"] = u.end_s;
  if (u.speaker_hint) j["speaker_hint"] = *u.speaker_hint;
  return j.dump();
}

inline std::string to_jsonl(const UtteranceEmbedding& e) {
  detail::ordered_json j;
  j["utt_id"] = e.utt_id;
  j["vector"] = e.vector;
  return j.dump();
}

inline std::string to_jsonl(const FaceEmbeddingTrack& f) {
  detail::ordered_json j;
  j["clip_id"] = f.clip_id;
  j["person_id"] = f.person_id;
  j["frames"] = f.frames;
  return j.dump();
}

inline std::string to_jsonl(const FrameScoreStream& s) {
  detail::ordered_json j;
  j["clip_id"] = s.clip_id;
  j["track_id"] = s.track_id;
  j["scores"] = s.scores;
  if (s.source) j["source"] = *s.source;
  return j.dump();
}

template <typename Record>
void write_manifest(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) out << to_jsonl(r) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Bundle directory layout.

inline std::vector<UtteranceEmbedding> load_utt_embeddings_binary(
    const std::filesystem::path& path);
inline std::vector<FaceEmbeddingTrack> load_face_embeddings_binary(
    const std::filesystem::path& path);

struct BundleFiles {
  static constexpr const char* clips = "clips.jsonl";
  static constexpr const char* tracks = "tracks.jsonl";
  static constexpr const char* labels = "labels.jsonl";
  static constexpr const char* utterances = "utterances.jsonl";
  static constexpr const char* utt_emb = "utt_emb.jsonl";
  static constexpr const char* face_emb = "face_emb.jsonl";
  static constexpr const char* sync_scores = "sync_scores.jsonl";
};

inline Bundle load_bundle(const std::filesystem::path& dir, const ParseOptions& opts = {}) {
  namespace fs = std::filesystem;
  Bundle b;
  b.clips = load_clips(dir / BundleFiles::clips, opts);
  b.tracks = load_tracks(dir / BundleFiles::tracks, opts);
  b.labels = load_labels(dir / BundleFiles::labels, opts);
  b.utterances = load_utterances(dir / BundleFiles::utterances, opts);
  const fs::path utt_emb_bin = dir / "utt_emb.bin";
  const fs::path face_emb_bin = dir / "face_emb.bin";
  b.utt_embeddings = fs::exists(utt_emb_bin) && !fs::exists(dir / BundleFiles::utt_emb)
                         ? load_utt_embeddings_binary(utt_emb_bin)
                         : load_utt_embeddings(dir / BundleFiles::utt_emb, opts);
  b.face_embeddings = fs::exists(face_emb_bin) && !fs::exists(dir / BundleFiles::face_emb)
                          ? load_face_embeddings_binary(face_emb_bin)
                          : load_face_embeddings(dir / BundleFiles::face_emb, opts);
  return b;
}

inline void write_bundle(const std::filesystem::path& dir, const Bundle& b) {
  std::filesystem::create_directories(dir);
  write_manifest(dir / BundleFiles::clips, b.clips);
  write_manifest(dir / BundleFiles::tracks, b.tracks);
  write_manifest(dir / BundleFiles::labels, b.labels);
  write_manifest(dir / BundleFiles::utterances, b.utterances);
  write_manifest(dir / BundleFiles::utt_emb, b.utt_embeddings);
  write_manifest(dir / BundleFiles::face_emb, b.face_embeddings);
}

// ---------------------------------------------------------------------------
// Binary embedding sidecar: length-prefixed records of little-endian f32,
// for bulk data where JSONL text would be too heavy.

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

inline std::uint32_t take_u32(std::istream& in, const std::string& ctx) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) throw ParseError(ctx + ": truncated");
  return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
         (static_cast<std::uint32_t>(buf[2]) << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string take_string(std::istream& in, const std::string& ctx) {
  const std::uint32_t n = take_u32(in, ctx);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw ParseError(ctx + ": truncated string");
  return s;
}

inline void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline float take_f32(std::istream& in, const std::string& ctx) {
  const std::uint32_t bits = take_u32(in, ctx);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

constexpr std::uint32_t kEmbMagic = 0x45445341u;  // "ASDE"

}  // namespace detail

inline void write_utt_embeddings_binary(const std::filesystem::path& path,
                                        const std::vector<UtteranceEmbedding>& embs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  detail::put_u32(out, detail::kEmbMagic);
  detail::put_u32(out, 1u);  // version | kind=utterance
  detail::put_u32(out, static_cast<std::uint32_t>(embs.size()));
  for (const auto& e : embs) {
    detail::put_string(out, e.utt_id);
    detail::put_u32(out, static_cast<std::uint32_t>(e.vector.size()));
    for (double v : e.vector) detail::put_f32(out, static_cast<float>(v));
  }
}

inline std::vector<UtteranceEmbedding> load_utt_embeddings_binary(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string ctx = path.string();
  if (detail::take_u32(in, ctx) != detail::kEmbMagic) throw ParseError(ctx + ": bad magic");
  if (detail::take_u32(in, ctx) != 1u) throw ParseError(ctx + ": unsupported version/kind");
  const std::uint32_t count = detail::take_u32(in, ctx);
  std::vector<UtteranceEmbedding> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    UtteranceEmbedding e;
    e.utt_id = detail::take_string(in, ctx);
    const std::uint32_t dim = detail::take_u32(in, ctx);
    e.vector.reserve(dim);
    for (std::uint32_t k = 0; k < dim; ++k)
      e.vector.push_back(static_cast<double>(detail::take_f32(in, ctx)));
    check_record(e);
    out.push_back(std::move(e));
  }
  return out;
}

inline void write_face_embeddings_binary(const std::filesystem::path& path,
                                         const std::vector<FaceEmbeddingTrack>& embs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  detail::put_u32(out, detail::kEmbMagic);
  detail::put_u32(out, 2u);  // version | kind=face
  detail::put_u32(out, static_cast<std::uint32_t>(embs.size()));
  for (const auto& f : embs) {
    detail::put_string(out, f.clip_id);
    detail::put_string(out, f.person_id);
    detail::put_u32(out, static_cast<std::uint32_t>(f.frames.size()));
    detail::put_u32(out, f.frames.empty() ? 0u : static_cast<std::uint32_t>(f.frames[0].size()));
    for (const auto& row : f.frames)
      for (double v : row) detail::put_f32(out, static_cast<float>(v));
  }
}

inline std::vector<FaceEmbeddingTrack> load_face_embeddings_binary(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string ctx = path.string();
  if (detail::take_u32(in, ctx) != detail::kEmbMagic) throw ParseError(ctx + ": bad magic");
  if (detail::take_u32(in, ctx) != 2u) throw ParseError(ctx + ": unsupported version/kind");
  const std::uint32_t count = detail::take_u32(in, ctx);
  std::vector<FaceEmbeddingTrack> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    FaceEmbeddingTrack f;
    f.clip_id = detail::take_string(in, ctx);
    f.person_id = detail::take_string(in, ctx);
    const std::uint32_t rows = detail::take_u32(in, ctx);
    const std::uint32_t cols = detail::take_u32(in, ctx);
    f.frames.assign(rows, std::vector<double>(cols));
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c)
        f.frames[r][c] = static_cast<double>(detail::take_f32(in, ctx));
    check_record(f);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace asdkit
