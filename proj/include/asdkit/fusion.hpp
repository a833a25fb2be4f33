#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "asdkit/datamodel.hpp"
#include "asdkit/error.hpp"
#include "asdkit/metrics.hpp"

namespace asdkit {

struct FusionConfig {
  double alpha = 0.5;  // weight of the synchronisation stream
};

enum class MetricKind { Map, BinaryAp };

inline MetricKind metric_from_name(const std::string& name) {
  if (name == "map") return MetricKind::Map;
  if (name == "ap") return MetricKind::BinaryAp;
  throw InvalidConfig("unknown metric \"" + name + "\" (expected map|ap)");
}

// Framewise weighted mean: out[t] = alpha * sync[t] + (1 - alpha) * assoc[t].
// alpha = 1 and alpha = 0 reproduce the inputs bitwise; the clamp only
// guards the last-ulp rounding of interior alphas, which must stay inside
// the [min, max] envelope.
inline FrameScoreStream fuse(const FrameScoreStream& sync, const FrameScoreStream& assoc,
                             const FusionConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw InvalidConfig("alpha must lie in [0,1]");
  if (sync.clip_id != assoc.clip_id || sync.track_id != assoc.track_id)
    throw TrackMismatch("cannot fuse " + sync.clip_id + "/" + sync.track_id + " with " +
                        assoc.clip_id + "/" + assoc.track_id);
  if (sync.scores.size() != assoc.scores.size())
    throw LengthMismatch("track " + sync.clip_id + "/" + sync.track_id + ": " +
                         std::to_string(sync.scores.size()) + " sync vs " +
                         std::to_string(assoc.scores.size()) + " assoc frames");
  FrameScoreStream out;
  out.clip_id = sync.clip_id;
  out.track_id = sync.track_id;
  out.source = "ens";
  out.scores.resize(sync.scores.size());
  const double a = cfg.alpha;
  for (std::size_t t = 0; t < sync.scores.size(); ++t) {
    const double s = sync.scores[t];
    const double v = assoc.scores[t];
    const double mixed = a * s + (1.0 - a) * v;
    out.scores[t] = std::clamp(mixed, std::min(s, v), std::max(s, v));
  }
  return out;
}

// Pairs sync and assoc streams by (clip_id, track_id) and fuses each pair.
// A track with no assoc stream is fused against all zeros, so the ensemble
// stays total over the sync tracks.
inline std::vector<FrameScoreStream> fuse_streams(const std::vector<FrameScoreStream>& sync,
                                                  const std::vector<FrameScoreStream>& assoc,
                                                  const FusionConfig& cfg) {
  std::map<std::pair<std::string, std::string>, const FrameScoreStream*> assoc_by_key;
  for (const auto& s : assoc) assoc_by_key.emplace(std::make_pair(s.clip_id, s.track_id), &s);
  std::vector<FrameScoreStream> out;
  out.reserve(sync.size());
  for (const auto& s : sync) {
    auto it = assoc_by_key.find(std::make_pair(s.clip_id, s.track_id));
    if (it != assoc_by_key.end()) {
      out.push_back(fuse(s, *it->second, cfg));
    } else {
      FrameScoreStream zero;
      zero.clip_id = s.clip_id;
      zero.track_id = s.track_id;
      zero.scores.assign(s.scores.size(), 0.0);
      out.push_back(fuse(s, zero, cfg));
    }
  }
  return out;
}

struct AlphaSweepEntry {
  double alpha = 0.0;
  double score = 0.0;
};

struct AlphaSweepResult {
  std::vector<AlphaSweepEntry> table;
  double best_alpha = 0.0;
  double best_score = 0.0;
};

inline std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 20; ++i) g.push_back(static_cast<double>(i) * 0.05);
  g.back() = 1.0;
  return g;
}

// Evaluates the ensemble metric over a grid of mixing coefficients.
// Ties break toward the smaller alpha.
inline AlphaSweepResult sweep_alpha(const std::vector<SpeakingLabel>& labels,
                                    const std::vector<FrameScoreStream>& sync,
                                    const std::vector<FrameScoreStream>& assoc,
                                    const std::vector<double>& grid, MetricKind metric) {
  if (grid.empty()) throw InvalidConfig("alpha grid must not be empty");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  AlphaSweepResult r;
  bool first = true;
  for (double alpha : sorted) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidConfig("alpha grid values must lie in [0,1]");
    const auto fused = fuse_streams(sync, assoc, FusionConfig{alpha});
    const EvalReport rep = evaluate(fused, labels);
    const double score = metric == MetricKind::Map ? rep.map : rep.binary;
    r.table.push_back(AlphaSweepEntry{alpha, score});
    if (first || score > r.best_score) {
      r.best_alpha = alpha;
      r.best_score = score;
      first = false;
    }
  }
  return r;
}

}  // namespace asdkit
