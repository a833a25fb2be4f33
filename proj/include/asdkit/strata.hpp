#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "asdkit/align.hpp"
#include "asdkit/datamodel.hpp"
#include "asdkit/error.hpp"
#include "asdkit/fusion.hpp"
#include "asdkit/fva.hpp"
#include "asdkit/metrics.hpp"
#include "asdkit/parallel.hpp"
#include "asdkit/rng.hpp"
#include "asdkit/simgen.hpp"

namespace asdkit {

// Track-level face quality: arithmetic mean of the per-frame scores.
inline double track_quality(const FaceTrack& t) {
  if (!t.quality)
    throw MissingQuality("track " + t.clip_id + "/" + t.track_id + " has no quality scores");
  double sum = 0.0;
  for (double q : *t.quality) sum += q;
  return sum / static_cast<double>(t.quality->size());
}

struct QualityStratum {
  int bin_index = 0;
  std::vector<std::pair<std::string, std::string>> track_keys;  // (clip_id, track_id)
  double quality_lo = 0.0;
  double quality_hi = 0.0;
  std::map<std::string, double> ap_per_method;
};

// Sorts tracks by (mean quality, track id) and splits them into n_bins
// contiguous groups of equal size; the remainder goes to the lowest bins.
// Quality ranges are the min/max of each bin's members, so they may be
// irregular when the quality distribution is skewed.
inline std::vector<QualityStratum> stratify_by_quality(const std::vector<FaceTrack>& tracks,
                                                       int n_bins) {
  if (n_bins < 1) throw InvalidConfig("n_bins must be >= 1");
  if (static_cast<std::size_t>(n_bins) > tracks.size())
    throw TooFewTracks("cannot split " + std::to_string(tracks.size()) + " tracks into " +
                       std::to_string(n_bins) + " bins");
  struct Entry {
    double quality;
    const FaceTrack* track;
  };
  std::vector<Entry> entries;
  entries.reserve(tracks.size());
  for (const auto& t : tracks) entries.push_back(Entry{track_quality(t), &t});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.quality, a.track->clip_id, a.track->track_id) <
           std::tie(b.quality, b.track->clip_id, b.track->track_id);
  });

  const std::size_t n = entries.size();
  const std::size_t base = n / static_cast<std::size_t>(n_bins);
  const std::size_t rem = n % static_cast<std::size_t>(n_bins);
  std::vector<QualityStratum> out;
  std::size_t pos = 0;
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t size = base + (static_cast<std::size_t>(b) < rem ? 1 : 0);
    QualityStratum s;
    s.bin_index = b;
    s.quality_lo = entries[pos].quality;
    s.quality_hi = entries[pos + size - 1].quality;
    for (std::size_t i = pos; i < pos + size; ++i)
      s.track_keys.emplace_back(entries[i].track->clip_id, entries[i].track->track_id);
    pos += size;
    out.push_back(std::move(s));
  }
  return out;
}

// Computes per-stratum AP for each named method's stream set. The
// stratified analyses use the binary-classification AP by default.
inline void fill_stratum_aps(std::vector<QualityStratum>& strata,
                             const std::map<std::string, std::vector<FrameScoreStream>>& methods,
                             const std::vector<SpeakingLabel>& labels,
                             MetricKind metric = MetricKind::BinaryAp) {
  for (auto& stratum : strata) {
    std::set<std::pair<std::string, std::string>> keys(stratum.track_keys.begin(),
                                                       stratum.track_keys.end());
    std::vector<SpeakingLabel> stratum_labels;
    for (const auto& l : labels)
      if (keys.count(std::make_pair(l.clip_id, l.track_id))) stratum_labels.push_back(l);
    for (const auto& [name, streams] : methods) {
      std::vector<FrameScoreStream> subset;
      for (const auto& s : streams)
        if (keys.count(std::make_pair(s.clip_id, s.track_id))) subset.push_back(s);
      const EvalReport r = evaluate(subset, stratum_labels);
      stratum.ap_per_method[name] = metric == MetricKind::Map ? r.map : r.binary;
    }
  }
}

// ---------------------------------------------------------------------------
// Randomised utterance masking (audio degradation study)

struct MaskingConfig {
  std::vector<double> p_grid;
  int trials_per_point = 10;
  std::uint64_t seed = 0;
  double alpha = 0.5;                           // ensemble coefficient, tuned upstream
  DegradeMode degrade_mode = DegradeMode::Silence;
  double degrade_strength = 0.5;
};

struct MaskingTrial {
  double p_mask = 0.0;
  int trial_index = 0;
  std::uint64_t rng_seed = 0;
  std::vector<std::string> masked_utt_ids;
  std::map<std::string, double> ap_per_method;  // sync, fva, ens
};

struct MaskingSummaryRow {
  double p_mask = 0.0;
  std::string method;
  double ap_mean = 0.0;
  double ap_std = 0.0;
};

// Runs the masking sweep. Each trial deletes every utterance independently
// with probability p_mask (a diarisation front-end miss), re-projects the
// surviving matches, degrades the sync streams on the masked regions, and
// evaluates sync / fva / ensemble with binary AP.
//
// Trial generators derive from (seed, trial_index) only, so the same trial
// index shares its uniforms across the whole grid: masked sets are nested as
// p_mask grows, and results are independent of scheduling.
inline std::vector<MaskingTrial> masking_experiment(const Bundle& bundle,
                                                    const HeadParams& params,
                                                    const std::vector<FrameScoreStream>& sync,
                                                    const MaskingConfig& cfg,
                                                    unsigned threads = 1) {
  if (cfg.p_grid.empty()) throw InvalidConfig("p_mask grid must not be empty");
  for (double p : cfg.p_grid)
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidConfig("p_mask values must lie in [0,1]");
  if (cfg.trials_per_point < 1) throw InvalidConfig("trials_per_point must be >= 1");

  // Match probabilities do not depend on which other utterances survive the
  // front end, so the full score set is computed once and filtered per trial.
  const std::vector<Match> all_matches = score_all_clips(params, bundle, threads);

  std::vector<const Utterance*> utts;
  for (const auto& u : bundle.utterances) utts.push_back(&u);
  std::sort(utts.begin(), utts.end(),
            [](const Utterance* a, const Utterance* b) { return a->utt_id < b->utt_id; });

  std::map<std::string, double> fps_by_clip;
  for (const auto& c : bundle.clips) fps_by_clip.emplace(c.clip_id, c.video_fps);

  struct Job {
    double p_mask;
    int trial;
  };
  std::vector<Job> jobs;
  for (double p : cfg.p_grid)
    for (int t = 0; t < cfg.trials_per_point; ++t) jobs.push_back(Job{p, t});

  std::vector<MaskingTrial> out(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    MaskingTrial trial;
    trial.p_mask = job.p_mask;
    trial.trial_index = job.trial;
    trial.rng_seed = cfg.seed;
    Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(job.trial));

    std::set<std::string> masked;
    for (const Utterance* u : utts) {
      if (rng.uniform01() < job.p_mask) {
        masked.insert(u->utt_id);
        trial.masked_utt_ids.push_back(u->utt_id);
      }
    }

    std::vector<Match> surviving;
    for (const auto& m : all_matches)
      if (!masked.count(m.utt_id)) surviving.push_back(m);
    const auto fva_streams = project_assoc(surviving, bundle);

    std::vector<MaskedSpan> spans;
    for (const Utterance* u : utts) {
      if (!masked.count(u->utt_id)) continue;
      const auto span = utterance_to_span(*u, fps_by_clip.at(u->clip_id));
      if (span) spans.push_back(MaskedSpan{u->clip_id, *span});
    }
    const auto degraded_sync =
        degrade_sync(sync, bundle.tracks, spans, cfg.degrade_mode, cfg.degrade_strength);
    const auto ens = fuse_streams(degraded_sync, fva_streams, FusionConfig{cfg.alpha});

    trial.ap_per_method["sync"] = evaluate(degraded_sync, bundle.labels).binary;
    trial.ap_per_method["fva"] = evaluate(fva_streams, bundle.labels).binary;
    trial.ap_per_method["ens"] = evaluate(ens, bundle.labels).binary;
    out[j] = std::move(trial);
  });
  return out;
}

inline std::vector<MaskingSummaryRow> summarize_masking(const std::vector<MaskingTrial>& trials) {
  std::map<std::pair<double, std::string>, std::vector<double>> groups;
  for (const auto& t : trials)
    for (const auto& [method, ap] : t.ap_per_method)
      groups[std::make_pair(t.p_mask, method)].push_back(ap);
  std::vector<MaskingSummaryRow> out;
  for (const auto& [key, aps] : groups) {
    MaskingSummaryRow row;
    row.p_mask = key.first;
    row.method = key.second;
    double sum = 0.0;
    for (double a : aps) sum += a;
    row.ap_mean = sum / static_cast<double>(aps.size());
    double ss = 0.0;
    for (double a : aps) ss += (a - row.ap_mean) * (a - row.ap_mean);
    row.ap_std = aps.size() > 1 ? std::sqrt(ss / static_cast<double>(aps.size() - 1)) : 0.0;
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace asdkit
