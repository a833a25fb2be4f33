#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "asdkit/datamodel.hpp"
#include "asdkit/error.hpp"

namespace asdkit {

// One scored (track, frame) candidate. Localization is exact because tracks
// are ground truth, so AP reduces to ranking quality.
struct Detection {
  double score = 0.0;
  bool is_positive = false;
};

struct PRCurve {
  std::vector<double> thresholds;  // distinct scores, descending
  std::vector<double> precision;
  std::vector<double> recall;  // nondecreasing
};

namespace detail {

// Cumulative true/false positive counts per distinct-score group, scores
// descending. Equal scores share one threshold, so input order of tied
// detections can never change the result.
struct ThresholdGroups {
  std::vector<double> threshold;
  std::vector<std::int64_t> tp;  // cumulative
  std::vector<std::int64_t> fp;  // cumulative
};

inline ThresholdGroups group_by_threshold(std::vector<Detection> dets) {
  for (const auto& d : dets)
    if (!std::isfinite(d.score)) throw ValidationError("detection score is not finite");
  std::sort(dets.begin(), dets.end(),
            [](const Detection& a, const Detection& b) { return a.score > b.score; });
  ThresholdGroups g;
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < dets.size()) {
    const double s = dets[i].score;
    while (i < dets.size() && dets[i].score == s) {
      if (dets[i].is_positive)
        ++tp;
      else
        ++fp;
      ++i;
    }
    g.threshold.push_back(s);
    g.tp.push_back(tp);
    g.fp.push_back(fp);
  }
  return g;
}

}  // namespace detail

inline PRCurve pr_curve(const std::vector<Detection>& dets, std::int64_t n_positives) {
  if (n_positives < 1) throw NoPositives("precision/recall needs at least one positive");
  const auto g = detail::group_by_threshold(dets);
  PRCurve c;
  for (std::size_t k = 0; k < g.threshold.size(); ++k) {
    c.thresholds.push_back(g.threshold[k]);
    c.precision.push_back(static_cast<double>(g.tp[k]) /
                          static_cast<double>(g.tp[k] + g.fp[k]));
    c.recall.push_back(static_cast<double>(g.tp[k]) / static_cast<double>(n_positives));
  }
  return c;
}

// VOC2012-style AP: area under the monotone precision envelope. Integrated
// per threshold group with integer positive counts, so a perfect ranking is
// exactly 1.0.
inline double voc2012_ap(const std::vector<Detection>& dets, std::int64_t n_positives) {
  if (n_positives < 1) throw NoPositives("AP is undefined without positives");
  const auto g = detail::group_by_threshold(dets);
  const std::size_t n = g.threshold.size();
  std::vector<double> envelope(n, 0.0);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double p = static_cast<double>(g.tp[k]) / static_cast<double>(g.tp[k] + g.fp[k]);
    running = std::max(running, p);
    envelope[k] = running;
  }
  double weighted = 0.0;  // sum of (delta tp) * envelope precision
  std::int64_t prev_tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    weighted += static_cast<double>(g.tp[k] - prev_tp) * envelope[k];
    prev_tp = g.tp[k];
  }
  return weighted / static_cast<double>(n_positives);
}

// Step-sum average precision over distinct-score thresholds, no
// interpolation: AP = sum_n (R_n - R_{n-1}) * P_n.
inline double binary_ap(const std::vector<Detection>& dets, std::int64_t n_positives) {
  if (n_positives < 1) throw NoPositives("AP is undefined without positives");
  const auto g = detail::group_by_threshold(dets);
  double weighted = 0.0;
  std::int64_t prev_tp = 0;
  for (std::size_t k = 0; k < g.threshold.size(); ++k) {
    const double p = static_cast<double>(g.tp[k]) / static_cast<double>(g.tp[k] + g.fp[k]);
    weighted += static_cast<double>(g.tp[k] - prev_tp) * p;
    prev_tp = g.tp[k];
  }
  return weighted / static_cast<double>(n_positives);
}

struct EvalReport {
  std::int64_t n_detections = 0;
  std::int64_t n_positives = 0;
  double map = 0.0;        // single "speaking" class, so mAP == AP
  double binary = 0.0;
  PRCurve pr;
};

// Pools every (track, frame) across clips into one detection list, in
// deterministic (clip_id, track_id, frame) order, and scores it against the
// ground-truth labels.
inline EvalReport evaluate(const std::vector<FrameScoreStream>& streams,
                           const std::vector<SpeakingLabel>& labels) {
  std::map<std::pair<std::string, std::string>, const SpeakingLabel*> label_by_key;
  for (const auto& l : labels) label_by_key.emplace(std::make_pair(l.clip_id, l.track_id), &l);

  std::vector<const FrameScoreStream*> ordered;
  ordered.reserve(streams.size());
  for (const auto& s : streams) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const FrameScoreStream* a, const FrameScoreStream* b) {
              return std::tie(a->clip_id, a->track_id) < std::tie(b->clip_id, b->track_id);
            });

  std::vector<Detection> dets;
  std::int64_t n_pos = 0;
  for (const FrameScoreStream* s : ordered) {
    auto it = label_by_key.find(std::make_pair(s->clip_id, s->track_id));
    if (it == label_by_key.end())
      throw MissingLabels("no label for track " + s->clip_id + "/" + s->track_id);
    const SpeakingLabel& l = *it->second;
    if (l.active.size() != s->scores.size())
      throw LengthMismatch("track " + s->clip_id + "/" + s->track_id + ": " +
                           std::to_string(s->scores.size()) + " scores vs " +
                           std::to_string(l.active.size()) + " label frames");
    for (std::size_t f = 0; f < s->scores.size(); ++f) {
      const bool pos = l.active[f] != 0;
      dets.push_back(Detection{s->scores[f], pos});
      if (pos) ++n_pos;
    }
  }
  if (n_pos < 1) throw NoPositives("evaluation set contains no positive frames");

  EvalReport r;
  r.n_detections = static_cast<std::int64_t>(dets.size());
  r.n_positives = n_pos;
  r.map = voc2012_ap(dets, n_pos);
  r.binary = binary_ap(dets, n_pos);
  r.pr = pr_curve(dets, n_pos);
  return r;
}

}  // namespace asdkit
