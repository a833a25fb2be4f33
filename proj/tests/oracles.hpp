#pragma once

#include <algorithm>
#include <set>
#include <vector>

#include "asdkit/metrics.hpp"

// Test-side brute-force oracles. Kept deliberately naive and independent of
// the library implementation: O(n^2) threshold enumeration with P/R computed
// from scratch at every distinct score.

namespace oracles {

struct PRPoint {
  double precision;
  double recall;
};

inline std::vector<PRPoint> pr_points(const std::vector<asdkit::Detection>& dets,
                                      std::int64_t n_positives) {
  std::set<double, std::greater<double>> thresholds;
  for (const auto& d : dets) thresholds.insert(d.score);
  std::vector<PRPoint> out;
  for (double thr : thresholds) {
    std::int64_t tp = 0, fp = 0;
    for (const auto& d : dets) {
      if (d.score >= thr) {
        if (d.is_positive)
          ++tp;
        else
          ++fp;
      }
    }
    out.push_back(PRPoint{static_cast<double>(tp) / static_cast<double>(tp + fp),
                          static_cast<double>(tp) / static_cast<double>(n_positives)});
  }
  return out;
}

// Area under the monotone precision envelope.
inline double voc2012_ap(const std::vector<asdkit::Detection>& dets, std::int64_t n_positives) {
  const auto pts = pr_points(dets, n_positives);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    double envelope = 0.0;
    for (std::size_t j = k; j < pts.size(); ++j) envelope = std::max(envelope, pts[j].precision);
    ap += (pts[k].recall - prev_recall) * envelope;
    prev_recall = pts[k].recall;
  }
  return ap;
}

// Step sum with no interpolation.
inline double binary_ap(const std::vector<asdkit::Detection>& dets, std::int64_t n_positives) {
  const auto pts = pr_points(dets, n_positives);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const auto& pt : pts) {
    ap += (pt.recall - prev_recall) * pt.precision;
    prev_recall = pt.recall;
  }
  return ap;
}

inline bool perfect_ranking(const std::vector<asdkit::Detection>& dets) {
  double min_pos = 2.0, max_neg = -1.0;
  for (const auto& d : dets) {
    if (d.is_positive)
      min_pos = std::min(min_pos, d.score);
    else
      max_neg = std::max(max_neg, d.score);
  }
  return min_pos > max_neg;
}

}  // namespace oracles
