#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asdkit/error.hpp"
#include "asdkit/fusion.hpp"
#include "asdkit/metrics.hpp"
#include "asdkit/strata.hpp"

namespace asdkit {

namespace detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// sync / fva / ens first, anything else after, alphabetically.
inline std::vector<std::string> method_order(const std::map<std::string, double>& methods) {
  std::vector<std::string> out;
  for (const char* preferred : {"sync", "fva", "ens"})
    if (methods.count(preferred)) out.push_back(preferred);
  for (const auto& [name, ap] : methods) {
    (void)ap;
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  return out;
}

}  // namespace detail

// Percentages go to CSV with one decimal; JSON keeps full precision.
inline std::string format_pct(double fraction) { return detail::fmt("%.1f", 100.0 * fraction); }

// ---------------------------------------------------------------------------
// Evaluation report JSON

inline nlohmann::ordered_json eval_report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["n_detections"] = r.n_detections;
  j["n_positives"] = r.n_positives;
  j["map"] = r.map;
  j["binary_ap"] = r.binary;
  j["pr"]["thresholds"] = r.pr.thresholds;
  j["pr"]["precision"] = r.pr.precision;
  j["pr"]["recall"] = r.pr.recall;
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.n_detections = j.at("n_detections").get<std::int64_t>();
  r.n_positives = j.at("n_positives").get<std::int64_t>();
  r.map = j.at("map").get<double>();
  r.binary = j.at("binary_ap").get<double>();
  r.pr.thresholds = j.at("pr").at("thresholds").get<std::vector<double>>();
  r.pr.precision = j.at("pr").at("precision").get<std::vector<double>>();
  r.pr.recall = j.at("pr").at("recall").get<std::vector<double>>();
  return r;
}

inline void write_eval_report(const std::filesystem::path& path, const EvalReport& r) {
  detail::write_text(path, eval_report_to_json(r).dump() + "\n");
}

inline EvalReport load_eval_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return eval_report_from_json(j);
}

// ---------------------------------------------------------------------------
// Summary table (model / ensemble / mAP [%])

struct SummaryEntry {
  std::string model;
  bool ensemble = false;
  std::optional<double> alpha;
  double map = 0.0;  // fraction in [0,1]
};

inline std::string summary_csv(const std::vector<SummaryEntry>& entries) {
  std::string out = "model,ensemble,alpha,map_pct\n";
  for (const auto& e : entries) {
    out += e.model;
    out += e.ensemble ? ",1," : ",0,";
    if (e.alpha) out += detail::fmt("%g", *e.alpha);
    out += "," + format_pct(e.map) + "\n";
  }
  return out;
}

inline void write_summary_csv(const std::filesystem::path& path,
                              const std::vector<SummaryEntry>& entries) {
  detail::write_text(path, summary_csv(entries));
}

inline nlohmann::ordered_json summary_to_json(const std::vector<SummaryEntry>& entries) {
  nlohmann::ordered_json j;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json item;
    item["model"] = e.model;
    item["ensemble"] = e.ensemble;
    if (e.alpha)
      item["alpha"] = *e.alpha;
    else
      item["alpha"] = nullptr;
    item["map"] = e.map;
    item["map_pct"] = format_pct(e.map);
    j["entries"].push_back(item);
  }
  return j;
}

inline std::vector<SummaryEntry> summary_from_json(const nlohmann::json& j) {
  std::vector<SummaryEntry> out;
  for (const auto& item : j.at("entries")) {
    SummaryEntry e;
    e.model = item.at("model").get<std::string>();
    e.ensemble = item.at("ensemble").get<bool>();
    if (!item.at("alpha").is_null()) e.alpha = item.at("alpha").get<double>();
    e.map = item.at("map").get<double>();
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Strata and masking tables

inline std::string strata_csv(const std::vector<QualityStratum>& strata) {
  std::string out = "bin_index,quality_lo,quality_hi,method,ap\n";
  for (const auto& s : strata) {
    for (const auto& method : detail::method_order(s.ap_per_method)) {
      out += std::to_string(s.bin_index);
      out += "," + detail::fmt("%.6f", s.quality_lo);
      out += "," + detail::fmt("%.6f", s.quality_hi);
      out += "," + method;
      out += "," + detail::fmt("%.6f", s.ap_per_method.at(method)) + "\n";
    }
  }
  return out;
}

inline void write_strata_csv(const std::filesystem::path& path,
                             const std::vector<QualityStratum>& strata) {
  detail::write_text(path, strata_csv(strata));
}

inline std::string masking_csv(const std::vector<MaskingSummaryRow>& rows) {
  // Deterministic row order: p_mask ascending, then sync / fva / ens.
  std::map<std::string, double> names;
  for (const auto& r : rows) names[r.method] = 0.0;
  const auto order = detail::method_order(names);
  auto rank = [&order](const std::string& m) {
    return std::find(order.begin(), order.end(), m) - order.begin();
  };
  std::vector<MaskingSummaryRow> sorted = rows;
  std::sort(sorted.begin(), sorted.end(),
            [&](const MaskingSummaryRow& a, const MaskingSummaryRow& b) {
              if (a.p_mask != b.p_mask) return a.p_mask < b.p_mask;
              return rank(a.method) < rank(b.method);
            });
  std::string out = "p_mask,method,ap_mean,ap_std\n";
  for (const auto& r : sorted) {
    out += detail::fmt("%.2f", r.p_mask);
    out += "," + r.method;
    out += "," + detail::fmt("%.6f", r.ap_mean);
    out += "," + detail::fmt("%.6f", r.ap_std) + "\n";
  }
  return out;
}

inline void write_masking_csv(const std::filesystem::path& path,
                              const std::vector<MaskingSummaryRow>& rows) {
  detail::write_text(path, masking_csv(rows));
}

// ---------------------------------------------------------------------------
// Alpha sweep artifacts

inline nlohmann::ordered_json sweep_to_json(const AlphaSweepResult& r, const std::string& metric) {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["grid"] = nlohmann::ordered_json::array();
  for (const auto& e : r.table) {
    nlohmann::ordered_json item;
    item["alpha"] = e.alpha;
    item["score"] = e.score;
    j["grid"].push_back(item);
  }
  j["best_alpha"] = r.best_alpha;
  j["best_score"] = r.best_score;
  return j;
}

inline std::string sweep_csv(const AlphaSweepResult& r) {
  std::string out = "alpha,score\n";
  for (const auto& e : r.table)
    out += detail::fmt("%g", e.alpha) + "," + detail::fmt("%.6f", e.score) + "\n";
  return out;
}

}  // namespace asdkit
