// Copyright 2026 AudioLog Authors
// Scene-classification accuracy and segment-based detection error rate / F1.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "audiolog/error.hpp"
#include "audiolog/table.hpp"

namespace audiolog {

struct SegmentCounts {
  int64_t N = 0;   // reference-active (segment, class) pairs
  int64_t TP = 0;
  int64_t FP = 0;
  int64_t FN = 0;
  int64_t S = 0;   // substitutions: per-segment min(FN, FP)
  int64_t D = 0;   // deletions: per-segment FN - S
  int64_t I = 0;   // insertions: per-segment FP - S

  void accumulate(const SegmentCounts& o) {
    N += o.N;
    TP += o.TP;
    FP += o.FP;
    FN += o.FN;
    S += o.S;
    D += o.D;
    I += o.I;
  }
};

struct SedMetrics {
  double er = 0.0;
  double f1 = 0.0;
  SegmentCounts counts;
};

// Fraction of exact matches between predicted and reference scene labels.
inline double accuracy(const std::vector<std::string>& predicted,
                       const std::vector<std::string>& reference) {
  if (predicted.empty() || reference.empty())
    throw EmptyInput("accuracy: empty label list");
  if (predicted.size() != reference.size())
    throw LengthMismatch("accuracy: " + std::to_string(predicted.size()) +
                         " predictions vs " + std::to_string(reference.size()) +
                         " references");
  size_t hits = 0;
  for (size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == reference[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

namespace metrics_detail {

// Per-class activity painted on 1-second cells. Rows already carry integer
// spans, so a class is active in segment s when some row covers [s, s+1).
inline std::vector<uint8_t> activity_grid(const EventTable& table,
                                          const std::map<std::string, int>& cls,
                                          int64_t n_segments) {
  std::vector<uint8_t> grid(
      static_cast<size_t>(n_segments) * cls.size(), 0);
  for (const auto& r : table.rows) {
    const int c = cls.at(r.event);
    for (int64_t s = r.start_s; s < r.end_s && s < n_segments; ++s)
      grid[static_cast<size_t>(s) * cls.size() + c] = 1;
  }
  return grid;
}

}  // namespace metrics_detail

// Per-segment counts at fixed 1-second segments, without the empty-reference
// guard (used directly when aggregating over a dataset). Per segment:
// S = min(FN, FP), D = FN - S, I = FP - S.
// When `vocabulary` is given, any table label outside it is an error.
inline SegmentCounts segment_counts(
    const EventTable& reference, const EventTable& estimate, double horizon_s,
    const std::vector<std::string>* vocabulary = nullptr) {
  for (const EventTable* t : {&reference, &estimate})
    for (const auto& r : t->rows) {
      if (r.end_s <= r.start_s)
        throw MalformedRow("segment_er_f1: row with non-positive span");
      if (static_cast<double>(r.end_s) > horizon_s + 1e-9)
        throw ConfigError("segment_er_f1: row ends at " +
                          std::to_string(r.end_s) + "s beyond horizon " +
                          std::to_string(horizon_s) + "s");
    }

  std::map<std::string, int> cls;
  if (vocabulary != nullptr) {
    for (const auto& label : *vocabulary)
      cls.emplace(label, static_cast<int>(cls.size()));
    for (const EventTable* t : {&reference, &estimate})
      for (const auto& r : t->rows)
        if (cls.find(r.event) == cls.end())
          throw VocabularyMismatch("segment_er_f1: label '" + r.event +
                                   "' not in vocabulary");
  } else {
    for (const EventTable* t : {&reference, &estimate})
      for (const auto& r : t->rows)
        cls.emplace(r.event, 0);
    int next = 0;
    for (auto& [label, id] : cls) id = next++;
  }

  const auto n_segments = static_cast<int64_t>(std::ceil(horizon_s - 1e-9));
  const size_t k = cls.size();
  SegmentCounts counts;
  if (k == 0) return counts;
  const auto ref = metrics_detail::activity_grid(reference, cls, n_segments);
  const auto est = metrics_detail::activity_grid(estimate, cls, n_segments);

  for (int64_t s = 0; s < n_segments; ++s) {
    int64_t seg_n = 0, seg_tp = 0, seg_fp = 0, seg_fn = 0;
    for (size_t c = 0; c < k; ++c) {
      const bool r = ref[static_cast<size_t>(s) * k + c] != 0;
      const bool e = est[static_cast<size_t>(s) * k + c] != 0;
      seg_n += r ? 1 : 0;
      if (r && e) ++seg_tp;
      if (!r && e) ++seg_fp;
      if (r && !e) ++seg_fn;
    }
    const int64_t seg_s = std::min(seg_fn, seg_fp);
    counts.N += seg_n;
    counts.TP += seg_tp;
    counts.FP += seg_fp;
    counts.FN += seg_fn;
    counts.S += seg_s;
    counts.D += seg_fn - seg_s;
    counts.I += seg_fp - seg_s;
  }
  return counts;
}

// ER = (sum S + sum D + sum I) / sum N, F1 = 2 TP / (2 TP + FP + FN) from
// accumulated counts. ER is undefined without reference activity.
inline SedMetrics metrics_from_counts(const SegmentCounts& counts) {
  if (counts.N == 0)
    throw EmptyReference("segment_er_f1: reference has no active segments");
  SedMetrics out;
  out.counts = counts;
  out.er = static_cast<double>(counts.S + counts.D + counts.I) /
           static_cast<double>(counts.N);
  const int64_t denom = 2 * counts.TP + counts.FP + counts.FN;
  out.f1 = denom == 0 ? 0.0
                      : 2.0 * static_cast<double>(counts.TP) /
                            static_cast<double>(denom);
  return out;
}

// Segment-based SED scoring of one estimate against one reference.
inline SedMetrics segment_er_f1(
    const EventTable& reference, const EventTable& estimate, double horizon_s,
    const std::vector<std::string>* vocabulary = nullptr) {
  if (reference.rows.empty())
    throw EmptyReference("segment_er_f1: empty reference table");
  return metrics_from_counts(
      segment_counts(reference, estimate, horizon_s, vocabulary));
}

}  // namespace audiolog
