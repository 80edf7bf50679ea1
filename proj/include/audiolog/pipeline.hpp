// Copyright 2026 AudioLog Authors
// Long-audio inference: segmentation, per-second post-processing and
// assembly of the timestamped scene/event table.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "audiolog/error.hpp"
#include "audiolog/features.hpp"
#include "audiolog/table.hpp"
#include "audiolog/tensor.hpp"

namespace audiolog {

struct PostprocessConfig {
  double threshold = 0.5;       // strict >, probabilities at the cutoff stay off
  int median_window = 7;        // frames, odd
  int segment_len_s = 10;
  int segment_hop_s = 10;
  int scene_majority_width = 1; // optional majority filter over segments; 1 = off
  static constexpr int kResolutionS = 1;  // table resolution is fixed at 1 s

  void validate() const {
    if (threshold <= 0.0 || threshold >= 1.0)
      throw ConfigError("postprocess: threshold must be in (0, 1)");
    if (median_window < 1 || median_window % 2 == 0)
      throw ConfigError("postprocess: median_window must be odd");
    if (segment_len_s < 1) throw ConfigError("postprocess: segment_len_s >= 1");
    if (segment_hop_s < 1) throw ConfigError("postprocess: segment_hop_s >= 1");
    if (scene_majority_width < 1 || scene_majority_width % 2 == 0)
      throw ConfigError("postprocess: scene_majority_width must be odd");
  }
};

struct AudioSegment {
  AudioClip clip;        // zero-padded to segment_len_s
  double start_s = 0.0;
  double true_len_s = 0.0;  // audio actually present (last segment may be short)
};

// Contiguous segments starting at multiples of the hop. With hop = length the
// spans tile the clip exactly once; the final segment is zero-padded and its
// true length recorded.
inline std::vector<AudioSegment> segment_long_audio(
    const AudioClip& clip, const PostprocessConfig& cfg) {
  cfg.validate();
  if (clip.samples.empty()) throw EmptyClip("segment_long_audio: empty clip");
  const auto rate = static_cast<int64_t>(clip.sample_rate);
  const int64_t seg_samples = rate * cfg.segment_len_s;
  const int64_t hop_samples = rate * cfg.segment_hop_s;
  const auto total = static_cast<int64_t>(clip.samples.size());

  std::vector<AudioSegment> out;
  for (int64_t start = 0; start < total; start += hop_samples) {
    AudioSegment seg;
    seg.start_s = static_cast<double>(start) / static_cast<double>(rate);
    const int64_t avail = std::min(seg_samples, total - start);
    seg.true_len_s = static_cast<double>(avail) / static_cast<double>(rate);
    seg.clip.sample_rate = clip.sample_rate;
    seg.clip.samples.assign(static_cast<size_t>(seg_samples), 0.0);
    std::copy(clip.samples.begin() + start, clip.samples.begin() + start + avail,
              seg.clip.samples.begin());
    out.push_back(std::move(seg));
  }
  return out;
}

// Seconds x classes boolean activity.
struct ActivityGrid {
  int64_t seconds = 0;
  int64_t classes = 0;
  std::vector<uint8_t> active;  // row-major [seconds, classes]

  bool at(int64_t s, int64_t c) const {
    return active[static_cast<size_t>(s * classes + c)] != 0;
  }
  void set(int64_t s, int64_t c, bool v) {
    active[static_cast<size_t>(s * classes + c)] = v ? 1 : 0;
  }
  static ActivityGrid zeros(int64_t seconds, int64_t classes) {
    ActivityGrid g;
    g.seconds = seconds;
    g.classes = classes;
    g.active.assign(static_cast<size_t>(seconds * classes), 0);
    return g;
  }
};

namespace pipeline_detail {

// Median over the window [i-r, i+r] clipped to the sequence; the upper median
// (sorted[n/2]) is taken when the clipped window has even length.
inline double window_median(const double* x, int64_t n, int64_t i, int r) {
  const int64_t lo = std::max<int64_t>(0, i - r);
  const int64_t hi = std::min(n - 1, i + r);
  std::vector<double> w(x + lo, x + hi + 1);
  const size_t mid = w.size() / 2;
  std::nth_element(w.begin(), w.begin() + mid, w.end());
  return w[mid];
}

inline int64_t frames_before(double seconds, double frame_rate) {
  return static_cast<int64_t>(std::ceil(seconds * frame_rate - 1e-9));
}

}  // namespace pipeline_detail

// Framewise probabilities -> per-second activity: per-class median filter,
// strict threshold, then per-second pooling (active when more than half of
// the second's frames are active).
inline ActivityGrid binarize_and_smooth(const nn::Tensor& sed_probs,
                                        double frame_rate, int64_t true_frames,
                                        const PostprocessConfig& cfg) {
  cfg.validate();
  if (sed_probs.rank() != 2)
    throw ShapeMismatch("binarize_and_smooth: expected [frames, classes]");
  if (frame_rate <= 0)
    throw ConfigError("binarize_and_smooth: frame rate must be positive");
  const int64_t frames = std::min<int64_t>(true_frames, sed_probs.shape[0]);
  const int64_t k = sed_probs.shape[1];
  const auto seconds = static_cast<int64_t>(
      std::ceil(static_cast<double>(frames) / frame_rate - 1e-9));

  ActivityGrid grid = ActivityGrid::zeros(seconds, k);
  const int r = cfg.median_window / 2;
  std::vector<double> column(static_cast<size_t>(frames));
  std::vector<uint8_t> hard(static_cast<size_t>(frames));
  for (int64_t c = 0; c < k; ++c) {
    for (int64_t t = 0; t < frames; ++t) column[t] = sed_probs.at2(t, c);
    for (int64_t t = 0; t < frames; ++t)
      hard[t] = pipeline_detail::window_median(column.data(), frames, t, r) >
                        cfg.threshold
                    ? 1
                    : 0;
    for (int64_t s = 0; s < seconds; ++s) {
      const int64_t f0 = pipeline_detail::frames_before(
          static_cast<double>(s), frame_rate);
      const int64_t f1 = std::min(
          frames,
          pipeline_detail::frames_before(static_cast<double>(s + 1), frame_rate));
      int64_t on = 0;
      for (int64_t f = f0; f < f1; ++f) on += hard[f];
      grid.set(s, c, 2 * on > (f1 - f0));  // strictly more than half
    }
  }
  return grid;
}

struct SegmentScenePrediction {
  double start_s = 0.0;
  double true_len_s = 0.0;
  nn::Tensor scene_logits;  // [K_s]
};

// Each second takes the argmax scene of its covering segment (the earliest
// covering segment when hops overlap); ties break toward the lowest class
// index. An optional majority filter smooths the per-segment labels first.
inline std::vector<int> scene_per_second(
    const std::vector<SegmentScenePrediction>& segments, int64_t horizon_s,
    const PostprocessConfig& cfg) {
  cfg.validate();
  std::vector<int> seg_label(segments.size());
  for (size_t i = 0; i < segments.size(); ++i) {
    const auto& logits = segments[i].scene_logits;
    if (logits.numel() == 0)
      throw ShapeMismatch("scene_per_second: segment without logits");
    int best = 0;
    for (int64_t c = 1; c < logits.numel(); ++c)
      if (logits[c] > logits[best]) best = static_cast<int>(c);
    seg_label[i] = best;
  }

  if (cfg.scene_majority_width > 1 && segments.size() > 1) {
    const int r = cfg.scene_majority_width / 2;
    std::vector<int> smoothed(seg_label.size());
    for (size_t i = 0; i < seg_label.size(); ++i) {
      const size_t lo = i >= static_cast<size_t>(r) ? i - r : 0;
      const size_t hi = std::min(seg_label.size() - 1, i + r);
      std::map<int, int> votes;
      for (size_t j = lo; j <= hi; ++j) ++votes[seg_label[j]];
      int best = seg_label[i], best_votes = 0;
      for (const auto& [label, v] : votes)
        if (v > best_votes) {  // map order means ties go to the lowest index
          best = label;
          best_votes = v;
        }
      smoothed[i] = best;
    }
    seg_label = smoothed;
  }

  std::vector<int> out(static_cast<size_t>(horizon_s), -1);
  for (int64_t s = 0; s < horizon_s; ++s) {
    for (size_t i = 0; i < segments.size(); ++i) {
      const double lo = segments[i].start_s;
      const double hi = lo + segments[i].true_len_s;
      if (static_cast<double>(s) >= lo - 1e-9 &&
          static_cast<double>(s) < hi - 1e-9) {
        out[s] = seg_label[i];
        break;
      }
    }
    if (out[s] < 0)
      throw CoverageGap("scene_per_second: second " + std::to_string(s) +
                        " not covered by any segment");
  }
  return out;
}

// One row per (second, active event) carrying that second's scene; silent
// seconds emit nothing; rows come out sorted.
inline EventTable assemble_table(const std::vector<int>& scene_ids,
                                 const ActivityGrid& activity,
                                 const std::vector<std::string>& scene_labels,
                                 const std::vector<std::string>& event_labels,
                                 double duration_s) {
  if (static_cast<int64_t>(scene_ids.size()) < activity.seconds)
    throw LengthMismatch("assemble_table: scene horizon shorter than activity");
  if (activity.classes != static_cast<int64_t>(event_labels.size()))
    throw VocabularyMismatch("assemble_table: activity classes " +
                             std::to_string(activity.classes) +
                             " != event vocabulary " +
                             std::to_string(event_labels.size()));
  EventTable table;
  table.duration_s = duration_s;
  for (int64_t s = 0; s < activity.seconds; ++s) {
    for (int64_t c = 0; c < activity.classes; ++c) {
      if (!activity.at(s, c)) continue;
      const int scene = scene_ids[static_cast<size_t>(s)];
      if (scene < 0 || scene >= static_cast<int>(scene_labels.size()))
        throw VocabularyMismatch("assemble_table: scene id out of range");
      EventRow row;
      row.start_s = s;
      row.end_s = s + 1;
      row.scene = scene_labels[static_cast<size_t>(scene)];
      row.event = event_labels[static_cast<size_t>(c)];
      table.rows.push_back(std::move(row));
    }
  }
  sort_rows(table);
  return table;
}

// Fuses rows with identical (scene, event) whose spans touch or overlap, so
// no two remaining rows of the same kind intersect. Idempotent; gapped rows
// stay apart.
inline EventTable merge_contiguous(const EventTable& table) {
  EventTable out;
  out.duration_s = table.duration_s;
  std::vector<EventRow> rows = table.rows;
  std::stable_sort(rows.begin(), rows.end(),
                   [](const EventRow& a, const EventRow& b) {
                     if (a.event != b.event) return a.event < b.event;
                     if (a.scene != b.scene) return a.scene < b.scene;
                     return a.start_s < b.start_s;
                   });
  for (const auto& r : rows) {
    if (!out.rows.empty()) {
      EventRow& last = out.rows.back();
      if (last.event == r.event && last.scene == r.scene &&
          last.end_s >= r.start_s) {
        last.end_s = std::max(last.end_s, r.end_s);
        continue;
      }
    }
    out.rows.push_back(r);
  }
  sort_rows(out);
  return out;
}

}  // namespace audiolog
