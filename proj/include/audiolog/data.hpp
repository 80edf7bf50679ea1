// Copyright 2026 AudioLog Authors
// Dataset ingestion (strong-label TSV + scene sidecar) and the synthetic
// dataset generator used for overfit and end-to-end runs.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "audiolog/error.hpp"
#include "audiolog/features.hpp"
#include "audiolog/model.hpp"
#include "audiolog/table.hpp"
#include "audiolog/wav.hpp"

namespace audiolog {

struct EventSpan {
  double onset_s = 0.0;
  double offset_s = 0.0;
  std::string label;
  double confidence = 1.0;  // soft labels pass through untouched
};

struct AnnotatedClip {
  std::string id;  // source filename
  AudioClip clip;
  std::string scene;
  std::vector<EventSpan> events;
};

// Label list; index = line number in the vocabulary file.
struct Vocabulary {
  std::vector<std::string> labels;
  std::map<std::string, int> index;

  static Vocabulary from_labels(std::vector<std::string> names) {
    Vocabulary v;
    v.labels = std::move(names);
    for (size_t i = 0; i < v.labels.size(); ++i)
      v.index[v.labels[i]] = static_cast<int>(i);
    return v;
  }

  static Vocabulary from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw UnreadableFile(path + ": cannot open vocabulary");
    std::vector<std::string> names;
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) names.push_back(line);
    }
    return from_labels(std::move(names));
  }

  void to_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw UnreadableFile(path + ": cannot write vocabulary");
    for (const auto& l : labels) os << l << "\n";
  }

  int lookup(const std::string& label) const {
    auto it = index.find(label);
    if (it == index.end())
      throw UnknownLabel("label '" + label + "' not in vocabulary");
    return it->second;
  }

  int size() const { return static_cast<int>(labels.size()); }
};

namespace data_detail {

inline std::vector<std::string> split_on(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_time(const std::string& field, const std::string& path,
                         int line_no) {
  try {
    size_t pos = 0;
    const double v = std::stod(field, &pos);
    if (pos != field.size() || !std::isfinite(v))
      throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw MalformedRow(path + ":" + std::to_string(line_no) +
                       ": bad numeric field '" + field + "'");
  }
}

}  // namespace data_detail

// Scene sidecar: `filename,scene` per line, no header.
inline std::map<std::string, std::string> load_scene_map(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UnreadableFile(path + ": cannot open scene map");
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = data_detail::split_on(line, ',');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
      throw MalformedRow(path + ":" + std::to_string(line_no) +
                         ": expected 'filename,scene'");
    out[fields[0]] = fields[1];
  }
  return out;
}

// Strong labels: tab-separated `filename onset offset event [confidence]`.
// Every row must validate; nothing is silently dropped.
inline std::vector<AnnotatedClip> load_strong_labels(
    const std::string& annotation_path, const std::string& scene_map_path,
    const std::string& audio_root, const Vocabulary& event_vocab,
    const Vocabulary& scene_vocab, int target_rate) {
  const auto scene_map = load_scene_map(scene_map_path);

  std::ifstream is(annotation_path);
  if (!is) throw UnreadableFile(annotation_path + ": cannot open annotations");

  std::map<std::string, std::vector<EventSpan>> by_file;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = data_detail::split_on(line, '\t');
    if (fields.size() != 4 && fields.size() != 5)
      throw MalformedRow(annotation_path + ":" + std::to_string(line_no) +
                         ": expected 4 or 5 tab-separated fields, got " +
                         std::to_string(fields.size()));
    EventSpan ev;
    ev.onset_s = data_detail::parse_time(fields[1], annotation_path, line_no);
    ev.offset_s = data_detail::parse_time(fields[2], annotation_path, line_no);
    ev.label = fields[3];
    if (fields.size() == 5)
      ev.confidence =
          data_detail::parse_time(fields[4], annotation_path, line_no);
    if (ev.onset_s < 0 || ev.offset_s <= ev.onset_s)
      throw MalformedRow(annotation_path + ":" + std::to_string(line_no) +
                         ": offset must exceed onset");
    if (ev.confidence < 0.0 || ev.confidence > 1.0)
      throw MalformedRow(annotation_path + ":" + std::to_string(line_no) +
                         ": confidence outside [0, 1]");
    event_vocab.lookup(ev.label);  // throws UnknownLabel
    by_file[fields[0]].push_back(std::move(ev));
  }

  // scene-only clips (no events) are legal; every mapped file becomes a clip
  std::vector<AnnotatedClip> clips;
  for (const auto& [filename, scene] : scene_map) {
    scene_vocab.lookup(scene);
    AnnotatedClip ac;
    ac.id = filename;
    ac.scene = scene;
    const std::filesystem::path audio_path =
        std::filesystem::path(audio_root) / filename;
    if (!std::filesystem::exists(audio_path))
      throw MissingAudio(audio_path.string() + ": audio file not found");
    ac.clip = load_audio(audio_path.string(), target_rate);
    auto it = by_file.find(filename);
    if (it != by_file.end()) {
      for (const auto& ev : it->second)
        if (ev.offset_s > ac.clip.duration_s() + 1e-6)
          throw MalformedRow(filename + ": event ends after clip end");
      ac.events = it->second;
      by_file.erase(it);
    }
    clips.push_back(std::move(ac));
  }
  if (!by_file.empty())
    throw MalformedRow("annotations reference '" + by_file.begin()->first +
                       "' which has no scene map entry");
  return clips;
}

// Framewise targets: confidences painted over [onset, offset) (frame f is
// active when onset <= f / frame_rate < offset); overlapping same-class
// spans combine with max.
inline Targets targets_from_annotations(const AnnotatedClip& clip,
                                        double frame_rate,
                                        const Vocabulary& event_vocab,
                                        const Vocabulary& scene_vocab,
                                        int64_t n_frames = 0) {
  if (n_frames <= 0)
    n_frames = static_cast<int64_t>(
        std::ceil(clip.clip.duration_s() * frame_rate - 1e-9));
  Targets tgt;
  tgt.sed = nn::Tensor({n_frames, event_vocab.size()});
  for (const auto& ev : clip.events) {
    const int c = event_vocab.lookup(ev.label);
    const auto f0 = static_cast<int64_t>(
        std::ceil(ev.onset_s * frame_rate - 1e-9));
    const auto f1 = std::min(
        n_frames,
        static_cast<int64_t>(std::ceil(ev.offset_s * frame_rate - 1e-9)));
    for (int64_t f = std::max<int64_t>(0, f0); f < f1; ++f)
      tgt.sed.at2(f, c) = std::max(tgt.sed.at2(f, c), ev.confidence);
  }
  tgt.scene = scene_vocab.lookup(clip.scene);
  return tgt;
}

// Reference table at 1-second resolution: a class is active in a second when
// the union of its annotated spans covers more than half of it. This matches
// the binarize pooling rule, so hard-label annotations round-trip exactly.
inline EventTable reference_table(const AnnotatedClip& clip) {
  const auto seconds =
      static_cast<int64_t>(std::ceil(clip.clip.duration_s() - 1e-9));
  EventTable table;
  table.duration_s = static_cast<double>(seconds);

  std::map<std::string, std::vector<std::pair<double, double>>> spans;
  for (const auto& ev : clip.events)
    spans[ev.label].emplace_back(ev.onset_s, ev.offset_s);
  for (auto& [label, list] : spans) {  // merge per-class intervals
    std::sort(list.begin(), list.end());
    std::vector<std::pair<double, double>> merged;
    for (const auto& iv : list) {
      if (!merged.empty() && iv.first <= merged.back().second + 1e-12)
        merged.back().second = std::max(merged.back().second, iv.second);
      else
        merged.push_back(iv);
    }
    list = std::move(merged);
  }

  for (int64_t s = 0; s < seconds; ++s) {
    for (const auto& [label, list] : spans) {
      double coverage = 0.0;
      for (const auto& [onset, offset] : list)
        coverage += std::max(0.0, std::min(offset, static_cast<double>(s + 1)) -
                                      std::max(onset, static_cast<double>(s)));
      if (coverage <= 0.5 + 1e-9) continue;
      EventRow row;
      row.start_s = s;
      row.end_s = s + 1;
      row.scene = clip.scene;
      row.event = label;
      table.rows.push_back(std::move(row));
    }
  }
  sort_rows(table);
  return table;
}

// ---- synthetic dataset ----

struct SynthConfig {
  int n_clips = 8;
  double clip_len_s = 4.0;
  int num_scenes = 3;   // distinct colored-noise backgrounds
  int num_events = 4;   // distinct tone/chirp signatures
  int events_min = 2;
  int events_max = 2;
  uint64_t seed = 0;
  int sample_rate = kDefaultSampleRate;

  void validate() const {
    if (n_clips < 1) throw ConfigError("synth: n_clips must be >= 1");
    if (clip_len_s <= 0.5) throw ConfigError("synth: clip_len_s too short");
    if (num_scenes < 2) throw ConfigError("synth: need at least 2 scenes");
    if (num_events < 2) throw ConfigError("synth: need at least 2 events");
    if (events_min < 0 || events_max < events_min)
      throw ConfigError("synth: bad events_per_clip range");
    if (sample_rate < 8000) throw ConfigError("synth: sample rate too low");
  }
};

namespace synth_detail {

inline constexpr double kEventDuration = 1.2;
inline constexpr double kEventAmplitude = 0.5;
inline constexpr double kNoiseRms = 0.03;

// One-pole smoothing coefficients giving clearly separated spectral tilts.
inline double scene_pole(int scene) {
  static constexpr double kPoles[] = {0.0,  0.995, 0.9,   0.6,
                                      0.98, 0.8,   0.999, 0.4};
  return kPoles[scene % 8];
}

// Scales AR(1) output to unit variance so every scene has the same loudness
// and differs only in spectral tilt.
inline double pole_gain(double pole) {
  return std::sqrt((1.0 + pole) / ((1.0 - pole) + 1e-12));
}

// Event k: Hann-enveloped chirp with a class-specific base frequency and
// sweep direction. Deterministic, so tests can rebuild the exact template.
inline std::vector<double> event_signature(int event, int sample_rate) {
  const auto n = static_cast<size_t>(kEventDuration * sample_rate);
  const double base = 250.0 * std::pow(2.0, event % 6);
  const int kind = (event / 6) % 3;
  const double f0 = base;
  const double f1 = kind == 0 ? base : (kind == 1 ? base * 1.5 : base / 1.5);
  std::vector<double> sig(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double frac = static_cast<double>(i) / static_cast<double>(n);
    const double freq = f0 + (f1 - f0) * frac;
    const double env = 0.5 - 0.5 * std::cos(2.0 * M_PI * frac);
    sig[i] = kEventAmplitude * env * std::sin(2.0 * M_PI * freq * t);
  }
  return sig;
}

}  // namespace synth_detail

// Deterministic per seed: scene-colored noise background plus placed event
// signatures whose annotations describe the placements exactly.
inline std::vector<AnnotatedClip> generate_synthetic_dataset(
    const SynthConfig& cfg, const Vocabulary& event_vocab,
    const Vocabulary& scene_vocab) {
  cfg.validate();
  if (event_vocab.size() != cfg.num_events ||
      scene_vocab.size() != cfg.num_scenes)
    throw VocabularyMismatch("synth: vocabulary sizes do not match config");

  nn::Rng rng(cfg.seed);
  const auto clip_samples =
      static_cast<size_t>(cfg.clip_len_s * cfg.sample_rate);
  int class_cursor = 0;
  std::vector<AnnotatedClip> clips;
  for (int i = 0; i < cfg.n_clips; ++i) {
    AnnotatedClip ac;
    ac.id = "synth_" + std::to_string(i) + ".wav";
    const int scene = i % cfg.num_scenes;  // balanced scenes
    ac.scene = scene_vocab.labels[static_cast<size_t>(scene)];

    ac.clip.sample_rate = cfg.sample_rate;
    ac.clip.samples.assign(clip_samples, 0.0);
    const double pole = synth_detail::scene_pole(scene);
    const double gain =
        synth_detail::kNoiseRms * synth_detail::pole_gain(pole);
    double prev = 0.0;
    for (size_t s = 0; s < clip_samples; ++s) {
      prev = pole * prev + (1.0 - pole) * rng.normal();
      ac.clip.samples[s] = gain * prev;
    }

    const auto n_events =
        static_cast<int>(rng.randint(cfg.events_min, cfg.events_max));
    const double max_onset =
        cfg.clip_len_s - synth_detail::kEventDuration - 0.05;
    for (int e = 0; e < n_events && max_onset > 0; ++e) {
      // cycle classes across placements so every class gets covered evenly
      const int cls = class_cursor++ % cfg.num_events;
      double onset = 0.0;
      bool placed = false;
      for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
        // onsets on a 10 ms grid, no same-class overlap
        onset = std::floor(rng.uniform(0.0, max_onset) * 100.0) / 100.0;
        placed = true;
        for (const auto& prev_ev : ac.events)
          if (prev_ev.label == event_vocab.labels[cls] &&
              onset < prev_ev.offset_s &&
              onset + synth_detail::kEventDuration > prev_ev.onset_s)
            placed = false;
      }
      if (!placed) continue;
      const auto sig =
          synth_detail::event_signature(cls, cfg.sample_rate);
      const auto start = static_cast<size_t>(onset * cfg.sample_rate);
      for (size_t s = 0; s < sig.size() && start + s < clip_samples; ++s)
        ac.clip.samples[start + s] += sig[s];
      EventSpan span;
      span.onset_s = onset;
      span.offset_s = onset + synth_detail::kEventDuration;
      span.label = event_vocab.labels[cls];
      span.confidence = 1.0;
      ac.events.push_back(std::move(span));
    }
    std::sort(ac.events.begin(), ac.events.end(),
              [](const EventSpan& a, const EventSpan& b) {
                return a.onset_s < b.onset_s ||
                       (a.onset_s == b.onset_s && a.label < b.label);
              });
    clips.push_back(std::move(ac));
  }
  return clips;
}

inline Vocabulary default_event_vocab(int k) {
  std::vector<std::string> names;
  for (int i = 0; i < k; ++i) names.push_back("event_" + std::to_string(i));
  return Vocabulary::from_labels(std::move(names));
}

inline Vocabulary default_scene_vocab(int k) {
  std::vector<std::string> names;
  for (int i = 0; i < k; ++i) names.push_back("scene_" + std::to_string(i));
  return Vocabulary::from_labels(std::move(names));
}

// Persists clips as WAV + annotation TSV + scene CSV + vocabulary files, the
// same layout load_strong_labels ingests; downstream code cannot tell a
// synthetic dataset from a real one.
inline void write_dataset(const std::string& dir,
                          const std::vector<AnnotatedClip>& clips,
                          const Vocabulary& event_vocab,
                          const Vocabulary& scene_vocab) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "audio");
  std::ofstream events(fs::path(dir) / "events.tsv");
  std::ofstream scenes(fs::path(dir) / "scenes.csv");
  if (!events || !scenes)
    throw UnreadableFile(dir + ": cannot write dataset files");
  events.precision(6);
  for (const auto& clip : clips) {
    audio::write_wav_pcm16((fs::path(dir) / "audio" / clip.id).string(),
                           clip.clip.samples, clip.clip.sample_rate);
    scenes << clip.id << "," << clip.scene << "\n";
    for (const auto& ev : clip.events)
      events << clip.id << "\t" << ev.onset_s << "\t" << ev.offset_s << "\t"
             << ev.label << "\t" << ev.confidence << "\n";
  }
  event_vocab.to_file((fs::path(dir) / "event_vocab.txt").string());
  scene_vocab.to_file((fs::path(dir) / "scene_vocab.txt").string());
}

}  // namespace audiolog
