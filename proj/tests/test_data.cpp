// Copyright 2026 AudioLog Authors
// Dataset ingestion, target painting and the synthetic generator, checked
// against a matched-filter detection oracle.
//
// Licensed under the Apache License, Version 2.0

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "audiolog/data.hpp"
#include "audiolog/pipeline.hpp"
#include "doctest.h"

using namespace audiolog;
namespace fs = std::filesystem;

namespace {

struct TempDataset {
  fs::path dir;
  explicit TempDataset(const std::string& name) {
    dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir / "audio");
  }
  ~TempDataset() { fs::remove_all(dir); }

  void write(const std::string& rel, const std::string& content) const {
    std::ofstream os(dir / rel);
    os << content;
  }
  std::string path(const std::string& rel) const {
    return (dir / rel).string();
  }
};

void write_tone(const std::string& path, double seconds = 1.0) {
  std::vector<double> samples(static_cast<size_t>(seconds * 32000));
  for (size_t i = 0; i < samples.size(); ++i)
    samples[i] = 0.1 * std::sin(2.0 * M_PI * 500.0 * i / 32000.0);
  audio::write_wav_pcm16(path, samples, 32000);
}

}  // namespace

TEST_CASE("strong-label TSV ingestion") {
  TempDataset ds("al_data_test");
  write_tone(ds.path("audio/a.wav"), 2.0);
  ds.write("scenes.csv", "a.wav,city_center\n");
  const Vocabulary events = Vocabulary::from_labels({"car", "bird"});
  const Vocabulary scenes = Vocabulary::from_labels({"city_center", "park"});

  SUBCASE("well-formed row parses with default confidence") {
    ds.write("events.tsv", "a.wav\t0.00\t1.20\tcar\n");
    auto clips = load_strong_labels(ds.path("events.tsv"),
                                    ds.path("scenes.csv"), ds.path("audio"),
                                    events, scenes, 32000);
    REQUIRE(clips.size() == 1);
    REQUIRE(clips[0].events.size() == 1);
    CHECK(clips[0].events[0].onset_s == 0.0);
    CHECK(clips[0].events[0].offset_s == doctest::Approx(1.2));
    CHECK(clips[0].events[0].label == "car");
    CHECK(clips[0].events[0].confidence == 1.0);
    CHECK(clips[0].scene == "city_center");
  }

  SUBCASE("soft-label confidence passes through") {
    ds.write("events.tsv", "a.wav\t0\t1\tcar\t0.6\n");
    auto clips = load_strong_labels(ds.path("events.tsv"),
                                    ds.path("scenes.csv"), ds.path("audio"),
                                    events, scenes, 32000);
    CHECK(clips[0].events[0].confidence == doctest::Approx(0.6));
  }

  SUBCASE("offset before onset is a MalformedRow with the line number") {
    ds.write("events.tsv", "a.wav\t0\t1\tcar\na.wav\t1.5\t1.2\tbird\n");
    try {
      load_strong_labels(ds.path("events.tsv"), ds.path("scenes.csv"),
                         ds.path("audio"), events, scenes, 32000);
      FAIL("expected MalformedRow");
    } catch (const MalformedRow& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }

  SUBCASE("unknown event label") {
    ds.write("events.tsv", "a.wav\t0\t1\tzebra\n");
    CHECK_THROWS_AS(
        load_strong_labels(ds.path("events.tsv"), ds.path("scenes.csv"),
                           ds.path("audio"), events, scenes, 32000),
        UnknownLabel);
  }

  SUBCASE("confidence outside [0,1]") {
    ds.write("events.tsv", "a.wav\t0\t1\tcar\t1.5\n");
    CHECK_THROWS_AS(
        load_strong_labels(ds.path("events.tsv"), ds.path("scenes.csv"),
                           ds.path("audio"), events, scenes, 32000),
        MalformedRow);
  }

  SUBCASE("missing audio file") {
    ds.write("events.tsv", "a.wav\t0\t1\tcar\n");
    ds.write("scenes.csv", "a.wav,city_center\nb.wav,park\n");
    CHECK_THROWS_AS(
        load_strong_labels(ds.path("events.tsv"), ds.path("scenes.csv"),
                           ds.path("audio"), events, scenes, 32000),
        MissingAudio);
  }

  SUBCASE("annotation without a scene entry") {
    write_tone(ds.path("audio/b.wav"));
    ds.write("events.tsv", "b.wav\t0\t1\tcar\n");
    CHECK_THROWS_AS(
        load_strong_labels(ds.path("events.tsv"), ds.path("scenes.csv"),
                           ds.path("audio"), events, scenes, 32000),
        MalformedRow);
  }

  SUBCASE("scene-only clips are allowed") {
    ds.write("events.tsv", "");
    auto clips = load_strong_labels(ds.path("events.tsv"),
                                    ds.path("scenes.csv"), ds.path("audio"),
                                    events, scenes, 32000);
    REQUIRE(clips.size() == 1);
    CHECK(clips[0].events.empty());
  }
}

TEST_CASE("vocabulary files: index equals line number") {
  TempDataset ds("al_vocab_test");
  ds.write("vocab.txt", "car\nbird\nmetro leaving\n");
  Vocabulary v = Vocabulary::from_file(ds.path("vocab.txt"));
  CHECK(v.size() == 3);
  CHECK(v.lookup("car") == 0);
  CHECK(v.lookup("metro leaving") == 2);
  CHECK_THROWS_AS(v.lookup("zebra"), UnknownLabel);

  v.to_file(ds.path("copy.txt"));
  Vocabulary w = Vocabulary::from_file(ds.path("copy.txt"));
  CHECK(w.labels == v.labels);
}

TEST_CASE("targets_from_annotations") {
  const Vocabulary events = Vocabulary::from_labels({"car", "bird"});
  const Vocabulary scenes = Vocabulary::from_labels({"indoor", "outdoor"});
  AnnotatedClip clip;
  clip.scene = "outdoor";
  clip.clip.sample_rate = 32000;
  clip.clip.samples.assign(2 * 32000, 0.0);

  SUBCASE("a 0..1 s event paints frames 0..99 at 100 fps") {
    clip.events = {{0.0, 1.0, "car", 1.0}};
    Targets t = targets_from_annotations(clip, 100.0, events, scenes);
    REQUIRE(t.sed.shape[0] == 200);
    for (int64_t f = 0; f < 100; ++f) CHECK(t.sed.at2(f, 0) == 1.0);
    for (int64_t f = 100; f < 200; ++f) CHECK(t.sed.at2(f, 0) == 0.0);
    for (int64_t f = 0; f < 200; ++f) CHECK(t.sed.at2(f, 1) == 0.0);
    CHECK(t.scene == 1);
  }

  SUBCASE("overlapping same-class events combine with max") {
    clip.events = {{0.0, 1.0, "car", 0.4}, {0.5, 1.5, "car", 0.9}};
    Targets t = targets_from_annotations(clip, 100.0, events, scenes);
    CHECK(t.sed.at2(10, 0) == doctest::Approx(0.4));
    CHECK(t.sed.at2(75, 0) == doctest::Approx(0.9));
    CHECK(t.sed.at2(120, 0) == doctest::Approx(0.9));
  }

  SUBCASE("soft confidence becomes the framewise value") {
    clip.events = {{0.25, 0.75, "bird", 0.6}};
    Targets t = targets_from_annotations(clip, 100.0, events, scenes);
    CHECK(t.sed.at2(25, 1) == doctest::Approx(0.6));
    CHECK(t.sed.at2(74, 1) == doctest::Approx(0.6));
    CHECK(t.sed.at2(75, 1) == 0.0);
    CHECK(t.sed.at2(24, 1) == 0.0);
  }

  SUBCASE("unknown label throws") {
    clip.events = {{0.0, 1.0, "zebra", 1.0}};
    CHECK_THROWS_AS(targets_from_annotations(clip, 100.0, events, scenes),
                    UnknownLabel);
  }
}

TEST_CASE("hard targets round-trip to the annotation's active seconds") {
  const Vocabulary events = Vocabulary::from_labels({"e0", "e1", "e2"});
  const Vocabulary scenes = Vocabulary::from_labels({"s0", "s1"});
  nn::Rng rng(80);
  PostprocessConfig pp;
  pp.median_window = 1;  // isolate painting + pooling geometry

  for (int trial = 0; trial < 30; ++trial) {
    AnnotatedClip clip;
    clip.scene = "s0";
    clip.clip.sample_rate = 32000;
    const double duration = 6.0;
    clip.clip.samples.assign(static_cast<size_t>(duration * 32000), 0.0);
    const auto n_events = rng.randint(0, 4);
    for (int64_t e = 0; e < n_events; ++e) {
      EventSpan span;
      span.onset_s = std::floor(rng.uniform(0.0, 4.5) * 100.0) / 100.0;
      span.offset_s =
          span.onset_s + std::floor(rng.uniform(0.3, 1.5) * 100.0) / 100.0;
      span.label = events.labels[static_cast<size_t>(rng.randint(0, 2))];
      clip.events.push_back(std::move(span));
    }

    Targets t = targets_from_annotations(clip, 100.0, events, scenes);
    ActivityGrid grid = binarize_and_smooth(t.sed, 100.0, 600, pp);
    std::vector<int> scene_ids(static_cast<size_t>(grid.seconds), 0);
    EventTable reconstructed = assemble_table(
        scene_ids, grid, scenes.labels, events.labels, duration);
    EventTable ref = reference_table(clip);
    REQUIRE(reconstructed.rows.size() == ref.rows.size());
    for (size_t i = 0; i < ref.rows.size(); ++i)
      CHECK(reconstructed.rows[i] == ref.rows[i]);
  }
}

TEST_CASE("synthetic generator") {
  SynthConfig cfg;
  cfg.n_clips = 6;
  cfg.num_scenes = 3;
  cfg.num_events = 4;
  cfg.seed = 7;
  const Vocabulary events = default_event_vocab(4);
  const Vocabulary scenes = default_scene_vocab(3);

  SUBCASE("same seed twice gives bit-identical datasets") {
    auto a = generate_synthetic_dataset(cfg, events, scenes);
    auto b = generate_synthetic_dataset(cfg, events, scenes);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].clip.samples == b[i].clip.samples);
      REQUIRE(a[i].events.size() == b[i].events.size());
      for (size_t e = 0; e < a[i].events.size(); ++e) {
        CHECK(a[i].events[e].onset_s == b[i].events[e].onset_s);
        CHECK(a[i].events[e].label == b[i].events[e].label);
      }
    }
    auto c = generate_synthetic_dataset(
        [&] { auto c2 = cfg; c2.seed = 8; return c2; }(), events, scenes);
    bool any_diff = false;
    for (size_t i = 0; i < a.size() && !any_diff; ++i)
      any_diff = a[i].clip.samples != c[i].clip.samples;
    CHECK(any_diff);
  }

  SUBCASE("zero events per clip leaves clips event-free") {
    SynthConfig empty = cfg;
    empty.events_min = 0;
    empty.events_max = 0;
    for (const auto& clip : generate_synthetic_dataset(empty, events, scenes))
      CHECK(clip.events.empty());
  }

  SUBCASE("annotations stay within the clip and on the vocabulary") {
    for (const auto& clip : generate_synthetic_dataset(cfg, events, scenes)) {
      for (const auto& ev : clip.events) {
        CHECK(ev.onset_s >= 0.0);
        CHECK(ev.offset_s <= clip.clip.duration_s() + 1e-9);
        CHECK_NOTHROW(events.lookup(ev.label));
      }
      for (double s : clip.clip.samples) CHECK(std::abs(s) <= 1.0);
    }
  }
}

TEST_CASE("matched-filter oracle recovers placed events with F1 > 0.95") {
  SynthConfig cfg;
  cfg.n_clips = 8;
  cfg.num_scenes = 3;
  cfg.num_events = 4;
  cfg.seed = 11;
  const Vocabulary events = default_event_vocab(4);
  const Vocabulary scenes = default_scene_vocab(3);
  auto clips = generate_synthetic_dataset(cfg, events, scenes);

  // correlation detector, independent of the model stack: normalized
  // cross-correlation of the known class template on a 10 ms onset grid
  int tp = 0, fp = 0, fn = 0;
  for (const auto& clip : clips) {
    for (int k = 0; k < 4; ++k) {
      const auto tmpl = synth_detail::event_signature(k, cfg.sample_rate);
      double tmpl_norm = 0.0;
      for (double v : tmpl) tmpl_norm += v * v;
      tmpl_norm = std::sqrt(tmpl_norm);

      std::vector<double> scores;
      const int hop = 320;  // 10 ms
      const auto n = clip.clip.samples.size();
      for (size_t t = 0; t + tmpl.size() <= n; t += hop) {
        double dot = 0.0, win_norm = 0.0;
        for (size_t i = 0; i < tmpl.size(); ++i) {
          dot += tmpl[i] * clip.clip.samples[t + i];
          win_norm += clip.clip.samples[t + i] * clip.clip.samples[t + i];
        }
        scores.push_back(dot / (tmpl_norm * std::sqrt(win_norm) + 1e-12));
      }

      // peak picking with suppression over the template span
      std::vector<double> detections;
      for (size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < 0.5) continue;
        bool is_peak = true;
        const size_t span = tmpl.size() / hop;
        for (size_t j = i > span ? i - span : 0;
             j <= std::min(scores.size() - 1, i + span); ++j)
          if (scores[j] > scores[i]) is_peak = false;
        if (is_peak) detections.push_back(static_cast<double>(i * hop) / 32000.0);
      }

      std::vector<double> truth;
      for (const auto& ev : clip.events)
        if (ev.label == events.labels[static_cast<size_t>(k)])
          truth.push_back(ev.onset_s);

      std::vector<bool> used(truth.size(), false);
      for (double det : detections) {
        bool matched = false;
        for (size_t i = 0; i < truth.size(); ++i)
          if (!used[i] && std::abs(truth[i] - det) < 0.1) {
            used[i] = true;
            matched = true;
            break;
          }
        matched ? ++tp : ++fp;
      }
      for (bool u : used)
        if (!u) ++fn;
    }
  }
  const double f1 = 2.0 * tp / (2.0 * tp + fp + fn);
  CHECK(tp > 0);
  CHECK(f1 > 0.95);
}

TEST_CASE("write_dataset persists a loadable dataset") {
  TempDataset ds("al_synth_io");
  SynthConfig cfg;
  cfg.n_clips = 3;
  cfg.num_scenes = 2;
  cfg.num_events = 2;
  cfg.seed = 5;
  const Vocabulary events = default_event_vocab(2);
  const Vocabulary scenes = default_scene_vocab(2);
  auto clips = generate_synthetic_dataset(cfg, events, scenes);
  write_dataset(ds.dir.string(), clips, events, scenes);

  const Vocabulary ev2 = Vocabulary::from_file(ds.path("event_vocab.txt"));
  const Vocabulary sv2 = Vocabulary::from_file(ds.path("scene_vocab.txt"));
  auto loaded = load_strong_labels(ds.path("events.tsv"), ds.path("scenes.csv"),
                                   ds.path("audio"), ev2, sv2, 32000);
  REQUIRE(loaded.size() == clips.size());
  size_t loaded_events = 0, made_events = 0;
  for (const auto& c : loaded) loaded_events += c.events.size();
  for (const auto& c : clips) made_events += c.events.size();
  CHECK(loaded_events == made_events);
  // PCM16 round trip keeps samples within quantization error
  for (size_t i = 0; i < clips.size(); ++i) {
    const auto& a = clips[i].clip.samples;
    const AnnotatedClip* match = nullptr;
    for (const auto& l : loaded)
      if (l.id == clips[i].id) match = &l;
    REQUIRE(match != nullptr);
    REQUIRE(match->clip.samples.size() == a.size());
    for (size_t s = 0; s < a.size(); s += 997)
      CHECK(match->clip.samples[s] == doctest::Approx(a[s]).epsilon(2e-4));
  }
}
