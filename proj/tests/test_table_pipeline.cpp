// Copyright 2026 AudioLog Authors
// Table serialization round-trips and the post-processing pipeline.
//
// Licensed under the Apache License, Version 2.0

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "audiolog/pipeline.hpp"
#include "audiolog/table.hpp"
#include "doctest.h"

using namespace audiolog;

namespace {

EventTable random_table(nn::Rng& rng, int max_rows) {
  static const std::vector<std::string> scenes = {
      "city_center", "metro_station", "residential_area"};
  static const std::vector<std::string> events = {
      "car", "birds_singing", "metro leaving", "children"};
  EventTable t;
  const auto n = rng.randint(0, max_rows);
  for (int64_t i = 0; i < n; ++i) {
    EventRow r;
    r.start_s = rng.randint(0, 59);
    r.end_s = r.start_s + rng.randint(1, 5);
    r.scene = scenes[static_cast<size_t>(rng.randint(0, 2))];
    r.event = events[static_cast<size_t>(rng.randint(0, 3))];
    t.rows.push_back(std::move(r));
  }
  sort_rows(t);
  for (const auto& r : t.rows)
    t.duration_s = std::max(t.duration_s, static_cast<double>(r.end_s));
  return t;
}

}  // namespace

TEST_CASE("serialized header and first data row match the expected layout") {
  EventTable t;
  t.duration_s = 60;
  t.rows = {{0, 1, "city_center", "car"},
            {16, 17, "metro_station", "metro leaving"},
            {40, 41, "residential_area", "birds_singing"}};
  const std::string csv = serialize_table(t, TableFormat::kCsv);
  CHECK(csv.rfind("Start,End,Scene,Event\n0,1,city_center,car", 0) == 0);
  const std::string tsv = serialize_table(t, TableFormat::kTsv);
  CHECK(tsv.rfind("Start\tEnd\tScene\tEvent\n0\t1\tcity_center\tcar", 0) == 0);
  const std::string md = serialize_table(t, TableFormat::kMarkdown);
  CHECK(md.rfind("| Start | End | Scene | Event |\n", 0) == 0);
  CHECK(md.find("| 0 | 1 | city_center | car |") != std::string::npos);
}

TEST_CASE("empty table serializes to a bare header") {
  EventTable t;
  CHECK(serialize_table(t, TableFormat::kCsv) == "Start,End,Scene,Event\n");
  EventTable parsed =
      parse_table(serialize_table(t, TableFormat::kCsv), TableFormat::kCsv);
  CHECK(parsed.rows.empty());
}

TEST_CASE("round-trip equality on random tables for all three formats") {
  nn::Rng rng(70);
  for (TableFormat format : {TableFormat::kCsv, TableFormat::kTsv,
                             TableFormat::kMarkdown}) {
    for (int trial = 0; trial < 60; ++trial) {
      EventTable t = random_table(rng, 12);
      EventTable back = parse_table(serialize_table(t, format), format);
      REQUIRE(back.rows.size() == t.rows.size());
      for (size_t i = 0; i < t.rows.size(); ++i) CHECK(back.rows[i] == t.rows[i]);
    }
  }
}

TEST_CASE("parser rejects malformed input") {
  CHECK_THROWS_AS(parse_table("", TableFormat::kCsv), MalformedRow);
  CHECK_THROWS_AS(parse_table("A,B,C,D\n", TableFormat::kCsv), MalformedRow);
  CHECK_THROWS_AS(
      parse_table("Start,End,Scene,Event\n0,1,s\n", TableFormat::kCsv),
      MalformedRow);
  CHECK_THROWS_AS(
      parse_table("Start,End,Scene,Event\n2,1,s,e\n", TableFormat::kCsv),
      MalformedRow);
  CHECK_THROWS_AS(
      parse_table("Start,End,Scene,Event\n-1,1,s,e\n", TableFormat::kCsv),
      MalformedRow);
  CHECK_THROWS_AS(
      parse_table("Start,End,Scene,Event\nx,1,s,e\n", TableFormat::kCsv),
      MalformedRow);
  // labels carrying the delimiter cannot serialize
  EventTable t;
  t.duration_s = 2;
  t.rows = {{0, 1, "a,b", "e"}};
  CHECK_THROWS_AS(serialize_table(t, TableFormat::kCsv), VocabularyMismatch);
}

TEST_CASE("merge_contiguous") {
  SUBCASE("adjacent identical rows fuse") {
    EventTable t;
    t.duration_s = 3;
    t.rows = {{0, 1, "s", "e"}, {1, 2, "s", "e"}};
    EventTable merged = merge_contiguous(t);
    REQUIRE(merged.rows.size() == 1);
    CHECK(merged.rows[0] == EventRow{0, 2, "s", "e"});
  }
  SUBCASE("gapped rows stay apart") {
    EventTable t;
    t.duration_s = 4;
    t.rows = {{0, 1, "s", "e"}, {2, 3, "s", "e"}};
    CHECK(merge_contiguous(t).rows.size() == 2);
  }
  SUBCASE("different scene or event blocks fusion") {
    EventTable t;
    t.duration_s = 3;
    t.rows = {{0, 1, "s1", "e"}, {1, 2, "s2", "e"}, {2, 3, "s2", "f"}};
    CHECK(merge_contiguous(t).rows.size() == 3);
  }
  SUBCASE("idempotent on random tables") {
    nn::Rng rng(71);
    for (int trial = 0; trial < 40; ++trial) {
      EventTable t = random_table(rng, 10);
      EventTable once = merge_contiguous(t);
      EventTable twice = merge_contiguous(once);
      REQUIRE(twice.rows.size() == once.rows.size());
      for (size_t i = 0; i < once.rows.size(); ++i)
        CHECK(twice.rows[i] == once.rows[i]);
    }
  }

  SUBCASE("merged rows never overlap per (event, scene) and stay in bounds") {
    nn::Rng rng(73);
    for (int trial = 0; trial < 40; ++trial) {
      EventTable t = random_table(rng, 10);
      EventTable merged = merge_contiguous(t);
      std::map<std::pair<std::string, std::string>,
               std::vector<std::pair<int64_t, int64_t>>>
          spans;
      for (const auto& r : merged.rows) {
        CHECK(r.start_s >= 0);
        CHECK(static_cast<double>(r.end_s) <= merged.duration_s + 1e-9);
        spans[{r.event, r.scene}].emplace_back(r.start_s, r.end_s);
      }
      for (auto& [key, list] : spans) {
        std::sort(list.begin(), list.end());
        for (size_t i = 1; i < list.size(); ++i)
          CHECK(list[i].first >= list[i - 1].second);
      }
    }
  }
}

TEST_CASE("segment_long_audio") {
  PostprocessConfig cfg;
  cfg.segment_len_s = 10;
  cfg.segment_hop_s = 10;

  SUBCASE("60 s clip in 10 s segments") {
    AudioClip clip;
    clip.sample_rate = 1000;
    clip.samples.assign(60000, 0.5);
    auto segs = segment_long_audio(clip, cfg);
    CHECK(segs.size() == 6);
    double covered = 0.0;
    for (size_t i = 0; i < segs.size(); ++i) {
      CHECK(segs[i].start_s == doctest::Approx(10.0 * i));
      CHECK(segs[i].true_len_s == doctest::Approx(10.0));
      CHECK(segs[i].clip.samples.size() == 10000);
      covered += segs[i].true_len_s;
    }
    CHECK(covered == doctest::Approx(60.0));
  }

  SUBCASE("7 s clip produces one zero-padded segment, true length 7") {
    AudioClip clip;
    clip.sample_rate = 1000;
    clip.samples.assign(7000, 0.25);
    auto segs = segment_long_audio(clip, cfg);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].true_len_s == doctest::Approx(7.0));
    CHECK(segs[0].clip.samples.size() == 10000);
    CHECK(segs[0].clip.samples[6999] == 0.25);
    CHECK(segs[0].clip.samples[7000] == 0.0);
  }

  SUBCASE("spans tile the clip with no gaps or overlaps") {
    AudioClip clip;
    clip.sample_rate = 1000;
    clip.samples.assign(23500, 0.1);
    auto segs = segment_long_audio(clip, cfg);
    double cursor = 0.0;
    for (const auto& s : segs) {
      CHECK(s.start_s == doctest::Approx(cursor));
      cursor += s.true_len_s;
    }
    CHECK(cursor == doctest::Approx(23.5));
  }

  SUBCASE("empty clip is an error") {
    AudioClip clip;
    clip.sample_rate = 1000;
    CHECK_THROWS_AS(segment_long_audio(clip, cfg), EmptyClip);
  }
}

TEST_CASE("binarize_and_smooth") {
  PostprocessConfig cfg;  // threshold 0.5, median window 7

  SUBCASE("saturated probabilities activate every second") {
    nn::Tensor probs = nn::Tensor::full({300, 2}, 0.9);
    auto grid = binarize_and_smooth(probs, 100.0, 300, cfg);
    CHECK(grid.seconds == 3);
    CHECK(grid.classes == 2);
    for (int64_t s = 0; s < 3; ++s)
      for (int64_t c = 0; c < 2; ++c) CHECK(grid.at(s, c));
  }

  SUBCASE("single-frame spike is removed by the median filter") {
    nn::Tensor probs({100, 1});
    probs.at2(50, 0) = 0.99;
    // independent oracle: median over the window [47, 53] by direct sort
    for (int64_t t = 0; t < 100; ++t) {
      std::vector<double> window;
      for (int64_t u = std::max<int64_t>(0, t - 3);
           u <= std::min<int64_t>(99, t + 3); ++u)
        window.push_back(probs.at2(u, 0));
      std::sort(window.begin(), window.end());
      CHECK(window[window.size() / 2] < 0.5);  // spike never survives
    }
    auto grid = binarize_and_smooth(probs, 100.0, 100, cfg);
    CHECK_FALSE(grid.at(0, 0));
  }

  SUBCASE("probabilities exactly at the threshold stay inactive") {
    nn::Tensor probs = nn::Tensor::full({100, 1}, 0.5);
    auto grid = binarize_and_smooth(probs, 100.0, 100, cfg);
    CHECK_FALSE(grid.at(0, 0));
    nn::Tensor above = nn::Tensor::full({100, 1}, 0.5 + 1e-9);
    CHECK(binarize_and_smooth(above, 100.0, 100, cfg).at(0, 0));
  }

  SUBCASE("raising the threshold never adds activity") {
    nn::Rng rng(72);
    nn::Tensor probs({400, 3});
    for (double& v : probs.data) v = rng.uniform(0.0, 1.0);
    PostprocessConfig lo = cfg, hi = cfg;
    lo.threshold = 0.3;
    hi.threshold = 0.7;
    auto g_lo = binarize_and_smooth(probs, 100.0, 400, lo);
    auto g_hi = binarize_and_smooth(probs, 100.0, 400, hi);
    for (int64_t s = 0; s < g_lo.seconds; ++s)
      for (int64_t c = 0; c < 3; ++c)
        if (g_hi.at(s, c)) CHECK(g_lo.at(s, c));
  }

  SUBCASE("more than half of a second's frames must be active") {
    nn::Tensor probs({100, 1});
    for (int64_t t = 0; t < 50; ++t) probs.at2(t, 0) = 0.9;  // exactly half
    cfg.median_window = 1;  // isolate the pooling rule
    auto grid = binarize_and_smooth(probs, 100.0, 100, cfg);
    CHECK_FALSE(grid.at(0, 0));
    probs.at2(50, 0) = 0.9;  // 51 frames
    CHECK(binarize_and_smooth(probs, 100.0, 100, cfg).at(0, 0));
  }

  SUBCASE("truncated final second pools over its real frames") {
    nn::Tensor probs = nn::Tensor::full({130, 1}, 0.9);
    auto grid = binarize_and_smooth(probs, 100.0, 130, cfg);
    CHECK(grid.seconds == 2);
    CHECK(grid.at(1, 0));  // 30 of 30 frames active
  }
}

TEST_CASE("scene_per_second") {
  PostprocessConfig cfg;
  cfg.segment_len_s = 10;
  cfg.segment_hop_s = 10;

  auto seg = [](double start, double len, std::vector<double> logits) {
    SegmentScenePrediction p;
    p.start_s = start;
    p.true_len_s = len;
    const auto n = static_cast<int64_t>(logits.size());
    p.scene_logits = nn::Tensor({n}, std::move(logits));
    return p;
  };

  SUBCASE("one segment paints its argmax over its span") {
    auto scenes = scene_per_second({seg(0, 10, {0.1, 2.0, -1.0})}, 10, cfg);
    REQUIRE(scenes.size() == 10);
    for (int v : scenes) CHECK(v == 1);
  }

  SUBCASE("ties break toward the lowest class index") {
    auto scenes = scene_per_second({seg(0, 5, {3.0, 3.0, 1.0})}, 5, cfg);
    for (int v : scenes) CHECK(v == 0);
  }

  SUBCASE("second 16 takes the scene of its covering segment") {
    // 60 s audio, 6 segments with argmaxes c, c, m, m, r, r
    std::vector<SegmentScenePrediction> segs;
    const std::vector<int> argmaxes = {0, 0, 1, 1, 2, 2};
    for (int i = 0; i < 6; ++i) {
      std::vector<double> logits = {0.0, 0.0, 0.0};
      logits[static_cast<size_t>(argmaxes[i])] = 5.0;
      segs.push_back(seg(10.0 * i, 10.0, std::move(logits)));
    }
    auto scenes = scene_per_second(segs, 60, cfg);
    // independent lookup: second 16 lies in segment floor(16/10) = 1
    CHECK(scenes[16] == argmaxes[16 / 10]);
    for (int s = 0; s < 60; ++s) CHECK(scenes[s] == argmaxes[s / 10]);
  }

  SUBCASE("uncovered second raises CoverageGap") {
    CHECK_THROWS_AS(scene_per_second({seg(0, 5, {1.0, 0.0})}, 10, cfg),
                    CoverageGap);
  }

  SUBCASE("majority filter smooths an outlier segment") {
    PostprocessConfig smooth = cfg;
    smooth.scene_majority_width = 3;
    std::vector<SegmentScenePrediction> segs;
    for (int i = 0; i < 5; ++i) {
      std::vector<double> logits = {0.0, 0.0};
      logits[i == 2 ? 1 : 0] = 4.0;  // one outlier in the middle
      segs.push_back(seg(10.0 * i, 10.0, std::move(logits)));
    }
    auto scenes = scene_per_second(segs, 50, smooth);
    for (int s = 0; s < 50; ++s) CHECK(scenes[s] == 0);
  }
}

TEST_CASE("assemble_table") {
  const std::vector<std::string> scene_labels = {"city_center",
                                                 "metro_station"};
  const std::vector<std::string> event_labels = {"car", "birds_singing"};

  SUBCASE("one row per active (second, event) with that second's scene") {
    ActivityGrid grid = ActivityGrid::zeros(3, 2);
    grid.set(0, 0, true);
    std::vector<int> scenes = {0, 0, 1};
    EventTable t = assemble_table(scenes, grid, scene_labels, event_labels, 3);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0] == EventRow{0, 1, "city_center", "car"});
  }

  SUBCASE("silent seconds emit nothing") {
    ActivityGrid grid = ActivityGrid::zeros(6, 2);
    grid.set(1, 1, true);
    std::vector<int> scenes(6, 0);
    EventTable t = assemble_table(scenes, grid, scene_labels, event_labels, 6);
    for (const auto& r : t.rows) CHECK(r.start_s != 5);
    CHECK(t.rows.size() == 1);
  }

  SUBCASE("two events in one second share the span and scene") {
    ActivityGrid grid = ActivityGrid::zeros(41, 2);
    grid.set(40, 0, true);
    grid.set(40, 1, true);
    std::vector<int> scenes(41, 1);
    EventTable t =
        assemble_table(scenes, grid, scene_labels, event_labels, 41);
    // oracle: enumerate the (second x class) activity grid directly
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0] == EventRow{40, 41, "metro_station", "birds_singing"});
    CHECK(t.rows[1] == EventRow{40, 41, "metro_station", "car"});
  }

  SUBCASE("vocabulary mismatch is an error") {
    ActivityGrid grid = ActivityGrid::zeros(2, 3);
    std::vector<int> scenes(2, 0);
    CHECK_THROWS_AS(
        assemble_table(scenes, grid, scene_labels, event_labels, 2),
        VocabularyMismatch);
  }
}
