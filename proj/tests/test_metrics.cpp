// Copyright 2026 AudioLog Authors
// Metric contracts and equivalence with a brute-force per-second oracle.
//
// Licensed under the Apache License, Version 2.0

#include <map>
#include <set>
#include <string>
#include <vector>

#include "audiolog/metrics.hpp"
#include "audiolog/pipeline.hpp"
#include "doctest.h"

using namespace audiolog;

namespace {

EventTable make_table(std::vector<EventRow> rows, double duration) {
  EventTable t;
  t.rows = std::move(rows);
  t.duration_s = duration;
  sort_rows(t);
  return t;
}

// Brute force: for every (second, class) pair scan ALL rows for coverage.
// No painting, no interval logic; shares nothing with the implementation.
SegmentCounts brute_force_counts(const EventTable& ref, const EventTable& est,
                                 int64_t horizon) {
  std::set<std::string> classes;
  for (const auto& r : ref.rows) classes.insert(r.event);
  for (const auto& r : est.rows) classes.insert(r.event);
  SegmentCounts out;
  for (int64_t s = 0; s < horizon; ++s) {
    int64_t fn = 0, fp = 0;
    for (const auto& cls : classes) {
      auto active = [&](const EventTable& t) {
        for (const auto& r : t.rows)
          if (r.event == cls && r.start_s <= s && s < r.end_s) return true;
        return false;
      };
      const bool r = active(ref), e = active(est);
      if (r) ++out.N;
      if (r && e) ++out.TP;
      if (!r && e) { ++out.FP; ++fp; }
      if (r && !e) { ++out.FN; ++fn; }
    }
    const int64_t subs = std::min(fn, fp);
    out.S += subs;
    out.D += fn - subs;
    out.I += fp - subs;
  }
  return out;
}

EventTable random_table(nn::Rng& rng, int64_t horizon,
                        const std::vector<std::string>& events,
                        const std::vector<std::string>& scenes,
                        int max_rows) {
  EventTable t;
  t.duration_s = static_cast<double>(horizon);
  const auto n_rows = rng.randint(0, max_rows);
  for (int64_t i = 0; i < n_rows; ++i) {
    EventRow r;
    r.start_s = rng.randint(0, horizon - 1);
    r.end_s = std::min<int64_t>(horizon, r.start_s + rng.randint(1, 3));
    r.event = events[static_cast<size_t>(
        rng.randint(0, static_cast<int64_t>(events.size()) - 1))];
    r.scene = scenes[static_cast<size_t>(
        rng.randint(0, static_cast<int64_t>(scenes.size()) - 1))];
    t.rows.push_back(std::move(r));
  }
  sort_rows(t);
  return t;
}

}  // namespace

TEST_CASE("accuracy") {
  CHECK(accuracy({"a", "b", "c"}, {"a", "b", "c"}) == 1.0);
  CHECK(accuracy({"x", "y"}, {"a", "b"}) == 0.0);
  CHECK(accuracy({"a", "b", "c", "d"}, {"a", "b", "c", "x"}) == 0.75);
  CHECK_THROWS_AS(accuracy({}, {}), EmptyInput);
  CHECK_THROWS_AS(accuracy({"a"}, {"a", "b"}), LengthMismatch);
}

TEST_CASE("perfect estimate gives ER 0 and F1 1") {
  auto ref = make_table({{0, 1, "s", "car"}, {1, 2, "s", "car"},
                         {4, 6, "s", "bird"}},
                        10);
  const SedMetrics m = segment_er_f1(ref, ref, 10.0);
  CHECK(m.er == 0.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.counts.N == 4);
  CHECK(m.counts.TP == 4);
  CHECK(m.counts.S + m.counts.D + m.counts.I == 0);
}

TEST_CASE("empty estimate against non-empty reference: all deletions") {
  auto ref = make_table({{0, 2, "s", "car"}, {5, 8, "s", "bird"}}, 10);
  EventTable est;
  est.duration_s = 10;
  const SedMetrics m = segment_er_f1(ref, est, 10.0);
  CHECK(m.er == 1.0);
  CHECK(m.f1 == 0.0);
  CHECK(m.counts.D == 5);
  CHECK(m.counts.S == 0);
  CHECK(m.counts.I == 0);
}

TEST_CASE("pure substitution: wrong class in the right seconds") {
  // ref: event a active seconds 0-2 (N=2); est: event b in the same seconds
  auto ref = make_table({{0, 2, "s", "a"}}, 2);
  auto est = make_table({{0, 2, "s", "b"}}, 2);
  const SedMetrics m = segment_er_f1(ref, est, 2.0);
  // hand enumeration: each second has FN=1 (a) and FP=1 (b) -> S=1, so
  // ER = 2/2 = 1.0, F1 = 0
  CHECK(m.er == 1.0);
  CHECK(m.f1 == 0.0);
  CHECK(m.counts.S == 2);
  CHECK(m.counts.D == 0);
  CHECK(m.counts.I == 0);
}

TEST_CASE("empty reference is an error") {
  EventTable ref;
  ref.duration_s = 5;
  auto est = make_table({{0, 1, "s", "a"}}, 5);
  CHECK_THROWS_AS(segment_er_f1(ref, est, 5.0), EmptyReference);
}

TEST_CASE("vocabulary enforcement") {
  auto ref = make_table({{0, 1, "s", "car"}}, 5);
  auto est = make_table({{0, 1, "s", "zebra"}}, 5);
  const std::vector<std::string> vocab = {"car", "bird"};
  CHECK_THROWS_AS(segment_er_f1(ref, est, 5.0, &vocab), VocabularyMismatch);
  CHECK_NOTHROW(segment_er_f1(ref, ref, 5.0, &vocab));
}

TEST_CASE("rows beyond the horizon violate the precondition") {
  auto ref = make_table({{0, 12, "s", "car"}}, 12);
  CHECK_THROWS_AS(segment_er_f1(ref, ref, 10.0), ConfigError);
}

TEST_CASE("matches the brute-force oracle on 200 random instances") {
  nn::Rng rng(60);
  const std::vector<std::string> events = {"a", "b", "c"};
  const std::vector<std::string> scenes = {"s1", "s2"};
  int nontrivial = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t horizon = rng.randint(2, 10);
    EventTable ref = random_table(rng, horizon, events, scenes, 6);
    EventTable est = random_table(rng, horizon, events, scenes, 6);
    const SegmentCounts got =
        segment_counts(ref, est, static_cast<double>(horizon));
    const SegmentCounts want =
        brute_force_counts(ref, est, horizon);
    CHECK(got.N == want.N);
    CHECK(got.TP == want.TP);
    CHECK(got.FP == want.FP);
    CHECK(got.FN == want.FN);
    CHECK(got.S == want.S);
    CHECK(got.D == want.D);
    CHECK(got.I == want.I);
    if (want.N > 0) ++nontrivial;
  }
  CHECK(nontrivial > 150);
}

TEST_CASE("metric is invariant to row order and merge compaction") {
  nn::Rng rng(61);
  const std::vector<std::string> events = {"a", "b"};
  const std::vector<std::string> scenes = {"s"};
  for (int trial = 0; trial < 30; ++trial) {
    EventTable ref = random_table(rng, 8, events, scenes, 5);
    EventTable est = random_table(rng, 8, events, scenes, 5);
    if (ref.rows.empty()) continue;
    const SegmentCounts base = segment_counts(ref, est, 8.0);

    EventTable shuffled = est;
    rng.shuffle(shuffled.rows);
    const SegmentCounts after_shuffle = segment_counts(ref, shuffled, 8.0);
    CHECK(after_shuffle.TP == base.TP);
    CHECK(after_shuffle.FP == base.FP);
    CHECK(after_shuffle.FN == base.FN);

    const SegmentCounts after_merge =
        segment_counts(merge_contiguous(ref), merge_contiguous(est), 8.0);
    CHECK(after_merge.N == base.N);
    CHECK(after_merge.TP == base.TP);
    CHECK(after_merge.S == base.S);
    CHECK(after_merge.D == base.D);
    CHECK(after_merge.I == base.I);
  }
}

TEST_CASE("ER can exceed 1; F1 stays within [0, 1]") {
  auto ref = make_table({{0, 1, "s", "a"}}, 4);
  auto est = make_table({{0, 4, "s", "a"}, {0, 4, "s", "b"}}, 4);
  const SedMetrics m = segment_er_f1(ref, est, 4.0);
  CHECK(m.er > 1.0);
  CHECK(m.f1 >= 0.0);
  CHECK(m.f1 <= 1.0);
  CHECK(m.er == doctest::Approx((0.0 + 7.0) / 1.0));  // 7 insertions, N=1
}
