// Copyright 2026 AudioLog Authors
// Feature extraction contracts: framing arithmetic, silence handling, mel
// placement, padding and the patch embedding.
//
// Licensed under the Apache License, Version 2.0

#include <cmath>
#include <vector>

#include "audiolog/features.hpp"
#include "audiolog/model.hpp"
#include "doctest.h"

using namespace audiolog;

namespace {

AudioClip sine_clip(double freq_hz, double seconds, int rate,
                    double amplitude = 0.5) {
  AudioClip clip;
  clip.sample_rate = rate;
  const auto n = static_cast<size_t>(seconds * rate);
  clip.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    clip.samples[i] =
        amplitude * std::sin(2.0 * M_PI * freq_hz * i / rate);
  return clip;
}

}  // namespace

TEST_CASE("frame count is the number of hops covering the clip") {
  StftConfig cfg;
  AudioClip clip = sine_clip(440.0, 1.0, cfg.sample_rate);
  auto spec = compute_logmel(clip, cfg);

  // independent frame-count loop over hop starts
  int64_t expected = 0;
  for (int64_t start = 0; start < static_cast<int64_t>(clip.samples.size());
       start += cfg.hop_length)
    ++expected;
  CHECK(expected == 100);
  CHECK(spec.frames() == expected);
  CHECK(spec.bins() == 64);
  CHECK(spec.frame_rate_hz == doctest::Approx(100.0));

  // ragged tail: 1.003 s -> one extra frame
  AudioClip longer = sine_clip(440.0, 1.003, cfg.sample_rate);
  CHECK(compute_logmel(longer, cfg).frames() == 101);
}

TEST_CASE("silent clip produces the log floor everywhere, finite") {
  StftConfig cfg;
  AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  clip.samples.assign(32000, 0.0);
  auto spec = compute_logmel(clip, cfg);
  const double silence = std::log(cfg.log_floor);
  for (double v : spec.values.data) {
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(silence));
  }
  CHECK(spec.silence_value == doctest::Approx(silence));
}

TEST_CASE("no NaN or Inf for arbitrary clips") {
  StftConfig cfg;
  nn::Rng rng(40);
  for (int trial = 0; trial < 5; ++trial) {
    AudioClip clip;
    clip.sample_rate = cfg.sample_rate;
    const auto n = static_cast<size_t>(rng.randint(100, 50000));
    clip.samples.resize(n);
    for (auto& s : clip.samples) s = rng.uniform(-1.0, 1.0);
    auto spec = compute_logmel(clip, cfg);
    CHECK(spec.values.all_finite());
  }
}

TEST_CASE("pure tone lands in the mel bin whose center is nearest") {
  StftConfig cfg;
  AudioClip clip = sine_clip(1000.0, 1.0, cfg.sample_rate);
  auto spec = compute_logmel(clip, cfg);

  // column energies averaged over frames
  std::vector<double> mean_col(64, 0.0);
  for (int64_t t = 0; t < spec.frames(); ++t)
    for (int64_t f = 0; f < 64; ++f) mean_col[f] += spec.values.at2(t, f);
  int argmax = 0;
  for (int f = 1; f < 64; ++f)
    if (mean_col[f] > mean_col[argmax]) argmax = f;

  // independent center-frequency table: equally spaced points on the
  // 2595*log10(1 + f/700) scale between 0 and Nyquist
  auto to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto to_hz = [](double mel) {
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  };
  const double hi = to_mel(cfg.sample_rate / 2.0);
  std::vector<double> centers(64);
  for (int m = 0; m < 64; ++m) centers[m] = to_hz(hi * (m + 1) / 65.0);

  int nearest = 0;
  for (int m = 1; m < 64; ++m)
    if (std::abs(centers[m] - 1000.0) < std::abs(centers[nearest] - 1000.0))
      nearest = m;
  CHECK(std::abs(argmax - nearest) <= 1);
  CHECK(std::abs(centers[argmax] - 1000.0) <
        std::abs(centers[argmax] - centers[std::max(0, argmax - 2)]));
}

TEST_CASE("compute_logmel rejects empty and mismatched clips") {
  StftConfig cfg;
  AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  CHECK_THROWS_AS(compute_logmel(clip, cfg), EmptyClip);
  clip.samples.assign(100, 0.1);
  clip.sample_rate = 16000;
  CHECK_THROWS_AS(compute_logmel(clip, cfg), ConfigError);
}

TEST_CASE("pad_to_patch_multiple") {
  LogMelSpectrogram spec;
  spec.values = nn::Tensor::full({100, 64}, 1.5);
  spec.frame_rate_hz = 100.0;
  spec.silence_value = -23.0;

  SUBCASE("pads time up to the next multiple of P * 2^depth") {
    auto padded = pad_to_patch_multiple(spec, 4, 3);
    CHECK(padded.frames() == 128);
    CHECK(padded.bins() == 64);
    for (int64_t t = 0; t < 100; ++t)
      for (int64_t f = 0; f < 64; ++f)
        CHECK(padded.values.at2(t, f) == 1.5);
    for (int64_t t = 100; t < 128; ++t)
      for (int64_t f = 0; f < 64; ++f)
        CHECK(padded.values.at2(t, f) == -23.0);
  }

  SUBCASE("aligned input returned unchanged") {
    LogMelSpectrogram aligned;
    aligned.values = nn::Tensor::full({128, 64}, 0.25);
    aligned.frame_rate_hz = 100.0;
    aligned.silence_value = -23.0;
    auto out = pad_to_patch_multiple(aligned, 4, 3);
    CHECK(out.frames() == 128);
    CHECK(out.values.data == aligned.values.data);
  }

  SUBCASE("single frame pads to one full multiple") {
    LogMelSpectrogram tiny;
    tiny.values = nn::Tensor::full({1, 64}, 0.0);
    tiny.silence_value = -23.0;
    CHECK(pad_to_patch_multiple(tiny, 4, 3).frames() == 32);
  }

  SUBCASE("padding then embedding succeeds for any dims") {
    nn::Rng rng(41);
    ModelConfig cfg;
    cfg.patch_size = 4;
    cfg.dim = 8;
    cfg.depths = {1, 1, 1, 1};
    cfg.heads = {1, 1, 1, 1};
    cfg.num_events = 2;
    cfg.num_scenes = 2;
    AudioLogModel model(cfg, 1);
    for (int trial = 0; trial < 6; ++trial) {
      LogMelSpectrogram s;
      s.values = nn::Tensor({rng.randint(1, 70), rng.randint(1, 70)});
      s.silence_value = -23.0;
      auto padded = pad_to_patch_multiple(s, 4, 3);
      auto tokens = model.patch_embed(nn::constant(padded.values));
      CHECK(tokens->value.shape[0] ==
            (padded.frames() / 4) * (padded.bins() / 4));
    }
  }

  SUBCASE("invalid arguments") {
    CHECK_THROWS_AS(pad_to_patch_multiple(spec, 0, 3), ConfigError);
    CHECK_THROWS_AS(pad_to_patch_multiple(spec, 4, -1), ConfigError);
  }
}

TEST_CASE("patch embedding semantics") {
  SUBCASE("grid shape and token count") {
    ModelConfig cfg;
    cfg.patch_size = 4;
    cfg.dim = 96;
    AudioLogModel model(cfg, 2);
    nn::Tensor spec({256, 64});
    auto tokens = model.patch_embed(nn::constant(spec));
    CHECK(tokens->value.shape[0] == 64 * 16);
    CHECK(tokens->value.shape[1] == 96);
  }

  SUBCASE("zero input with zero bias maps to zero tokens") {
    ModelConfig cfg;
    cfg.patch_size = 4;
    cfg.dim = 16;
    AudioLogModel model(cfg, 3);
    auto tokens = model.patch_embed(nn::constant(nn::Tensor({32, 32})));
    for (double v : tokens->value.data) CHECK(v == 0.0);
  }

  SUBCASE("P=1 with identity weights reproduces the spectrogram") {
    ModelConfig cfg;
    cfg.patch_size = 1;
    cfg.dim = 1;
    cfg.heads = {1, 1, 1, 1};
    AudioLogModel model(cfg, 4);
    model.params()["patch_embed.weight"]->value = nn::Tensor({1, 1}, {1.0});
    nn::Rng rng(42);
    nn::Tensor spec({8, 8});
    for (double& v : spec.data) v = rng.uniform(-2.0, 2.0);
    auto tokens = model.patch_embed(nn::constant(spec));
    for (int64_t i = 0; i < spec.numel(); ++i)
      CHECK(tokens->value[i] == spec[i]);
  }

  SUBCASE("linear in the input for zero bias") {
    ModelConfig cfg;
    cfg.patch_size = 2;
    cfg.dim = 8;
    AudioLogModel model(cfg, 5);
    nn::Rng rng(43);
    nn::Tensor spec({16, 16});
    for (double& v : spec.data) v = rng.uniform(-1.0, 1.0);
    nn::Tensor scaled = spec;
    for (double& v : scaled.data) v *= 3.25;
    auto a = model.patch_embed(nn::constant(spec));
    auto b = model.patch_embed(nn::constant(scaled));
    for (int64_t i = 0; i < a->value.numel(); ++i)
      CHECK(b->value[i] ==
            doctest::Approx(3.25 * a->value[i]).epsilon(1e-9));
  }

  SUBCASE("indivisible grid raises ShapeMismatch") {
    ModelConfig cfg;
    cfg.patch_size = 4;
    AudioLogModel model(cfg, 6);
    CHECK_THROWS_AS(model.patch_embed(nn::constant(nn::Tensor({30, 64}))),
                    ShapeMismatch);
  }
}

TEST_CASE("normalization statistics round the pipeline") {
  nn::Rng rng(44);
  std::vector<LogMelSpectrogram> specs(3);
  for (auto& s : specs) {
    s.values = nn::Tensor({50, 8});
    for (double& v : s.values.data) v = rng.uniform(-10.0, -2.0);
  }
  std::vector<const LogMelSpectrogram*> ptrs;
  for (auto& s : specs) ptrs.push_back(&s);
  NormStats stats = NormStats::compute(ptrs);
  CHECK(stats.mean.size() == 8);

  LogMelSpectrogram copy = specs[0];
  stats.apply(copy);
  CHECK(copy.values.all_finite());

  // standardizing the pooled data gives near-zero means per bin
  std::vector<LogMelSpectrogram> normed = specs;
  for (auto& s : normed) stats.apply(s);
  for (int f = 0; f < 8; ++f) {
    double mean = 0.0;
    int64_t count = 0;
    for (const auto& s : normed) {
      for (int64_t t = 0; t < s.frames(); ++t) mean += s.values.at2(t, f);
      count += s.frames();
    }
    CHECK(std::abs(mean / count) < 1e-9);
  }
}

TEST_CASE("linear resampler preserves duration and tone shape") {
  AudioClip clip = sine_clip(440.0, 0.5, 16000);
  auto resampled = dsp::resample_linear(clip.samples, 16000, 32000);
  CHECK(resampled.size() == 16000);
  // the upsampled signal still crosses zero about 440 times per second
  int crossings = 0;
  for (size_t i = 1; i < resampled.size(); ++i)
    if ((resampled[i - 1] < 0) != (resampled[i] < 0)) ++crossings;
  CHECK(crossings == doctest::Approx(440).epsilon(0.02));
}
