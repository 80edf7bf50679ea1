// Copyright 2026 AudioLog Authors
// Audio loading, log-Mel spectrograms, patch-alignment padding and
// per-bin normalization statistics.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "audiolog/error.hpp"
#include "audiolog/flac.hpp"
#include "audiolog/tensor.hpp"
#include "audiolog/wav.hpp"

namespace audiolog {

inline constexpr int kDefaultSampleRate = 32000;

struct AudioClip {
  std::vector<double> samples;  // mono, amplitude in [-1, 1]
  int sample_rate = kDefaultSampleRate;

  double duration_s() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

struct StftConfig {
  int window_size = 1024;
  int hop_length = 320;
  int n_mels = 64;
  int sample_rate = kDefaultSampleRate;
  double log_floor = 1e-10;

  void validate() const {
    if (hop_length <= 0 || window_size <= 0 || hop_length > window_size)
      throw ConfigError("stft: require 0 < hop_length <= window_size");
    if (n_mels < 1) throw ConfigError("stft: n_mels must be >= 1");
    if (log_floor <= 0) throw ConfigError("stft: log_floor must be positive");
    if (sample_rate <= 0) throw ConfigError("stft: sample_rate must be positive");
  }
};

struct LogMelSpectrogram {
  nn::Tensor values;  // [T, F] log-energy
  double frame_rate_hz = 0.0;
  double silence_value = 0.0;  // log(log_floor); the pad fill value

  int64_t frames() const { return values.shape.empty() ? 0 : values.shape[0]; }
  int64_t bins() const { return values.rank() < 2 ? 0 : values.shape[1]; }
};

namespace dsp {

// Reflected index (no edge repetition), safe for any offset.
inline int64_t reflect_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_pow2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Triangular mel filterbank, HTK-style scale, [n_mels, n_fft/2 + 1].
struct MelFilterbank {
  int n_mels = 0;
  int n_bins = 0;
  std::vector<double> weights;        // row-major [n_mels, n_bins]
  std::vector<double> center_freq_hz; // filter peaks, for diagnostics/tests

  MelFilterbank() = default;
  MelFilterbank(int mels, int n_fft, int sample_rate) {
    n_mels = mels;
    n_bins = n_fft / 2 + 1;
    weights.assign(static_cast<size_t>(n_mels) * n_bins, 0.0);
    center_freq_hz.resize(static_cast<size_t>(n_mels));
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
    for (int m = 0; m < n_mels + 2; ++m)
      edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1));
    for (int m = 0; m < n_mels; ++m) {
      center_freq_hz[m] = edges[m + 1];
      const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
      for (int k = 0; k < n_bins; ++k) {
        const double f = static_cast<double>(k) * sample_rate / n_fft;
        double w = 0.0;
        if (f > lo && f < mid)
          w = (f - lo) / (mid - lo);
        else if (f >= mid && f < hi)
          w = (hi - f) / (hi - mid);
        if (w > 0) weights[static_cast<size_t>(m) * n_bins + k] = w;
      }
    }
  }
};

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

inline std::vector<double> resample_linear(const std::vector<double>& x,
                                           int from_rate, int to_rate) {
  if (from_rate == to_rate || x.empty()) return x;
  const double ratio = static_cast<double>(from_rate) / to_rate;
  const auto n_out = static_cast<size_t>(
      std::llround(static_cast<double>(x.size()) * to_rate / from_rate));
  std::vector<double> y(n_out);
  const auto n_in = static_cast<int64_t>(x.size());
  for (size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    auto i0 = static_cast<int64_t>(pos);
    if (i0 >= n_in - 1) {
      y[i] = x[static_cast<size_t>(n_in - 1)];
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    y[i] = x[static_cast<size_t>(i0)] * (1.0 - frac) +
           x[static_cast<size_t>(i0 + 1)] * frac;
  }
  return y;
}

}  // namespace dsp

// Decode a WAV or FLAC file (dispatched on magic bytes), downmix to mono by
// channel mean and resample to target_rate.
inline AudioClip load_audio(const std::string& path, int target_rate) {
  const std::vector<uint8_t> bytes = audio::read_file_bytes(path);
  audio::DecodedAudio decoded;
  if (audio::looks_like_wav(bytes))
    decoded = audio::decode_wav(bytes, path);
  else if (audio::looks_like_flac(bytes))
    decoded = audio::decode_flac(bytes, path);
  else
    throw UnsupportedFormat(path + ": unrecognized audio container");

  if (decoded.channels.empty() || decoded.channels[0].empty())
    throw UnreadableFile(path + ": decoded zero samples");

  const size_t n = decoded.channels[0].size();
  std::vector<double> mono(n, 0.0);
  for (const auto& ch : decoded.channels) {
    if (ch.size() != n) throw UnreadableFile(path + ": ragged channel lengths");
    for (size_t i = 0; i < n; ++i) mono[i] += ch[i];
  }
  const double inv = 1.0 / static_cast<double>(decoded.channels.size());
  for (double& v : mono) v *= inv;

  AudioClip clip;
  clip.sample_rate = target_rate;
  clip.samples = dsp::resample_linear(mono, decoded.sample_rate, target_rate);
  for (double v : clip.samples)
    if (!std::isfinite(v)) throw UnreadableFile(path + ": non-finite samples");
  return clip;
}

// Framing convention: T = ceil(n_samples / hop); frame t is a Hann-windowed
// slice centered on (t + 0.5) * hop with reflect padding at the edges, so a
// 1-second clip at 100 frames/s yields exactly 100 frames.
inline LogMelSpectrogram compute_logmel(const AudioClip& clip,
                                        const StftConfig& cfg) {
  cfg.validate();
  if (clip.samples.empty()) throw EmptyClip("compute_logmel: empty clip");
  if (clip.sample_rate != cfg.sample_rate)
    throw ConfigError("compute_logmel: clip rate " +
                      std::to_string(clip.sample_rate) +
                      " != config rate " + std::to_string(cfg.sample_rate));

  const auto n = static_cast<int64_t>(clip.samples.size());
  const int64_t T = (n + cfg.hop_length - 1) / cfg.hop_length;
  const int n_fft = dsp::next_pow2(cfg.window_size);
  const dsp::MelFilterbank bank(cfg.n_mels, n_fft, cfg.sample_rate);
  const std::vector<double> window = dsp::hann_window(cfg.window_size);

  LogMelSpectrogram out;
  out.values = nn::Tensor({T, cfg.n_mels});
  out.frame_rate_hz =
      static_cast<double>(cfg.sample_rate) / cfg.hop_length;
  out.silence_value = std::log(cfg.log_floor);

  std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft));
  std::vector<double> power(static_cast<size_t>(n_fft / 2 + 1));
  for (int64_t t = 0; t < T; ++t) {
    const int64_t center = t * cfg.hop_length + cfg.hop_length / 2;
    const int64_t start = center - cfg.window_size / 2;
    for (int i = 0; i < n_fft; ++i) {
      if (i < cfg.window_size) {
        const int64_t src = dsp::reflect_index(start + i, n);
        buf[i] = clip.samples[static_cast<size_t>(src)] * window[i];
      } else {
        buf[i] = 0.0;  // zero-pad up to the FFT size
      }
    }
    dsp::fft_pow2(buf);
    for (int k = 0; k <= n_fft / 2; ++k) power[k] = std::norm(buf[k]);
    for (int m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      const double* w = bank.weights.data() +
                        static_cast<size_t>(m) * (n_fft / 2 + 1);
      for (int k = 0; k <= n_fft / 2; ++k) e += w[k] * power[k];
      out.values.at2(t, m) = std::log(e + cfg.log_floor);
    }
  }
  return out;
}

// Pads T and F up to the next multiple of P * 2^depth with the silence value.
// Run before normalization so padded cells pick up the per-bin statistics.
inline LogMelSpectrogram pad_to_patch_multiple(const LogMelSpectrogram& spec,
                                               int patch_size, int depth) {
  if (patch_size < 1 || depth < 0)
    throw ConfigError("pad_to_patch_multiple: require P >= 1, depth >= 0");
  const int64_t multiple = static_cast<int64_t>(patch_size) << depth;
  const int64_t T = spec.frames(), F = spec.bins();
  const int64_t Tp = ((T + multiple - 1) / multiple) * multiple;
  const int64_t Fp = ((F + multiple - 1) / multiple) * multiple;
  if (Tp == T && Fp == F) return spec;

  LogMelSpectrogram out;
  out.frame_rate_hz = spec.frame_rate_hz;
  out.silence_value = spec.silence_value;
  out.values = nn::Tensor::full({Tp, Fp}, spec.silence_value);
  for (int64_t t = 0; t < T; ++t)
    for (int64_t f = 0; f < F; ++f)
      out.values.at2(t, f) = spec.values.at2(t, f);
  return out;
}

// Per-mel-bin standardization statistics, estimated on the training set and
// persisted with the checkpoint.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std_dev;

  bool empty() const { return mean.empty(); }

  static NormStats compute(const std::vector<const LogMelSpectrogram*>& specs) {
    if (specs.empty()) throw EmptyDataset("norm stats: no spectrograms");
    const int64_t F = specs.front()->bins();
    std::vector<double> sum(static_cast<size_t>(F), 0.0);
    std::vector<double> sumsq(static_cast<size_t>(F), 0.0);
    int64_t count = 0;
    for (const auto* s : specs) {
      if (s->bins() != F) throw ShapeMismatch("norm stats: bin count varies");
      for (int64_t t = 0; t < s->frames(); ++t)
        for (int64_t f = 0; f < F; ++f) {
          sum[f] += s->values.at2(t, f);
          sumsq[f] += s->values.at2(t, f) * s->values.at2(t, f);
        }
      count += s->frames();
    }
    NormStats stats;
    stats.mean.resize(static_cast<size_t>(F));
    stats.std_dev.resize(static_cast<size_t>(F));
    for (int64_t f = 0; f < F; ++f) {
      stats.mean[f] = sum[f] / static_cast<double>(count);
      const double var =
          sumsq[f] / static_cast<double>(count) - stats.mean[f] * stats.mean[f];
      stats.std_dev[f] = std::sqrt(var > 1e-12 ? var : 1e-12);
    }
    return stats;
  }

  void apply(LogMelSpectrogram& spec) const {
    if (empty()) return;
    const int64_t F = spec.bins();
    if (static_cast<int64_t>(mean.size()) != F)
      throw ShapeMismatch("norm stats: bin count mismatch");
    for (int64_t t = 0; t < spec.frames(); ++t)
      for (int64_t f = 0; f < F; ++f)
        spec.values.at2(t, f) =
            (spec.values.at2(t, f) - mean[f]) / std_dev[f];
  }
};

}  // namespace audiolog
