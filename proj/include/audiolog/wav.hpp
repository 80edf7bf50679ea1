// Copyright 2026 AudioLog Authors
// RIFF/WAVE reading (PCM 16/24/32-bit and IEEE float) and PCM16 writing.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "audiolog/error.hpp"

namespace audiolog::audio {

struct DecodedAudio {
  std::vector<std::vector<double>> channels;  // per channel, samples in [-1, 1]
  int sample_rate = 0;
};

namespace wav_detail {

inline uint32_t rd_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t rd_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace wav_detail

inline bool looks_like_wav(const std::vector<uint8_t>& bytes) {
  return bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
         std::memcmp(bytes.data() + 8, "WAVE", 4) == 0;
}

inline DecodedAudio decode_wav(const std::vector<uint8_t>& bytes,
                               const std::string& path_for_errors) {
  using namespace wav_detail;
  if (!looks_like_wav(bytes))
    throw UnsupportedFormat(path_for_errors + ": not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  size_t data_off = 0, data_len = 0;
  bool have_fmt = false;

  size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + off);
    const uint32_t len = rd_u32(bytes.data() + off + 4);
    const size_t body = off + 8;
    if (body + len > bytes.size()) {
      // data chunk sizes in the wild sometimes overrun; tolerate only there
      if (std::memcmp(id, "data", 4) == 0) {
        data_off = body;
        data_len = bytes.size() - body;
        break;
      }
      throw UnreadableFile(path_for_errors + ": truncated chunk");
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw UnreadableFile(path_for_errors + ": short fmt chunk");
      format = rd_u16(bytes.data() + body);
      channels = rd_u16(bytes.data() + body + 2);
      sample_rate = rd_u32(bytes.data() + body + 4);
      bits = rd_u16(bytes.data() + body + 14);
      if (format == 0xFFFE && len >= 40)  // WAVE_FORMAT_EXTENSIBLE
        format = rd_u16(bytes.data() + body + 24);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = len;
    }
    off = body + len + (len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data_off == 0)
    throw UnreadableFile(path_for_errors + ": missing fmt or data chunk");
  if (channels == 0 || sample_rate == 0)
    throw UnreadableFile(path_for_errors + ": invalid fmt chunk");

  const bool pcm = format == 1;
  const bool ieee = format == 3;
  if (!pcm && !ieee)
    throw UnsupportedFormat(path_for_errors + ": unsupported WAVE format tag " +
                            std::to_string(format));
  if (pcm && bits != 16 && bits != 24 && bits != 32)
    throw UnsupportedFormat(path_for_errors + ": unsupported PCM bit depth " +
                            std::to_string(bits));
  if (ieee && bits != 32 && bits != 64)
    throw UnsupportedFormat(path_for_errors + ": unsupported float bit depth");

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  if (frame_bytes == 0 || data_len < frame_bytes)
    throw UnreadableFile(path_for_errors + ": no audio frames");
  const size_t n_frames = data_len / frame_bytes;

  DecodedAudio out;
  out.sample_rate = static_cast<int>(sample_rate);
  out.channels.assign(channels, std::vector<double>(n_frames));
  const uint8_t* p = bytes.data() + data_off;
  for (size_t f = 0; f < n_frames; ++f) {
    for (int c = 0; c < channels; ++c) {
      const uint8_t* s = p + f * frame_bytes + c * bytes_per_sample;
      double v = 0.0;
      if (pcm && bits == 16) {
        int16_t raw = static_cast<int16_t>(s[0] | (s[1] << 8));
        v = raw / 32768.0;
      } else if (pcm && bits == 24) {
        int32_t raw = s[0] | (s[1] << 8) | (s[2] << 16);
        if (raw & 0x800000) raw |= ~0xFFFFFF;
        v = raw / 8388608.0;
      } else if (pcm && bits == 32) {
        int32_t raw = static_cast<int32_t>(rd_u32(s));
        v = raw / 2147483648.0;
      } else if (ieee && bits == 32) {
        float raw;
        std::memcpy(&raw, s, 4);
        v = raw;
      } else {  // ieee 64
        std::memcpy(&v, s, 8);
      }
      out.channels[c][f] = v;
    }
  }
  return out;
}

// Mono PCM16 writer, used for the synthetic dataset.
inline void write_wav_pcm16(const std::string& path,
                            const std::vector<double>& samples,
                            int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UnreadableFile(path + ": cannot open for writing");
  const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  auto w16 = [&](uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    os.write(b, 2);
  };
  auto w32 = [&](uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                 static_cast<char>((v >> 16) & 0xFF),
                 static_cast<char>((v >> 24) & 0xFF)};
    os.write(b, 4);
  };
  os.write("RIFF", 4);
  w32(36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  w32(16);
  w16(1);  // PCM
  w16(1);  // mono
  w32(static_cast<uint32_t>(sample_rate));
  w32(static_cast<uint32_t>(sample_rate * 2));
  w16(2);
  w16(16);
  os.write("data", 4);
  w32(data_len);
  for (double v : samples) {
    double clamped = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
    int32_t q = static_cast<int32_t>(std::lround(clamped * 32767.0));
    w16(static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  if (!os) throw UnreadableFile(path + ": write failed");
}

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UnreadableFile(path + ": cannot open");
  is.seekg(0, std::ios::end);
  const std::streamoff len = is.tellg();
  is.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(len));
  if (len > 0) is.read(reinterpret_cast<char*>(bytes.data()), len);
  if (!is) throw UnreadableFile(path + ": read failed");
  return bytes;
}

}  // namespace audiolog::audio
