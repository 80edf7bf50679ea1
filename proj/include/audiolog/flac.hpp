// Copyright 2026 AudioLog Authors
// Minimal native FLAC decoder: constant, verbatim, fixed and LPC subframes,
// all stereo decorrelation modes, Rice-coded residuals.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "audiolog/error.hpp"
#include "audiolog/wav.hpp"

namespace audiolog::audio {

namespace flac_detail {

class BitReader {
 public:
  BitReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

  uint64_t read_bits(int n) {
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | read_bit();
    return v;
  }

  int read_bit() {
    if (byte_ >= size_) throw UnreadableFile("flac: unexpected end of stream");
    int b = (data_[byte_] >> (7 - bit_)) & 1;
    if (++bit_ == 8) {
      bit_ = 0;
      ++byte_;
    }
    return b;
  }

  int64_t read_signed(int n) {
    uint64_t v = read_bits(n);
    if (n > 0 && (v & (1ULL << (n - 1)))) v |= ~((1ULL << n) - 1);
    return static_cast<int64_t>(v);
  }

  uint64_t read_unary() {
    uint64_t q = 0;
    while (read_bit() == 0) ++q;
    return q;
  }

  void align_to_byte() {
    if (bit_ != 0) {
      bit_ = 0;
      ++byte_;
    }
  }

  size_t byte_pos() const { return byte_; }
  bool at_end() const { return byte_ >= size_; }

 private:
  const uint8_t* data_;
  size_t size_;
  size_t byte_ = 0;
  int bit_ = 0;
};

inline uint8_t crc8(const uint8_t* data, size_t len) {
  uint8_t crc = 0;
  for (size_t i = 0; i < len; ++i) {
    crc ^= data[i];
    for (int b = 0; b < 8; ++b)
      crc = (crc & 0x80) ? static_cast<uint8_t>((crc << 1) ^ 0x07)
                         : static_cast<uint8_t>(crc << 1);
  }
  return crc;
}

inline uint16_t crc16(const uint8_t* data, size_t len) {
  uint16_t crc = 0;
  for (size_t i = 0; i < len; ++i) {
    crc ^= static_cast<uint16_t>(data[i]) << 8;
    for (int b = 0; b < 8; ++b)
      crc = (crc & 0x8000) ? static_cast<uint16_t>((crc << 1) ^ 0x8005)
                           : static_cast<uint16_t>(crc << 1);
  }
  return crc;
}

// Frame/sample numbers use a UTF-8-style variable length code; the value is
// not needed for sequential decoding, only consumed.
inline void skip_coded_number(BitReader& br) {
  uint64_t first = br.read_bits(8);
  int extra = 0;
  if ((first & 0x80) == 0)
    extra = 0;
  else if ((first & 0xE0) == 0xC0)
    extra = 1;
  else if ((first & 0xF0) == 0xE0)
    extra = 2;
  else if ((first & 0xF8) == 0xF0)
    extra = 3;
  else if ((first & 0xFC) == 0xF8)
    extra = 4;
  else if ((first & 0xFE) == 0xFC)
    extra = 5;
  else if (first == 0xFE)
    extra = 6;
  else
    throw UnreadableFile("flac: bad coded number");
  for (int i = 0; i < extra; ++i) {
    if ((br.read_bits(8) & 0xC0) != 0x80)
      throw UnreadableFile("flac: bad coded number continuation");
  }
}

inline void decode_residual(BitReader& br, int block_size, int predictor_order,
                            std::vector<int64_t>& out) {
  const int method = static_cast<int>(br.read_bits(2));
  if (method > 1) throw UnreadableFile("flac: reserved residual method");
  const int param_bits = method == 0 ? 4 : 5;
  const int escape = method == 0 ? 0x0F : 0x1F;
  const int partition_order = static_cast<int>(br.read_bits(4));
  const int partitions = 1 << partition_order;
  if (block_size % partitions != 0)
    throw UnreadableFile("flac: bad partition order");
  const int part_len = block_size >> partition_order;
  if (part_len < predictor_order)
    throw UnreadableFile("flac: partition shorter than predictor order");
  int sample = predictor_order;
  for (int p = 0; p < partitions; ++p) {
    const int count = (p == 0) ? part_len - predictor_order : part_len;
    const int rice = static_cast<int>(br.read_bits(param_bits));
    if (rice == escape) {
      const int raw_bits = static_cast<int>(br.read_bits(5));
      for (int i = 0; i < count; ++i)
        out[static_cast<size_t>(sample++)] =
            raw_bits == 0 ? 0 : br.read_signed(raw_bits);
    } else {
      for (int i = 0; i < count; ++i) {
        const uint64_t q = br.read_unary();
        const uint64_t r = rice == 0 ? 0 : br.read_bits(rice);
        const uint64_t zz = (q << rice) | r;
        out[static_cast<size_t>(sample++)] =
            static_cast<int64_t>(zz >> 1) ^ -static_cast<int64_t>(zz & 1);
      }
    }
  }
}

inline void decode_subframe(BitReader& br, int block_size, int bps,
                            std::vector<int64_t>& out) {
  if (br.read_bit() != 0) throw UnreadableFile("flac: subframe padding bit set");
  const int type = static_cast<int>(br.read_bits(6));
  int wasted = 0;
  if (br.read_bit() == 1) wasted = 1 + static_cast<int>(br.read_unary());
  const int eff_bps = bps - wasted;

  out.assign(static_cast<size_t>(block_size), 0);
  if (type == 0) {  // CONSTANT
    const int64_t v = br.read_signed(eff_bps);
    std::fill(out.begin(), out.end(), v);
  } else if (type == 1) {  // VERBATIM
    for (int i = 0; i < block_size; ++i) out[i] = br.read_signed(eff_bps);
  } else if ((type & 0x38) == 0x08 && (type & 0x07) <= 4) {  // FIXED
    const int order = type & 0x07;
    for (int i = 0; i < order; ++i) out[i] = br.read_signed(eff_bps);
    decode_residual(br, block_size, order, out);
    for (int i = order; i < block_size; ++i) {
      switch (order) {
        case 0: break;
        case 1: out[i] += out[i - 1]; break;
        case 2: out[i] += 2 * out[i - 1] - out[i - 2]; break;
        case 3: out[i] += 3 * out[i - 1] - 3 * out[i - 2] + out[i - 3]; break;
        case 4:
          out[i] += 4 * out[i - 1] - 6 * out[i - 2] + 4 * out[i - 3] -
                    out[i - 4];
          break;
      }
    }
  } else if (type & 0x20) {  // LPC
    const int order = (type & 0x1F) + 1;
    for (int i = 0; i < order; ++i) out[i] = br.read_signed(eff_bps);
    const int precision = static_cast<int>(br.read_bits(4)) + 1;
    if (precision == 16) throw UnreadableFile("flac: invalid LPC precision");
    const int shift = static_cast<int>(br.read_signed(5));
    if (shift < 0) throw UnreadableFile("flac: negative LPC shift");
    std::vector<int64_t> coefs(static_cast<size_t>(order));
    for (int i = 0; i < order; ++i) coefs[i] = br.read_signed(precision);
    decode_residual(br, block_size, order, out);
    for (int i = order; i < block_size; ++i) {
      int64_t pred = 0;
      for (int j = 0; j < order; ++j) pred += coefs[j] * out[i - 1 - j];
      out[i] += pred >> shift;
    }
  } else {
    throw UnreadableFile("flac: reserved subframe type");
  }

  if (wasted > 0)
    for (auto& v : out) v <<= wasted;
}

}  // namespace flac_detail

inline bool looks_like_flac(const std::vector<uint8_t>& bytes) {
  return bytes.size() >= 4 && bytes[0] == 'f' && bytes[1] == 'L' &&
         bytes[2] == 'a' && bytes[3] == 'C';
}

inline DecodedAudio decode_flac(const std::vector<uint8_t>& bytes,
                                const std::string& path_for_errors) {
  using namespace flac_detail;
  if (!looks_like_flac(bytes))
    throw UnsupportedFormat(path_for_errors + ": not a FLAC stream");

  BitReader br(bytes.data(), bytes.size());
  br.read_bits(32);  // fLaC

  int si_sample_rate = 0, si_channels = 0, si_bps = 0;
  uint64_t si_total_samples = 0;
  bool have_streaminfo = false;

  bool last = false;
  while (!last) {
    last = br.read_bit() == 1;
    const int type = static_cast<int>(br.read_bits(7));
    const uint32_t len = static_cast<uint32_t>(br.read_bits(24));
    if (type == 0) {  // STREAMINFO
      if (len != 34) throw UnreadableFile(path_for_errors + ": bad STREAMINFO");
      br.read_bits(16);  // min block size
      br.read_bits(16);  // max block size
      br.read_bits(24);  // min frame size
      br.read_bits(24);  // max frame size
      si_sample_rate = static_cast<int>(br.read_bits(20));
      si_channels = static_cast<int>(br.read_bits(3)) + 1;
      si_bps = static_cast<int>(br.read_bits(5)) + 1;
      si_total_samples = br.read_bits(36);
      br.read_bits(64);  // md5
      br.read_bits(64);
      have_streaminfo = true;
    } else {
      for (uint32_t i = 0; i < len; ++i) br.read_bits(8);
    }
  }
  if (!have_streaminfo || si_sample_rate == 0)
    throw UnreadableFile(path_for_errors + ": missing STREAMINFO");

  DecodedAudio out;
  out.sample_rate = si_sample_rate;
  out.channels.assign(static_cast<size_t>(si_channels), {});

  static const int kBlockSizes[] = {0,   192, 576,  1152, 2304, 4608, -1, -2,
                                    256, 512, 1024, 2048, 4096, 8192, 16384,
                                    32768};
  static const int kSampleSizes[] = {0, 8, 12, 0, 16, 20, 24, 32};

  uint64_t decoded = 0;
  while (!br.at_end()) {
    if (si_total_samples > 0 && decoded >= si_total_samples) break;
    const size_t header_start = br.byte_pos();
    uint64_t sync = br.read_bits(14);
    if (sync != 0x3FFE)
      throw UnreadableFile(path_for_errors + ": lost frame sync");
    br.read_bit();  // reserved
    br.read_bit();  // blocking strategy
    const int bs_code = static_cast<int>(br.read_bits(4));
    const int sr_code = static_cast<int>(br.read_bits(4));
    const int ch_code = static_cast<int>(br.read_bits(4));
    const int ss_code = static_cast<int>(br.read_bits(3));
    br.read_bit();  // reserved
    skip_coded_number(br);

    int block_size;
    if (bs_code == 0) throw UnreadableFile(path_for_errors + ": reserved block size");
    if (bs_code == 6)
      block_size = static_cast<int>(br.read_bits(8)) + 1;
    else if (bs_code == 7)
      block_size = static_cast<int>(br.read_bits(16)) + 1;
    else
      block_size = kBlockSizes[bs_code];

    if (sr_code == 12) br.read_bits(8);
    else if (sr_code == 13 || sr_code == 14) br.read_bits(16);
    else if (sr_code == 15)
      throw UnreadableFile(path_for_errors + ": invalid sample rate code");

    const int bps = ss_code == 0 ? si_bps : kSampleSizes[ss_code];
    if (bps == 0) throw UnreadableFile(path_for_errors + ": reserved sample size");

    const uint8_t expect_crc8 = static_cast<uint8_t>(br.read_bits(8));
    const uint8_t got_crc8 =
        crc8(bytes.data() + header_start, br.byte_pos() - 1 - header_start);
    if (expect_crc8 != got_crc8)
      throw UnreadableFile(path_for_errors + ": frame header CRC mismatch");

    int n_channels;
    enum { kIndep, kLeftSide, kRightSide, kMidSide } mode = kIndep;
    if (ch_code < 8) {
      n_channels = ch_code + 1;
    } else if (ch_code == 8) {
      n_channels = 2; mode = kLeftSide;
    } else if (ch_code == 9) {
      n_channels = 2; mode = kRightSide;
    } else if (ch_code == 10) {
      n_channels = 2; mode = kMidSide;
    } else {
      throw UnreadableFile(path_for_errors + ": reserved channel assignment");
    }
    if (n_channels != si_channels)
      throw UnreadableFile(path_for_errors + ": channel count changed mid-stream");

    std::vector<std::vector<int64_t>> chan(static_cast<size_t>(n_channels));
    for (int c = 0; c < n_channels; ++c) {
      int sub_bps = bps;
      if ((mode == kLeftSide && c == 1) || (mode == kRightSide && c == 0) ||
          (mode == kMidSide && c == 1))
        sub_bps += 1;  // side channel carries one extra bit
      decode_subframe(br, block_size, sub_bps, chan[static_cast<size_t>(c)]);
    }
    br.align_to_byte();
    const uint16_t expect_crc16 = static_cast<uint16_t>(br.read_bits(16));
    const uint16_t got_crc16 =
        crc16(bytes.data() + header_start, br.byte_pos() - 2 - header_start);
    if (expect_crc16 != got_crc16)
      throw UnreadableFile(path_for_errors + ": frame CRC mismatch");

    // Undo stereo decorrelation.
    if (mode == kLeftSide) {
      for (int i = 0; i < block_size; ++i) chan[1][i] = chan[0][i] - chan[1][i];
    } else if (mode == kRightSide) {
      for (int i = 0; i < block_size; ++i) chan[0][i] = chan[0][i] + chan[1][i];
    } else if (mode == kMidSide) {
      for (int i = 0; i < block_size; ++i) {
        const int64_t side = chan[1][i];
        int64_t mid = (chan[0][i] << 1) | (side & 1);
        chan[0][i] = (mid + side) >> 1;
        chan[1][i] = (mid - side) >> 1;
      }
    }

    const double denom = static_cast<double>(1LL << (bps - 1));
    int take = block_size;
    if (si_total_samples > 0 &&
        decoded + static_cast<uint64_t>(block_size) > si_total_samples)
      take = static_cast<int>(si_total_samples - decoded);
    for (int c = 0; c < n_channels; ++c)
      for (int i = 0; i < take; ++i)
        out.channels[static_cast<size_t>(c)].push_back(
            static_cast<double>(chan[static_cast<size_t>(c)][i]) / denom);
    decoded += static_cast<uint64_t>(take);
  }

  return out;
}

}  // namespace audiolog::audio
