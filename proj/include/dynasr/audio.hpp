// SPDX-License-Identifier: Apache-2.0
//
// PCM WAV decode/encode and integer <-> float sample conversion.
//
// Only RIFF/WAVE containers with format tag 1 (integer PCM) are accepted;
// 8- and 24-bit data is widened/narrowed to 16-bit on ingestion. Rounding is
// half away from zero everywhere so round trips are bit-exact.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "dynasr/error.hpp"

namespace dynasr {

struct AudioClip {
  std::vector<int16_t> samples;  // interleaved when channels > 1
  int sample_rate = 0;
  int channels = 1;

  size_t frame_count() const {
    return channels > 0 ? samples.size() / static_cast<size_t>(channels) : 0;
  }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(frame_count()) / sample_rate : 0.0;
  }
  bool operator==(const AudioClip&) const = default;
};

struct FloatClip {
  std::vector<float> samples;  // nominally in [-1, 1]
  int sample_rate = 0;
  int channels = 1;

  size_t frame_count() const {
    return channels > 0 ? samples.size() / static_cast<size_t>(channels) : 0;
  }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(frame_count()) / sample_rate : 0.0;
  }
};

// Half-away-from-zero rounding, the convention used for every int conversion.
inline int32_t round_half_away(double x) { return static_cast<int32_t>(std::llround(x)); }

namespace detail {

inline bool rate_supported(uint32_t rate) {
  switch (rate) {
    case 8000:
    case 16000:
    case 22050:
    case 44100:
    case 48000:
      return true;
    default:
      return false;
  }
}

inline uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}
inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

}  // namespace detail

// Decodes a RIFF/WAVE byte buffer. Unknown chunks are skipped; the fmt chunk
// must precede data. 8-bit samples are widened, 24-bit narrowed with rounding.
inline AudioClip decode_wav(std::span<const uint8_t> bytes) {
  using namespace detail;
  if (bytes.size() < 12) raise(Err::MalformedWav, "file shorter than RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0)
    raise(Err::MalformedWav, "missing RIFF magic");
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    raise(Err::MalformedWav, "missing WAVE form type");

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  uint32_t data_len = 0;
  bool have_data = false;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* hdr = bytes.data() + pos;
    uint32_t chunk_len = read_u32(hdr + 4);
    const uint8_t* body = hdr + 8;
    if (pos + 8 + chunk_len > bytes.size())
      raise(Err::MalformedWav, "chunk extends past end of file");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) raise(Err::MalformedWav, "fmt chunk too short");
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
      have_data = true;
      break;  // samples follow fmt; trailing chunks are irrelevant
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) raise(Err::MalformedWav, "no fmt chunk");
  if (!have_data) raise(Err::MalformedWav, "no data chunk");
  if (format != 1) raise(Err::UnsupportedEncoding, "only PCM (format 1) supported");
  if (channels == 0) raise(Err::MalformedWav, "zero channels");
  if (bits != 8 && bits != 16 && bits != 24)
    raise(Err::UnsupportedEncoding, "bit depth " + std::to_string(bits));
  if (!rate_supported(rate))
    raise(Err::UnsupportedEncoding, "sample rate " + std::to_string(rate));
  if (data_len == 0) raise(Err::EmptyAudio, "zero-length data chunk");

  const uint32_t bytes_per_sample = bits / 8;
  if (data_len % (bytes_per_sample * channels) != 0)
    raise(Err::MalformedWav, "data length not a whole number of frames");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.channels = channels;
  const size_t n = data_len / bytes_per_sample;
  clip.samples.resize(n);
  if (bits == 16) {
    for (size_t i = 0; i < n; ++i) {
      clip.samples[i] = static_cast<int16_t>(read_u16(data + 2 * i));
    }
  } else if (bits == 8) {
    // 8-bit WAV is unsigned with midpoint 128
    for (size_t i = 0; i < n; ++i) {
      clip.samples[i] = static_cast<int16_t>((static_cast<int>(data[i]) - 128) * 256);
    }
  } else {  // 24-bit
    for (size_t i = 0; i < n; ++i) {
      const uint8_t* p = data + 3 * i;
      int32_t v = static_cast<int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v -= 0x1000000;  // sign extend
      int32_t r = round_half_away(v / 256.0);
      clip.samples[i] = static_cast<int16_t>(std::clamp(r, -32768, 32767));
    }
  }
  return clip;
}

inline AudioClip decode_wav(const std::vector<uint8_t>& bytes) {
  return decode_wav(std::span<const uint8_t>(bytes));
}

// Emits a canonical 44-byte-header 16-bit PCM file. decode_wav(encode_wav(c)) == c.
inline std::vector<uint8_t> encode_wav(const AudioClip& clip) {
  using namespace detail;
  std::vector<uint8_t> out;
  const uint32_t data_len = static_cast<uint32_t>(clip.samples.size() * 2);
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, static_cast<uint16_t>(clip.channels));
  put_u32(out, static_cast<uint32_t>(clip.sample_rate));
  const uint32_t block_align = static_cast<uint32_t>(clip.channels) * 2;
  put_u32(out, static_cast<uint32_t>(clip.sample_rate) * block_align);
  put_u16(out, static_cast<uint16_t>(block_align));
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);
  for (int16_t s : clip.samples) put_u16(out, static_cast<uint16_t>(s));
  return out;
}

inline FloatClip to_float(const AudioClip& clip) {
  FloatClip f;
  f.sample_rate = clip.sample_rate;
  f.channels = clip.channels;
  f.samples.resize(clip.samples.size());
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    f.samples[i] = static_cast<float>(clip.samples[i] / 32768.0);
  }
  return f;
}

inline AudioClip from_float(const FloatClip& clip) {
  AudioClip a;
  a.sample_rate = clip.sample_rate;
  a.channels = clip.channels;
  a.samples.resize(clip.samples.size());
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    double v = std::clamp(static_cast<double>(clip.samples[i]), -1.0, 1.0);
    a.samples[i] = static_cast<int16_t>(round_half_away(v * 32767.0));
  }
  return a;
}

// Averages the channels of each frame into a single mono channel.
inline AudioClip downmix_mono(const AudioClip& clip) {
  if (clip.channels < 1) raise(Err::MalformedWav, "channel count must be >= 1");
  if (clip.channels == 1) return clip;
  AudioClip mono;
  mono.sample_rate = clip.sample_rate;
  mono.channels = 1;
  const size_t frames = clip.frame_count();
  mono.samples.resize(frames);
  for (size_t f = 0; f < frames; ++f) {
    double sum = 0.0;
    for (int c = 0; c < clip.channels; ++c)
      sum += clip.samples[f * clip.channels + c];
    mono.samples[f] = static_cast<int16_t>(round_half_away(sum / clip.channels));
  }
  return mono;
}

}  // namespace dynasr
