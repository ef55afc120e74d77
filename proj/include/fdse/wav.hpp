#ifndef FDSE_WAV_HPP
#define FDSE_WAV_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdse/codec.hpp"
#include "fdse/frame_io.hpp"

namespace fdse {

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a RIFF/WAVE buffer. Only 16-bit PCM mono is accepted; when
/// `expected_rate` is set, any other sample rate is rejected (no resampling).
inline Waveform parse_wav(std::span<const std::uint8_t> bytes,
                          std::optional<std::uint32_t> expected_rate = std::nullopt) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw WavError("not a RIFF/WAVE file");
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const auto size = le::get<std::uint32_t>(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(id, "data", 4) != 0) throw WavError("truncated chunk");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw WavError("fmt chunk too small");
      format = le::get<std::uint16_t>(bytes.data() + body);
      channels = le::get<std::uint16_t>(bytes.data() + body + 2);
      rate = le::get<std::uint32_t>(bytes.data() + body + 4);
      bits = le::get<std::uint16_t>(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw WavError("data chunk before fmt chunk");
      if (format != 1 || bits != 16) throw WavError("only 16-bit PCM is supported");
      if (channels != 1) throw WavError("only mono is supported, file has " + std::to_string(channels) + " channels");
      if (expected_rate && rate != *expected_rate)
        throw WavError("sample rate " + std::to_string(rate) + " Hz, expected " + std::to_string(*expected_rate) +
                       " Hz");
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      Waveform w;
      w.sample_rate_hz = rate;
      w.samples.resize(avail / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(le::get<std::uint16_t>(bytes.data() + body + 2 * i));
        w.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw WavError("no data chunk");
}

inline std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  std::vector<std::uint8_t> out;
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  le::put<std::uint32_t>(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  le::put<std::uint32_t>(out, 16);
  le::put<std::uint16_t>(out, 1);
  le::put<std::uint16_t>(out, 1);
  le::put<std::uint32_t>(out, w.sample_rate_hz);
  le::put<std::uint32_t>(out, w.sample_rate_hz * 2);
  le::put<std::uint16_t>(out, 2);
  le::put<std::uint16_t>(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  le::put<std::uint32_t>(out, data_bytes);
  for (float s : w.samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(std::clamp(c * 32768.0, -32768.0, 32767.0)));
    le::put<std::uint16_t>(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

inline Waveform read_wav(const std::string& path, std::optional<std::uint32_t> expected_rate = std::nullopt) {
  try {
    return parse_wav(read_file_bytes(path), expected_rate);
  } catch (const WavError& e) {
    throw WavError(path + ": " + e.what());
  }
}

inline void write_wav(const std::string& path, const Waveform& w) { write_file_bytes(path, encode_wav(w)); }

}  // namespace fdse

#endif  // FDSE_WAV_HPP
