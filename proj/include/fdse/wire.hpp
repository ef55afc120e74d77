#ifndef FDSE_WIRE_HPP
#define FDSE_WIRE_HPP

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdse/frame.hpp"
#include "fdse/frame_io.hpp"

// Length-prefixed duplex stream protocol, little-endian:
//   magic u16 = 0xFD5E | type u8 | length u32 | payload[length]
// Frame payloads are K x u32 codes followed by the u64 step index.

namespace fdse::wire {

inline constexpr std::uint16_t kMagic = 0xFD5E;
inline constexpr std::size_t kHeaderBytes = 7;
inline constexpr std::uint32_t kMaxPayload = 1u << 20;

enum class MsgType : std::uint8_t {
  Config = 0,
  ListenFrame = 1,
  SpeakFrame = 2,
  TextToken = 3,
  Marker = 4,
  Error = 5,
  PcmChunk = 6,
};

enum class Errc : std::uint8_t {
  BadMagic = 0x01,
  UnknownType = 0x02,
  BadLength = 0x03,
  OutOfRange = 0x04,
  Stalled = 0x05,
  ConfigMismatch = 0x06,
  Internal = 0x07,
};

struct Message {
  MsgType type = MsgType::Config;
  std::vector<std::uint8_t> payload;
};

class WireError : public std::runtime_error {
 public:
  WireError(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

inline std::vector<std::uint8_t> encode(const Message& m) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + m.payload.size());
  le::put<std::uint16_t>(out, kMagic);
  out.push_back(static_cast<std::uint8_t>(m.type));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.payload.size()));
  out.insert(out.end(), m.payload.begin(), m.payload.end());
  return out;
}

inline Message frame_message(MsgType type, std::span<const TokenId> codes, std::uint64_t step) {
  Message m{type, {}};
  for (TokenId c : codes) le::put<std::uint32_t>(m.payload, c);
  le::put<std::uint64_t>(m.payload, step);
  return m;
}

inline Message text_message(TokenId id, std::uint64_t step) {
  Message m{MsgType::TextToken, {}};
  le::put<std::uint32_t>(m.payload, id);
  le::put<std::uint64_t>(m.payload, step);
  return m;
}

inline Message marker_message(std::uint64_t step, MarkerKind kind) {
  Message m{MsgType::Marker, {}};
  le::put<std::uint64_t>(m.payload, step);
  m.payload.push_back(static_cast<std::uint8_t>(kind));
  return m;
}

inline Message error_message(Errc code, const std::string& text) {
  Message m{MsgType::Error, {static_cast<std::uint8_t>(code)}};
  m.payload.insert(m.payload.end(), text.begin(), text.end());
  return m;
}

inline Message config_message(const StreamConfig& cfg) {
  Message m{MsgType::Config, {}};
  write_config_block(m.payload, cfg);
  return m;
}

inline Message pcm_message(std::span<const float> samples) {
  Message m{MsgType::PcmChunk, {}};
  for (float s : samples) {
    const double c = s < -1.0f ? -1.0 : s > 1.0f ? 1.0 : static_cast<double>(s);
    const auto v = static_cast<std::int16_t>(c >= 0 ? c * 32767.0 + 0.5 : c * 32768.0 - 0.5);
    le::put<std::uint16_t>(m.payload, static_cast<std::uint16_t>(v));
  }
  return m;
}

struct DecodedFrame {
  std::vector<TokenId> codes;
  std::uint64_t step = 0;
};

inline DecodedFrame decode_frame(const Message& m, const StreamConfig& cfg) {
  const std::size_t k = cfg.num_codebooks;
  if (m.payload.size() != 4 * k + 8)
    throw WireError(Errc::BadLength, "frame payload of " + std::to_string(m.payload.size()) + " bytes");
  DecodedFrame f;
  f.codes.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    f.codes[i] = le::get<std::uint32_t>(m.payload.data() + 4 * i);
    if (f.codes[i] >= cfg.audio_vocab_size)
      throw WireError(Errc::OutOfRange, "code " + std::to_string(f.codes[i]) + " out of range");
  }
  f.step = le::get<std::uint64_t>(m.payload.data() + 4 * k);
  return f;
}

inline std::pair<TokenId, std::uint64_t> decode_text(const Message& m) {
  if (m.payload.size() != 12) throw WireError(Errc::BadLength, "text payload must be 12 bytes");
  return {le::get<std::uint32_t>(m.payload.data()), le::get<std::uint64_t>(m.payload.data() + 4)};
}

inline Marker decode_marker(const Message& m) {
  if (m.payload.size() != 9) throw WireError(Errc::BadLength, "marker payload must be 9 bytes");
  return {le::get<std::uint64_t>(m.payload.data()), static_cast<MarkerKind>(m.payload[8])};
}

inline std::pair<Errc, std::string> decode_error(const Message& m) {
  if (m.payload.empty()) throw WireError(Errc::BadLength, "empty error payload");
  return {static_cast<Errc>(m.payload[0]), std::string(m.payload.begin() + 1, m.payload.end())};
}

inline StreamConfig decode_config(const Message& m) {
  if (m.payload.size() != kConfigBlockBytes) throw WireError(Errc::BadLength, "config payload size");
  le::Reader r(m.payload);
  return read_config_block(r);
}

inline std::vector<float> decode_pcm(const Message& m) {
  if (m.payload.size() % 2 != 0) throw WireError(Errc::BadLength, "odd pcm payload");
  std::vector<float> out(m.payload.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(static_cast<std::int16_t>(le::get<std::uint16_t>(m.payload.data() + 2 * i))) / 32768.0f;
  return out;
}

/// Incremental parser over a byte stream.
class Decoder {
 public:
  void feed(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  /// Next complete message, nullopt if more bytes are needed. Throws
  /// WireError on a malformed header.
  std::optional<Message> next() {
    if (buf_.size() < kHeaderBytes) {
      if (buf_.size() >= 2) check_magic();
      return std::nullopt;
    }
    check_magic();
    std::uint8_t hdr[kHeaderBytes];
    std::copy_n(buf_.begin(), kHeaderBytes, hdr);
    const auto type = hdr[2];
    const auto len = le::get<std::uint32_t>(hdr + 3);
    if (type > static_cast<std::uint8_t>(MsgType::PcmChunk))
      throw WireError(Errc::UnknownType, "unknown message type " + std::to_string(type));
    if (len > kMaxPayload) throw WireError(Errc::BadLength, "payload of " + std::to_string(len) + " bytes");
    if (buf_.size() < kHeaderBytes + len) return std::nullopt;
    Message m{static_cast<MsgType>(type), std::vector<std::uint8_t>(buf_.begin() + kHeaderBytes,
                                                                    buf_.begin() + kHeaderBytes + len)};
    buf_.erase(buf_.begin(), buf_.begin() + kHeaderBytes + len);
    return m;
  }

  std::size_t buffered() const { return buf_.size(); }

 private:
  void check_magic() const {
    const std::uint16_t magic = static_cast<std::uint16_t>(buf_[0] | (buf_[1] << 8));
    if (magic != kMagic) throw WireError(Errc::BadMagic, "bad magic");
  }

  std::deque<std::uint8_t> buf_;
};

}  // namespace fdse::wire

#endif  // FDSE_WIRE_HPP
