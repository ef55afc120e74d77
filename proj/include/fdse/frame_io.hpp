#ifndef FDSE_FRAME_IO_HPP
#define FDSE_FRAME_IO_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdse/frame.hpp"

// Binary frame file, all integers little-endian:
//   "FDSE" | version u16 | config block (10 x u32) | frame count u64
//   | frames: count x (1 + 2K) x u32  (text, listen[0..K), speak[0..K))
//   | labels: count x (1 + 2K) x u8
//   | markers: count u32, then (step u64, kind u8) entries

namespace fdse {

inline constexpr std::array<char, 4> kFrameMagic{'F', 'D', 'S', 'E'};
inline constexpr std::uint16_t kFrameVersion = 1;
inline constexpr std::size_t kConfigBlockBytes = 10 * 4;
inline constexpr std::size_t kHeaderBytes = 4 + 2 + kConfigBlockBytes + 8;

enum class FormatErrc {
  BadMagic,
  VersionMismatch,
  Truncated,
  OutOfRange,
  InvalidConfig,
  InvalidSequence,
};

inline const char* to_string(FormatErrc e) {
  switch (e) {
    case FormatErrc::BadMagic: return "bad magic";
    case FormatErrc::VersionMismatch: return "version mismatch";
    case FormatErrc::Truncated: return "truncated payload";
    case FormatErrc::OutOfRange: return "token id out of range";
    case FormatErrc::InvalidConfig: return "invalid config";
    case FormatErrc::InvalidSequence: return "invalid sequence";
  }
  return "?";
}

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, std::string what, std::optional<std::uint64_t> frame = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), frame_(frame) {}

  FormatErrc code() const { return code_; }
  /// Index of the frame being decoded when the error was hit, if any.
  std::optional<std::uint64_t> frame() const { return frame_; }

 private:
  FormatErrc code_;
  std::optional<std::uint64_t> frame_;
};

namespace le {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

/// Bounds-checked cursor over a byte buffer.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool has(std::size_t n) const { return remaining() >= n; }

  template <typename T>
  T take() {
    T v = get<T>(bytes_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace le

inline void write_config_block(std::vector<std::uint8_t>& out, const StreamConfig& c) {
  le::put<std::uint32_t>(out, c.frame_rate_hz.num);
  le::put<std::uint32_t>(out, c.frame_rate_hz.den);
  le::put<std::uint32_t>(out, c.num_codebooks);
  le::put<std::uint32_t>(out, c.audio_vocab_size);
  le::put<std::uint32_t>(out, c.text_vocab_base);
  le::put<std::uint32_t>(out, c.sample_rate_hz);
  le::put<std::uint32_t>(out, c.hop_samples);
  le::put<std::uint32_t>(out, c.max_seq_len);
  le::put<std::uint32_t>(out, c.text_lead_steps);
  le::put<std::uint32_t>(out, c.acoustic_delay_steps);
}

/// Caller checks that kConfigBlockBytes are available.
inline StreamConfig read_config_block(le::Reader& r) {
  StreamConfig c;
  c.frame_rate_hz.num = r.take<std::uint32_t>();
  c.frame_rate_hz.den = r.take<std::uint32_t>();
  c.num_codebooks = r.take<std::uint32_t>();
  c.audio_vocab_size = r.take<std::uint32_t>();
  c.text_vocab_base = r.take<std::uint32_t>();
  c.sample_rate_hz = r.take<std::uint32_t>();
  c.hop_samples = r.take<std::uint32_t>();
  c.max_seq_len = r.take<std::uint32_t>();
  c.text_lead_steps = r.take<std::uint32_t>();
  c.acoustic_delay_steps = r.take<std::uint32_t>();
  return c;
}

inline std::vector<std::uint8_t> serialize_frames(const FrameSequence& seq) {
  const std::size_t slots = seq.slots();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + seq.size() * slots * 5 + 4 + seq.markers.size() * 9);
  out.insert(out.end(), kFrameMagic.begin(), kFrameMagic.end());
  le::put<std::uint16_t>(out, kFrameVersion);
  write_config_block(out, seq.config);
  le::put<std::uint64_t>(out, seq.size());
  for (const Frame& f : seq.frames) {
    le::put<std::uint32_t>(out, f.text);
    for (TokenId id : f.listen) le::put<std::uint32_t>(out, id);
    for (TokenId id : f.speak) le::put<std::uint32_t>(out, id);
  }
  for (SupervisionClass c : seq.supervision) out.push_back(static_cast<std::uint8_t>(c));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.markers.size()));
  for (const Marker& m : seq.markers) {
    le::put<std::uint64_t>(out, m.step);
    out.push_back(static_cast<std::uint8_t>(m.kind));
  }
  return out;
}

inline FrameSequence deserialize_frames(std::span<const std::uint8_t> bytes) {
  le::Reader r(bytes);
  if (bytes.size() < kFrameMagic.size() ||
      std::memcmp(bytes.data(), kFrameMagic.data(), kFrameMagic.size()) != 0)
    throw FormatError(FormatErrc::BadMagic, "expected \"FDSE\"");
  r.take<std::uint32_t>();
  if (!r.has(2)) throw FormatError(FormatErrc::Truncated, "header");
  const auto version = r.take<std::uint16_t>();
  if (version != kFrameVersion)
    throw FormatError(FormatErrc::VersionMismatch, "file version " + std::to_string(version) +
                                                       ", reader version " +
                                                       std::to_string(kFrameVersion));
  if (!r.has(kConfigBlockBytes + 8)) throw FormatError(FormatErrc::Truncated, "header");
  FrameSequence seq(read_config_block(r));
  const StreamConfig& cfg = seq.config;
  if (auto errs = cfg.check(); !errs.empty()) throw FormatError(FormatErrc::InvalidConfig, errs.front());

  const auto count = r.take<std::uint64_t>();
  const std::size_t k = cfg.num_codebooks;
  const std::size_t frame_bytes = cfg.slots_per_frame() * 4;
  if (count > r.remaining() / frame_bytes)
    throw FormatError(FormatErrc::Truncated,
                      "frame " + std::to_string(r.remaining() / frame_bytes) + " of " +
                          std::to_string(count) + " is incomplete",
                      r.remaining() / frame_bytes);

  seq.frames.resize(count);
  for (std::uint64_t t = 0; t < count; ++t) {
    Frame& f = seq.frames[t];
    f.text = r.take<std::uint32_t>();
    if (f.text >= cfg.text_vocab_size())
      throw FormatError(FormatErrc::OutOfRange,
                        "frame " + std::to_string(t) + " text id " + std::to_string(f.text), t);
    f.listen.resize(k);
    f.speak.resize(k);
    for (auto* ch : {&f.listen, &f.speak})
      for (auto& id : *ch) {
        id = r.take<std::uint32_t>();
        if (id >= cfg.audio_vocab_size)
          throw FormatError(FormatErrc::OutOfRange,
                            "frame " + std::to_string(t) + " audio id " + std::to_string(id), t);
      }
  }

  const std::size_t slots = cfg.slots_per_frame();
  if (!r.has(count * slots))
    throw FormatError(FormatErrc::Truncated,
                      "labels of frame " + std::to_string(r.remaining() / slots) + " are incomplete",
                      r.remaining() / slots);
  seq.supervision.resize(count * slots);
  for (std::size_t i = 0; i < seq.supervision.size(); ++i) {
    const auto v = r.take<std::uint8_t>();
    if (v >= kNumSupervisionClasses)
      throw FormatError(FormatErrc::OutOfRange, "label value " + std::to_string(v), i / slots);
    seq.supervision[i] = static_cast<SupervisionClass>(v);
  }

  if (!r.has(4)) throw FormatError(FormatErrc::Truncated, "marker table");
  const auto n_markers = r.take<std::uint32_t>();
  if (n_markers > r.remaining() / 9)
    throw FormatError(FormatErrc::Truncated,
                      "marker " + std::to_string(r.remaining() / 9) + " is incomplete");
  seq.markers.reserve(n_markers);
  for (std::uint32_t i = 0; i < n_markers; ++i) {
    const auto step = r.take<std::uint64_t>();
    const auto kind = r.take<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(MarkerKind::Cutoff))
      throw FormatError(FormatErrc::OutOfRange, "marker kind " + std::to_string(kind));
    seq.markers.push_back({step, static_cast<MarkerKind>(kind)});
  }

  if (auto v = validate(seq); !v.empty())
    throw FormatError(FormatErrc::InvalidSequence, v.front().describe(), v.front().frame);
  return seq;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

inline FrameSequence load_frames(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return deserialize_frames(bytes);
}

inline void save_frames(const std::string& path, const FrameSequence& seq) {
  write_file_bytes(path, serialize_frames(seq));
}

}  // namespace fdse

#endif  // FDSE_FRAME_IO_HPP
