#ifndef FDSE_FRAME_HPP
#define FDSE_FRAME_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdse {

using TokenId = std::uint32_t;

struct Rational {
  std::uint32_t num = 25;
  std::uint32_t den = 2;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

/// Special text tokens live directly above the base vocabulary, in this order.
enum class Special : std::uint32_t { Wait = 0, AsrBegin = 1, Answer = 2, Pad = 3, Bos = 4 };
inline constexpr std::uint32_t kNumSpecialTokens = 5;

struct StreamConfig {
  Rational frame_rate_hz{25, 2};
  std::uint32_t num_codebooks = 8;
  std::uint32_t audio_vocab_size = 2049;
  std::uint32_t text_vocab_base = 32000;
  std::uint32_t sample_rate_hz = 24000;
  std::uint32_t hop_samples = 1920;
  std::uint32_t max_seq_len = 8192;
  std::uint32_t text_lead_steps = 2;
  std::uint32_t acoustic_delay_steps = 1;

  TokenId empty_audio_id() const { return audio_vocab_size - 1; }
  TokenId special(Special s) const { return text_vocab_base + static_cast<std::uint32_t>(s); }
  TokenId wait_id() const { return special(Special::Wait); }
  TokenId asr_begin_id() const { return special(Special::AsrBegin); }
  TokenId answer_id() const { return special(Special::Answer); }
  TokenId pad_id() const { return special(Special::Pad); }
  TokenId bos_id() const { return special(Special::Bos); }
  std::uint32_t text_vocab_size() const { return text_vocab_base + kNumSpecialTokens; }

  bool is_ordinary_text(TokenId id) const { return id < text_vocab_base; }

  /// 1 text + K listen + K speak.
  std::size_t slots_per_frame() const { return 1 + 2 * static_cast<std::size_t>(num_codebooks); }
  std::size_t listen_slot(std::size_t codebook) const { return 1 + codebook; }
  std::size_t speak_slot(std::size_t codebook) const { return 1 + num_codebooks + codebook; }

  double frame_period_ms() const { return 1000.0 / frame_rate_hz.value(); }

  /// round(seconds * frame_rate), half away from zero.
  std::uint64_t seconds_to_frames(double seconds) const {
    const double f = seconds * frame_rate_hz.value();
    return f <= 0 ? 0 : static_cast<std::uint64_t>(f + 0.5);
  }

  /// Broken invariants, empty when the configuration is usable.
  std::vector<std::string> check() const {
    std::vector<std::string> out;
    if (frame_rate_hz.num == 0 || frame_rate_hz.den == 0) out.emplace_back("frame_rate must be positive");
    if (static_cast<std::uint64_t>(hop_samples) * frame_rate_hz.num !=
        static_cast<std::uint64_t>(sample_rate_hz) * frame_rate_hz.den)
      out.emplace_back("hop_samples * frame_rate_hz != sample_rate_hz");
    if (audio_vocab_size < 2) out.emplace_back("audio_vocab_size < 2");
    if (num_codebooks == 0) out.emplace_back("num_codebooks must be positive");
    if (acoustic_delay_steps > 1) out.emplace_back("acoustic_delay_steps must be 0 or 1");
    if (max_seq_len == 0) out.emplace_back("max_seq_len must be positive");
    return out;
  }

  void require_valid() const {
    auto errs = check();
    if (!errs.empty()) throw std::invalid_argument("invalid StreamConfig: " + errs.front());
  }

  bool operator==(const StreamConfig&) const = default;
};

/// One timestep: 1 text token, K listen codes, K speak codes.
struct Frame {
  TokenId text = 0;
  std::vector<TokenId> listen;
  std::vector<TokenId> speak;

  /// Text token over silent listen/speak channels.
  static Frame filler(const StreamConfig& cfg, TokenId text) {
    return Frame{text, std::vector<TokenId>(cfg.num_codebooks, cfg.empty_audio_id()),
                 std::vector<TokenId>(cfg.num_codebooks, cfg.empty_audio_id())};
  }

  bool operator==(const Frame&) const = default;
};

enum class SupervisionClass : std::uint8_t {
  Unsupervised = 0,
  SpeakSemantic = 1,
  SpeakAcoustic = 2,
  Monologue = 3,
  Wait = 4,
};
inline constexpr std::size_t kNumSupervisionClasses = 5;

inline const char* to_string(SupervisionClass c) {
  switch (c) {
    case SupervisionClass::Unsupervised: return "unsupervised";
    case SupervisionClass::SpeakSemantic: return "speak_semantic";
    case SupervisionClass::SpeakAcoustic: return "speak_acoustic";
    case SupervisionClass::Monologue: return "monologue";
    case SupervisionClass::Wait: return "wait";
  }
  return "?";
}

enum class MarkerKind : std::uint8_t {
  SentenceStart = 0,
  SentenceEnd = 1,
  UserOnset = 2,
  Cutoff = 3,
};

inline const char* to_string(MarkerKind k) {
  switch (k) {
    case MarkerKind::SentenceStart: return "sentence_start";
    case MarkerKind::SentenceEnd: return "sentence_end";
    case MarkerKind::UserOnset: return "user_onset";
    case MarkerKind::Cutoff: return "cutoff";
  }
  return "?";
}

struct Marker {
  std::uint64_t step = 0;
  MarkerKind kind = MarkerKind::SentenceStart;

  bool operator==(const Marker&) const = default;
  bool operator<(const Marker& o) const {
    return step != o.step ? step < o.step : static_cast<int>(kind) < static_cast<int>(o.kind);
  }
};

/// Canonical labels for one frame: filler and empty slots are unsupervised,
/// codebook 0 is semantic, the rest acoustic.
inline void label_frame(const StreamConfig& cfg, const Frame& f, SupervisionClass* out) {
  if (f.text == cfg.wait_id())
    out[0] = SupervisionClass::Wait;
  else if (f.text == cfg.pad_id() || f.text == cfg.bos_id())
    out[0] = SupervisionClass::Unsupervised;
  else
    out[0] = SupervisionClass::Monologue;
  const std::size_t k = cfg.num_codebooks;
  for (std::size_t i = 0; i < k; ++i) out[cfg.listen_slot(i)] = SupervisionClass::Unsupervised;
  for (std::size_t i = 0; i < k; ++i) {
    const bool empty = i >= f.speak.size() || f.speak[i] == cfg.empty_audio_id();
    out[cfg.speak_slot(i)] = empty ? SupervisionClass::Unsupervised
                             : i == 0 ? SupervisionClass::SpeakSemantic
                                      : SupervisionClass::SpeakAcoustic;
  }
}

/// Ordered frames with per-slot supervision labels and event markers.
/// `source_id` is provenance for error reporting; it is not persisted and does
/// not take part in equality.
struct FrameSequence {
  StreamConfig config;
  std::vector<Frame> frames;
  std::vector<SupervisionClass> supervision;  // frames.size() * slots_per_frame()
  std::vector<Marker> markers;
  std::string source_id;

  FrameSequence() = default;
  explicit FrameSequence(StreamConfig cfg, std::string id = {})
      : config(cfg), source_id(std::move(id)) {}

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
  std::size_t slots() const { return config.slots_per_frame(); }

  SupervisionClass label(std::size_t frame, std::size_t slot) const {
    return supervision[frame * slots() + slot];
  }
  SupervisionClass& label(std::size_t frame, std::size_t slot) {
    return supervision[frame * slots() + slot];
  }

  /// Appends with canonical labels.
  void push_back(Frame f) {
    const std::size_t base = supervision.size();
    supervision.resize(base + slots());
    label_frame(config, f, supervision.data() + base);
    frames.push_back(std::move(f));
  }

  /// Recomputes canonical labels for every frame.
  void relabel() {
    supervision.assign(frames.size() * slots(), SupervisionClass::Unsupervised);
    for (std::size_t i = 0; i < frames.size(); ++i)
      label_frame(config, frames[i], supervision.data() + i * slots());
  }

  void add_marker(std::uint64_t step, MarkerKind kind) { markers.push_back({step, kind}); }
  void sort_markers() { std::stable_sort(markers.begin(), markers.end()); }

  bool operator==(const FrameSequence& o) const {
    return config == o.config && frames == o.frames && supervision == o.supervision &&
           markers == o.markers;
  }
};

enum class Rule {
  Config,
  Arity,
  TextRange,
  AudioRange,
  LabelShape,
  ListenSupervised,
  LabelClass,
  MarkerOrder,
  Length,
};

inline const char* to_string(Rule r) {
  switch (r) {
    case Rule::Config: return "config";
    case Rule::Arity: return "arity";
    case Rule::TextRange: return "text_range";
    case Rule::AudioRange: return "audio_range";
    case Rule::LabelShape: return "label_shape";
    case Rule::ListenSupervised: return "listen_supervised";
    case Rule::LabelClass: return "label_class";
    case Rule::MarkerOrder: return "marker_order";
    case Rule::Length: return "length";
  }
  return "?";
}

struct Violation {
  Rule rule;
  std::optional<std::size_t> frame;
  std::string channel;  // "text", "listen[i]", "speak[i]", or empty
  std::string detail;

  std::string describe() const {
    std::string s = to_string(rule);
    if (frame) s += " at frame " + std::to_string(*frame);
    if (!channel.empty()) s += " channel " + channel;
    if (!detail.empty()) s += ": " + detail;
    return s;
  }
};

namespace detail {

inline bool label_allowed(const StreamConfig& cfg, const Frame& f, std::size_t slot,
                          SupervisionClass c) {
  using SC = SupervisionClass;
  if (c == SC::Unsupervised) return true;
  const std::size_t k = cfg.num_codebooks;
  if (slot == 0) {
    if (f.text == cfg.wait_id()) return c == SC::Wait;
    if (f.text == cfg.pad_id() || f.text == cfg.bos_id()) return false;
    return c == SC::Monologue;
  }
  if (slot <= k) return false;
  const std::size_t cb = slot - 1 - k;
  if (f.speak[cb] == cfg.empty_audio_id()) return false;
  return c == (cb == 0 ? SC::SpeakSemantic : SC::SpeakAcoustic);
}

}  // namespace detail

/// Every broken invariant of `seq`; empty iff the sequence is well formed.
inline std::vector<Violation> validate(const FrameSequence& seq) {
  std::vector<Violation> out;
  const StreamConfig& cfg = seq.config;
  for (auto& e : cfg.check()) out.push_back({Rule::Config, std::nullopt, {}, e});
  if (!out.empty()) return out;

  const std::size_t k = cfg.num_codebooks;
  const std::size_t slots = cfg.slots_per_frame();
  if (seq.size() > cfg.max_seq_len)
    out.push_back({Rule::Length, std::nullopt, {},
                   std::to_string(seq.size()) + " frames exceeds max_seq_len " +
                       std::to_string(cfg.max_seq_len)});
  const bool labels_ok = seq.supervision.size() == seq.size() * slots;
  if (!labels_ok)
    out.push_back({Rule::LabelShape, std::nullopt, {},
                   "expected " + std::to_string(seq.size() * slots) + " labels, found " +
                       std::to_string(seq.supervision.size())});

  for (std::size_t t = 0; t < seq.size(); ++t) {
    const Frame& f = seq.frames[t];
    bool arity_ok = true;
    if (f.listen.size() != k) {
      out.push_back({Rule::Arity, t, "listen",
                     std::to_string(f.listen.size()) + " codes, expected " + std::to_string(k)});
      arity_ok = false;
    }
    if (f.speak.size() != k) {
      out.push_back({Rule::Arity, t, "speak",
                     std::to_string(f.speak.size()) + " codes, expected " + std::to_string(k)});
      arity_ok = false;
    }
    if (f.text >= cfg.text_vocab_size())
      out.push_back({Rule::TextRange, t, "text", "id " + std::to_string(f.text)});
    for (std::size_t i = 0; i < f.listen.size(); ++i)
      if (f.listen[i] >= cfg.audio_vocab_size)
        out.push_back({Rule::AudioRange, t, "listen[" + std::to_string(i) + "]",
                       "id " + std::to_string(f.listen[i])});
    for (std::size_t i = 0; i < f.speak.size(); ++i)
      if (f.speak[i] >= cfg.audio_vocab_size)
        out.push_back({Rule::AudioRange, t, "speak[" + std::to_string(i) + "]",
                       "id " + std::to_string(f.speak[i])});
    if (!labels_ok || !arity_ok) continue;
    for (std::size_t i = 0; i < k; ++i)
      if (seq.label(t, cfg.listen_slot(i)) != SupervisionClass::Unsupervised)
        out.push_back({Rule::ListenSupervised, t, "listen[" + std::to_string(i) + "]",
                       to_string(seq.label(t, cfg.listen_slot(i)))});
    if (!detail::label_allowed(cfg, f, 0, seq.label(t, 0)))
      out.push_back({Rule::LabelClass, t, "text", to_string(seq.label(t, 0))});
    for (std::size_t i = 0; i < k; ++i) {
      const auto c = seq.label(t, cfg.speak_slot(i));
      if (!detail::label_allowed(cfg, f, cfg.speak_slot(i), c))
        out.push_back({Rule::LabelClass, t, "speak[" + std::to_string(i) + "]", to_string(c)});
    }
  }
  for (std::size_t i = 1; i < seq.markers.size(); ++i)
    if (seq.markers[i].step < seq.markers[i - 1].step)
      out.push_back({Rule::MarkerOrder, std::nullopt, {},
                     "marker " + std::to_string(i) + " precedes marker " + std::to_string(i - 1)});
  return out;
}

/// Per-class label counts, indexed by SupervisionClass.
inline std::vector<std::uint64_t> count_classes(const FrameSequence& seq) {
  std::vector<std::uint64_t> n(kNumSupervisionClasses, 0);
  for (auto c : seq.supervision) ++n[static_cast<std::size_t>(c)];
  return n;
}

}  // namespace fdse

#endif  // FDSE_FRAME_HPP
