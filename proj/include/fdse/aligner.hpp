#ifndef FDSE_ALIGNER_HPP
#define FDSE_ALIGNER_HPP

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdse/codec.hpp"
#include "fdse/frame.hpp"
#include "fdse/rng.hpp"

namespace fdse {

class AlignError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One sentence: its tokens and the code frames of its speech.
struct AlignedPair {
  std::vector<TokenId> transcript;
  std::vector<Codes> audio;
  std::string source_id;
};

struct PackingPolicy {
  std::uint32_t gap_min_frames = 3;
  std::uint32_t gap_max_frames = 13;
  std::uint32_t target_len = 8192;
  std::uint64_t seed = 0;
};

class OversizeError : public std::invalid_argument {
 public:
  OversizeError(const std::string& source_id, std::size_t len, std::size_t target)
      : std::invalid_argument("sequence '" + source_id + "' has " + std::to_string(len) +
                              " frames, exceeds pack length " + std::to_string(target)),
        source_id_(source_id) {}
  const std::string& source_id() const { return source_id_; }

 private:
  std::string source_id_;
};

namespace detail {

inline void check_codes(const StreamConfig& cfg, const std::vector<Codes>& audio, const std::string& what) {
  for (std::size_t t = 0; t < audio.size(); ++t) {
    if (audio[t].size() != cfg.num_codebooks)
      throw AlignError(what + ": frame " + std::to_string(t) + " has " + std::to_string(audio[t].size()) +
                       " codes, expected " + std::to_string(cfg.num_codebooks));
    for (TokenId c : audio[t])
      if (c >= cfg.empty_audio_id())
        throw AlignError(what + ": frame " + std::to_string(t) + " code " + std::to_string(c) +
                         (c == cfg.empty_audio_id() ? " is the empty filler" : " out of range"));
  }
}

inline void check_tokens(const StreamConfig& cfg, const std::vector<TokenId>& tokens, const std::string& what) {
  for (TokenId id : tokens)
    if (!cfg.is_ordinary_text(id))
      throw AlignError(what + ": token " + std::to_string(id) + " is not an ordinary text token");
}

inline void check_pair(const AlignedPair& p, const StreamConfig& cfg) {
  cfg.require_valid();
  if (p.transcript.empty()) throw AlignError("pair '" + p.source_id + "': empty transcript");
  if (p.audio.empty()) throw AlignError("pair '" + p.source_id + "': empty audio");
  check_tokens(cfg, p.transcript, "pair '" + p.source_id + "'");
  check_codes(cfg, p.audio, "pair '" + p.source_id + "'");
}

inline FrameSequence blank_sequence(const StreamConfig& cfg, std::size_t len, TokenId text, std::string id) {
  FrameSequence seq(cfg, std::move(id));
  seq.frames.assign(len, Frame::filler(cfg, text));
  return seq;
}

/// Writes `audio` onto the speak channel with semantic codes from `start` and
/// acoustic codes from `start + acoustic_delay_steps`.
inline void paint_speech(FrameSequence& seq, std::size_t start, std::span<const Codes> audio) {
  const std::size_t delay = seq.config.acoustic_delay_steps;
  for (std::size_t j = 0; j < audio.size(); ++j) {
    seq.frames[start + j].speak[0] = audio[j][0];
    for (std::size_t i = 1; i < audio[j].size(); ++i) seq.frames[start + delay + j].speak[i] = audio[j][i];
  }
}

inline void append_shifted(FrameSequence& dst, const FrameSequence& src) {
  const std::uint64_t offset = dst.size();
  dst.frames.insert(dst.frames.end(), src.frames.begin(), src.frames.end());
  dst.supervision.insert(dst.supervision.end(), src.supervision.begin(), src.supervision.end());
  for (const Marker& m : src.markers) dst.markers.push_back({m.step + offset, m.kind});
}

inline void append_fill(FrameSequence& dst, std::size_t n, TokenId text) {
  for (std::size_t i = 0; i < n; ++i) dst.push_back(Frame::filler(dst.config, text));
}

}  // namespace detail

/// Lead (TTS-style) layout: transcript from step 0, speech `text_lead_steps`
/// later, WAIT on the text channel until speech ends. Listen is silent.
inline FrameSequence align_tts(const AlignedPair& pair, const StreamConfig& cfg) {
  detail::check_pair(pair, cfg);
  const std::size_t t_len = pair.transcript.size();
  const std::size_t a_len = pair.audio.size();
  const std::size_t lead = cfg.text_lead_steps;
  const std::size_t len = std::max(t_len, lead + a_len + cfg.acoustic_delay_steps);

  auto seq = detail::blank_sequence(cfg, len, cfg.wait_id(), pair.source_id);
  for (std::size_t j = 0; j < t_len; ++j) seq.frames[j].text = pair.transcript[j];
  detail::paint_speech(seq, lead, pair.audio);
  seq.add_marker(0, MarkerKind::SentenceStart);
  seq.add_marker(t_len - 1, MarkerKind::SentenceEnd);
  seq.relabel();
  return seq;
}

/// Follow (ASR-style) layout: speech on the listen channel from step 0, WAIT
/// while it plays, then the transcript. Speak is silent.
inline FrameSequence align_asr(const AlignedPair& pair, const StreamConfig& cfg) {
  detail::check_pair(pair, cfg);
  const std::size_t t_len = pair.transcript.size();
  const std::size_t a_len = pair.audio.size();

  auto seq = detail::blank_sequence(cfg, a_len + t_len, cfg.wait_id(), pair.source_id);
  for (std::size_t j = 0; j < a_len; ++j) seq.frames[j].listen = pair.audio[j];
  for (std::size_t j = 0; j < t_len; ++j) seq.frames[a_len + j].text = pair.transcript[j];
  seq.add_marker(0, MarkerKind::UserOnset);
  seq.add_marker(a_len, MarkerKind::SentenceStart);
  seq.add_marker(a_len + t_len - 1, MarkerKind::SentenceEnd);
  seq.relabel();
  return seq;
}

/// Greedy first-fit packing in input order. Neighbours are separated by a
/// sampled run of WAIT/silent frames; a pack that cannot take the next item is
/// closed and padded with PAD frames to exactly `target_len`.
inline std::vector<FrameSequence> pack(std::span<const FrameSequence> sequences, const PackingPolicy& policy) {
  std::vector<FrameSequence> packs;
  if (sequences.empty()) return packs;
  if (policy.gap_min_frames > policy.gap_max_frames) throw AlignError("packing gap range is inverted");
  const StreamConfig& cfg = sequences.front().config;
  if (policy.target_len == 0 || policy.target_len > cfg.max_seq_len)
    throw AlignError("target_len " + std::to_string(policy.target_len) + " must be in [1, max_seq_len=" +
                     std::to_string(cfg.max_seq_len) + "]");
  for (const auto& s : sequences) {
    if (!(s.config == cfg)) throw AlignError("sequence '" + s.source_id + "' has a different stream config");
    if (s.size() > policy.target_len) throw OversizeError(s.source_id, s.size(), policy.target_len);
  }

  Rng rng(policy.seed);
  FrameSequence current(cfg);
  auto close = [&] {
    detail::append_fill(current, policy.target_len - current.size(), cfg.pad_id());
    current.source_id = "pack-" + std::to_string(packs.size());
    packs.push_back(std::move(current));
    current = FrameSequence(cfg);
  };

  for (const auto& s : sequences) {
    if (current.empty()) {
      detail::append_shifted(current, s);
      continue;
    }
    const auto gap = static_cast<std::size_t>(rng.uniform_int(policy.gap_min_frames, policy.gap_max_frames));
    if (current.size() + gap + s.size() <= policy.target_len) {
      detail::append_fill(current, gap, cfg.wait_id());
      detail::append_shifted(current, s);
    } else {
      close();
      detail::append_shifted(current, s);
    }
  }
  close();
  return packs;
}

inline std::vector<FrameSequence> pack(const std::vector<FrameSequence>& sequences, const PackingPolicy& policy) {
  return pack(std::span<const FrameSequence>(sequences), policy);
}

/// Word-level comparison layout: each token sits on the frame where its word
/// starts, PAD everywhere else, speech undelayed on the speak channel. Used
/// only to contrast text-channel statistics; not a training layout.
inline FrameSequence moshi_word_align(const AlignedPair& pair, std::span<const std::uint64_t> word_frames,
                                      const StreamConfig& cfg) {
  detail::check_pair(pair, cfg);
  if (word_frames.size() != pair.transcript.size())
    throw AlignError("pair '" + pair.source_id + "': " + std::to_string(word_frames.size()) + " timestamps for " +
                     std::to_string(pair.transcript.size()) + " tokens");
  for (std::size_t i = 1; i < word_frames.size(); ++i)
    if (word_frames[i] <= word_frames[i - 1])
      throw AlignError("pair '" + pair.source_id + "': word timestamps overlap or go backwards at word " +
                       std::to_string(i));
  const std::size_t len = pair.audio.size();
  if (word_frames.back() >= len)
    throw AlignError("pair '" + pair.source_id + "': word timestamp beyond the end of the audio");

  auto seq = detail::blank_sequence(cfg, len, cfg.pad_id(), pair.source_id);
  for (std::size_t j = 0; j < len; ++j) seq.frames[j].speak = pair.audio[j];
  for (std::size_t i = 0; i < word_frames.size(); ++i) seq.frames[word_frames[i]].text = pair.transcript[i];
  seq.add_marker(word_frames.front(), MarkerKind::SentenceStart);
  seq.add_marker(word_frames.back(), MarkerKind::SentenceEnd);
  seq.relabel();
  return seq;
}

}  // namespace fdse

#endif  // FDSE_ALIGNER_HPP
