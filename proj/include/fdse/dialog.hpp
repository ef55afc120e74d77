#ifndef FDSE_DIALOG_HPP
#define FDSE_DIALOG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdse/aligner.hpp"
#include "fdse/frame.hpp"
#include "fdse/rng.hpp"

namespace fdse {

class DialogError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Speaker { User, Model };

struct Turn {
  Speaker speaker = Speaker::User;
  std::vector<TokenId> transcript;
  std::vector<Codes> audio;
  /// User turns only: when this turn interrupts the preceding model turn, its
  /// onset in frames after that turn's first semantic code. Unset = sampled.
  std::optional<std::uint64_t> onset_hint;
};

/// Alternating user/model turns, starting with the user and ending with the
/// model; 1 to 10 exchanges.
struct DialogScript {
  std::vector<Turn> turns;
  std::string dialog_id;

  std::size_t exchanges() const { return turns.size() / 2; }
};

enum class DelayRounding { Nearest, Floor, Ceil };

struct InterruptionPolicy {
  double p_interrupt = 0.7;
  double reaction_delay_s = 0.5;
  std::uint64_t seed = 0;
  DelayRounding rounding = DelayRounding::Nearest;

  std::uint64_t reaction_delay_frames(const StreamConfig& cfg) const {
    const double f = reaction_delay_s * cfg.frame_rate_hz.value();
    switch (rounding) {
      case DelayRounding::Floor: return static_cast<std::uint64_t>(std::floor(f + 1e-9));
      case DelayRounding::Ceil: return static_cast<std::uint64_t>(std::ceil(f - 1e-9));
      case DelayRounding::Nearest: break;
    }
    return static_cast<std::uint64_t>(std::llround(f));
  }

  void check() const {
    if (!(p_interrupt >= 0.0 && p_interrupt <= 1.0)) throw DialogError("p_interrupt must be in [0, 1]");
    if (!(reaction_delay_s >= 0.0)) throw DialogError("reaction_delay_s must be >= 0");
  }
};

/// Silence between the end of a model response and the next user onset.
struct LayoutOptions {
  std::uint32_t gap_min_frames = 3;
  std::uint32_t gap_max_frames = 13;
  std::uint64_t seed = 0;
};

enum class DialogFormat { AsrResponseTts, ResponseTts, FullDuplex };

inline void check_dialog(const DialogScript& d, const StreamConfig& cfg, bool need_user_transcripts) {
  cfg.require_valid();
  const std::string who = "dialog '" + d.dialog_id + "'";
  if (d.turns.size() < 2 || d.turns.size() > 20 || d.turns.size() % 2 != 0)
    throw DialogError(who + ": needs 1 to 10 user/model exchanges, got " + std::to_string(d.turns.size()) +
                      " turns");
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Turn& t = d.turns[i];
    const std::string where = who + " turn " + std::to_string(i);
    const Speaker expected = i % 2 == 0 ? Speaker::User : Speaker::Model;
    if (t.speaker != expected) throw DialogError(where + ": turns must alternate starting with the user");
    if (t.audio.empty()) throw DialogError(where + ": empty audio");
    if (t.transcript.empty() && (t.speaker == Speaker::Model || need_user_transcripts))
      throw DialogError(where + (t.speaker == Speaker::Model ? ": zero-length response" : ": empty transcript"));
    detail::check_tokens(cfg, t.transcript, where);
    detail::check_codes(cfg, t.audio, where);
  }
}

namespace detail {

class DialogCanvas {
 public:
  explicit DialogCanvas(const StreamConfig& cfg, std::string id) : seq_(cfg, std::move(id)) {}

  Frame& at(std::size_t t) {
    if (t >= seq_.frames.size()) seq_.frames.resize(t + 1, Frame::filler(seq_.config, seq_.config.wait_id()));
    return seq_.frames[t];
  }
  void mark(std::uint64_t step, MarkerKind kind) { seq_.add_marker(step, kind); }
  void need(std::size_t len) { length_ = std::max(length_, len); }

  FrameSequence finish() && {
    seq_.frames.resize(length_, Frame::filler(seq_.config, seq_.config.wait_id()));
    seq_.sort_markers();
    seq_.relabel();
    return std::move(seq_);
  }

 private:
  FrameSequence seq_;
  std::size_t length_ = 0;
};

struct PlacedResponse {
  std::size_t text_start;   // first response token
  std::size_t text_end;     // exclusive
  std::size_t speech_start; // first semantic code
  std::size_t speech_end;   // exclusive, after the last acoustic code
  std::size_t end() const { return std::max(text_end, speech_end); }
};

inline FrameSequence layout_dialog(const DialogScript& d, const StreamConfig& cfg, DialogFormat format,
                                   const LayoutOptions& opts, const InterruptionPolicy* policy) {
  check_dialog(d, cfg, format == DialogFormat::AsrResponseTts);
  if (opts.gap_min_frames > opts.gap_max_frames) throw DialogError("gap range is inverted");
  if (policy) policy->check();

  DialogCanvas canvas(cfg, d.dialog_id);
  Rng gap_rng(derive_seed(opts.seed, d.dialog_id, "gap"));
  Rng cut_rng(derive_seed(policy ? policy->seed : 0, d.dialog_id, "interrupt"));
  const std::size_t lead = cfg.text_lead_steps;
  const std::size_t delay = cfg.acoustic_delay_steps;
  const std::size_t reaction = policy ? policy->reaction_delay_frames(cfg) : 0;

  std::optional<PlacedResponse> prev;
  std::size_t prev_end = 0;  // effective end of the previous response, after any cut

  auto close_sentence = [&](const PlacedResponse& r, std::size_t text_end) {
    if (text_end > r.text_start) canvas.mark(text_end - 1, MarkerKind::SentenceEnd);
  };

  for (std::size_t k = 0; k < d.exchanges(); ++k) {
    const Turn& user = d.turns[2 * k];
    const Turn& model = d.turns[2 * k + 1];
    const std::size_t u_len = user.audio.size();

    std::size_t onset = 0;
    if (prev) {
      const auto gap = static_cast<std::size_t>(gap_rng.uniform_int(opts.gap_min_frames, opts.gap_max_frames));
      onset = prev->end() + gap;
      std::size_t prev_text_end = prev->text_end;
      prev_end = prev->end();
      if (policy) {
        const bool draw = cut_rng.bernoulli(policy->p_interrupt);
        const std::size_t lo = prev->speech_start + 1;
        const std::size_t hi = prev->speech_end > reaction + 1 ? prev->speech_end - reaction - 1 : 0;
        if (draw && lo <= hi) {
          std::size_t o;
          if (user.onset_hint) {
            o = prev->speech_start + *user.onset_hint;
            if (o < lo || o > hi)
              throw DialogError("dialog '" + d.dialog_id + "' turn " + std::to_string(2 * k) +
                                ": onset_hint outside the interruptible span");
          } else {
            o = static_cast<std::size_t>(cut_rng.uniform_int(static_cast<std::int64_t>(lo),
                                                             static_cast<std::int64_t>(hi)));
          }
          onset = o;
          if (u_len >= reaction) {
            const std::size_t cut = o + reaction;
            for (std::size_t t = cut; t < prev->end(); ++t) {
              Frame& f = canvas.at(t);
              std::fill(f.speak.begin(), f.speak.end(), cfg.empty_audio_id());
              if (t < prev->text_end) f.text = cfg.wait_id();
            }
            prev_text_end = std::min(prev_text_end, cut);
            prev_end = cut;
            canvas.mark(cut, MarkerKind::Cutoff);
          }
        }
      }
      close_sentence(*prev, prev_text_end);
      canvas.need(prev_end);
    }

    for (std::size_t j = 0; j < u_len; ++j) canvas.at(onset + j).listen = user.audio[j];
    canvas.mark(onset, MarkerKind::UserOnset);
    const std::size_t user_end = onset + u_len;
    canvas.need(user_end);

    std::size_t t = std::max(user_end, prev_end);
    if (format == DialogFormat::AsrResponseTts) {
      canvas.at(t++).text = cfg.asr_begin_id();
      for (TokenId id : user.transcript) canvas.at(t++).text = id;
    }
    canvas.at(t++).text = cfg.answer_id();

    PlacedResponse r;
    r.text_start = t;
    r.text_end = t + model.transcript.size();
    r.speech_start = t + lead;
    r.speech_end = r.speech_start + model.audio.size() + delay;
    for (std::size_t j = 0; j < model.transcript.size(); ++j) canvas.at(r.text_start + j).text = model.transcript[j];
    for (std::size_t j = 0; j < model.audio.size(); ++j) {
      canvas.at(r.speech_start + j).speak[0] = model.audio[j][0];
      Frame& f = canvas.at(r.speech_start + delay + j);
      for (std::size_t i = 1; i < cfg.num_codebooks; ++i) f.speak[i] = model.audio[j][i];
    }
    canvas.mark(r.text_start, MarkerKind::SentenceStart);
    prev = r;
    prev_end = r.end();
  }
  close_sentence(*prev, prev->text_end);
  canvas.need(prev->end());
  return std::move(canvas).finish();
}

}  // namespace detail

/// Semi-duplex layout: after each user turn, `<asr>` + the user transcript +
/// `<answer>` on the text channel, then the response, speech 2 steps behind it.
inline FrameSequence build_asr_response_tts(const DialogScript& d, const StreamConfig& cfg,
                                            const LayoutOptions& opts = {}) {
  return detail::layout_dialog(d, cfg, DialogFormat::AsrResponseTts, opts, nullptr);
}

/// As build_asr_response_tts without the ASR span; `<answer>` stays as the
/// response delimiter.
inline FrameSequence build_response_tts(const DialogScript& d, const StreamConfig& cfg,
                                        const LayoutOptions& opts = {}) {
  return detail::layout_dialog(d, cfg, DialogFormat::ResponseTts, opts, nullptr);
}

/// Response-TTS with free user inputs: each non-final model turn is interrupted
/// with probability p by moving the next user onset inside its speech; the
/// model falls silent `reaction_delay` frames after the onset. User turns
/// shorter than the reaction delay are back-channels and never cut.
inline FrameSequence inject_interruptions(const DialogScript& d, const InterruptionPolicy& policy,
                                          const StreamConfig& cfg, const LayoutOptions& opts = {}) {
  if (d.exchanges() < 2)
    throw DialogError("dialog '" + d.dialog_id + "': interruptions need at least 2 exchanges");
  return detail::layout_dialog(d, cfg, DialogFormat::FullDuplex, opts, &policy);
}

inline FrameSequence build_dialog(const DialogScript& d, DialogFormat format, const StreamConfig& cfg,
                                  const LayoutOptions& opts, const InterruptionPolicy& policy) {
  switch (format) {
    case DialogFormat::AsrResponseTts: return build_asr_response_tts(d, cfg, opts);
    case DialogFormat::ResponseTts: return build_response_tts(d, cfg, opts);
    case DialogFormat::FullDuplex: return inject_interruptions(d, policy, cfg, opts);
  }
  throw DialogError("unknown dialog format");
}

}  // namespace fdse

#endif  // FDSE_DIALOG_HPP
