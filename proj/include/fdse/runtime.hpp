#ifndef FDSE_RUNTIME_HPP
#define FDSE_RUNTIME_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "fdse/augment.hpp"
#include "fdse/bounded_queue.hpp"
#include "fdse/codec.hpp"
#include "fdse/frame.hpp"

namespace fdse {

/// Opaque per-step handle produced by ingest(). Depth decoding may read only
/// this handle and the codes already decoded at the same step.
struct HiddenState {
  std::uint64_t step = 0;
  std::vector<TokenId> payload;
};

/// A duplex model, stepped once per frame:
///   h_t = ingest(frame_t)            // backbone over the merged channels
///   text_t = next_text(h_t)
///   code_{t,i} = next_speak_code(h_t, code_{t,0..i})   for i in [0, K)
/// The ingested frame carries this step's listen codes together with the
/// model's own text and speak output of the previous step.
class DuplexModel {
 public:
  virtual ~DuplexModel() = default;
  virtual HiddenState ingest(const Frame& frame) = 0;
  virtual TokenId next_text(const HiddenState& h) = 0;
  virtual TokenId next_speak_code(const HiddenState& h, std::span<const TokenId> decoded) = 0;
};

/// Replays the text and speak channels of a recorded sequence.
class ScriptedModel final : public DuplexModel {
 public:
  explicit ScriptedModel(FrameSequence script) : script_(std::move(script)) {}

  HiddenState ingest(const Frame&) override { return {step_++, {}}; }

  TokenId next_text(const HiddenState& h) override {
    return h.step < script_.size() ? script_.frames[h.step].text : script_.config.wait_id();
  }

  TokenId next_speak_code(const HiddenState& h, std::span<const TokenId> decoded) override {
    if (h.step >= script_.size()) return script_.config.empty_audio_id();
    const auto& speak = script_.frames[h.step].speak;
    return decoded.size() < speak.size() ? speak[decoded.size()] : script_.config.empty_audio_id();
  }

 private:
  FrameSequence script_;
  std::uint64_t step_ = 0;
};

/// Speaks back what it heard `delay` steps earlier; text is always WAIT.
class EchoModel final : public DuplexModel {
 public:
  explicit EchoModel(const StreamConfig& cfg, std::size_t delay = 2) : cfg_(cfg), delay_(delay) {}

  HiddenState ingest(const Frame& frame) override {
    history_.push_back(frame.listen);
    HiddenState h{step_++, {}};
    if (history_.size() > delay_) {
      h.payload = history_.front();
      history_.pop_front();
    } else {
      h.payload.assign(cfg_.num_codebooks, cfg_.empty_audio_id());
    }
    return h;
  }

  TokenId next_text(const HiddenState&) override { return cfg_.wait_id(); }

  TokenId next_speak_code(const HiddenState& h, std::span<const TokenId> decoded) override {
    return decoded.size() < h.payload.size() ? h.payload[decoded.size()] : cfg_.empty_audio_id();
  }

 private:
  StreamConfig cfg_;
  std::size_t delay_;
  std::deque<std::vector<TokenId>> history_;
  std::uint64_t step_ = 0;
};

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::uint64_t step, const std::string& what)
      : std::runtime_error("model protocol violation at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

enum class DuplexMode { Listening, Responding, Speaking, WaitFill, Interrupted };

inline const char* to_string(DuplexMode m) {
  switch (m) {
    case DuplexMode::Listening: return "listening";
    case DuplexMode::Responding: return "responding";
    case DuplexMode::Speaking: return "speaking";
    case DuplexMode::WaitFill: return "wait_fill";
    case DuplexMode::Interrupted: return "interrupted";
  }
  return "?";
}

/// Whether the engine applies turn-taking rules or forwards model output as is.
enum class Gating { TurnTaking, PassThrough };

struct RuntimePolicy {
  Gating gating = Gating::TurnTaking;
  std::uint64_t reaction_delay_frames = 6;
  /// When set, only voiced runs that start on one of these steps count as
  /// user onsets (ground truth from a script). Otherwise every voiced run does.
  std::optional<std::vector<std::uint64_t>> onset_markers;
  bool realtime = false;
};

/// One step of listen input; `voiced` comes from the source's activity gate.
struct InputFrame {
  Codes listen;
  bool voiced = false;
};

struct DuplexState {
  DuplexMode mode = DuplexMode::Listening;
  std::uint64_t step = 0;
  std::uint64_t steps_since_user_onset = 0;
  std::deque<TokenId> pending_text;

  // Voice-activity run tracking.
  std::uint64_t run_length = 0;
  std::uint64_t run_start = 0;
  bool run_fired = false;

  // Current response.
  bool answer_seen = false;
  bool speech_started = false;
  bool sentence_open = false;
  std::optional<std::uint64_t> response_text_start;
  std::optional<std::uint64_t> last_response_token;

  Frame previous_output;  // fed back on the next ingest
};

struct StepEvents {
  bool user_onset = false;
  bool cutoff = false;
  std::optional<std::uint64_t> sentence_start;
  std::optional<std::uint64_t> sentence_end;
  std::optional<std::uint64_t> first_speech_latency_steps;
};

struct StepResult {
  Frame out;
  DuplexState state;
  StepEvents events;
};

inline DuplexState initial_state(const StreamConfig& cfg) {
  DuplexState s;
  s.previous_output = Frame::filler(cfg, cfg.bos_id());
  return s;
}

namespace detail {

inline bool is_text_filler(const StreamConfig& cfg, TokenId t) {
  return t == cfg.wait_id() || t == cfg.pad_id() || t == cfg.bos_id();
}

inline bool is_trigger(const StreamConfig& cfg, TokenId t) { return t == cfg.asr_begin_id() || t == cfg.answer_id(); }

inline bool all_empty(const StreamConfig& cfg, const Codes& c) {
  return std::all_of(c.begin(), c.end(), [&](TokenId x) { return x == cfg.empty_audio_id(); });
}

}  // namespace detail

/// Advances the engine by one frame: exactly one ingest, one next_text and K
/// next_speak_code calls, then the turn-taking rules.
inline StepResult step_once(DuplexModel& model, const DuplexState& state, const InputFrame& in,
                            const StreamConfig& cfg, const RuntimePolicy& policy) {
  const std::uint64_t t = state.step;
  const std::size_t k = cfg.num_codebooks;
  if (in.listen.size() != k)
    throw ProtocolError(t, "listen frame has " + std::to_string(in.listen.size()) + " codes, expected " +
                               std::to_string(k));
  for (TokenId c : in.listen)
    if (c >= cfg.audio_vocab_size) throw ProtocolError(t, "listen code " + std::to_string(c) + " out of range");

  StepResult r{Frame{}, state, {}};
  DuplexState& s = r.state;

  Frame merged{state.previous_output.text, in.listen, state.previous_output.speak};
  const HiddenState h = model.ingest(merged);
  const TokenId raw_text = model.next_text(h);
  if (raw_text >= cfg.text_vocab_size())
    throw ProtocolError(t, "text id " + std::to_string(raw_text) + " out of range");
  Codes raw_codes;
  raw_codes.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const TokenId c = model.next_speak_code(h, raw_codes);
    if (c >= cfg.audio_vocab_size)
      throw ProtocolError(t, "speak code " + std::to_string(c) + " (codebook " + std::to_string(i) + ") out of range");
    raw_codes.push_back(c);
  }

  // Sustained-onset detection. Frames o..o+R-1 voiced => cut at o+R.
  const std::uint64_t reaction = policy.reaction_delay_frames;
  const std::uint64_t prior_run = s.run_length;
  bool fire = false;
  if (prior_run > 0 && !s.run_fired && reaction > 0 && prior_run >= reaction) fire = true;
  if (in.voiced) {
    if (s.run_length == 0) {
      s.run_start = t;
      s.run_fired = false;
      bool counts = true;
      if (policy.onset_markers)
        counts = std::find(policy.onset_markers->begin(), policy.onset_markers->end(), t) !=
                 policy.onset_markers->end();
      if (!counts) s.run_fired = true;  // not a user onset; never fires
      r.events.user_onset = counts;
    }
    ++s.run_length;
    if (reaction == 0 && !s.run_fired) fire = true;
  } else {
    s.run_length = 0;
  }
  if (fire) s.run_fired = true;
  s.steps_since_user_onset = s.run_length > 0 ? t - s.run_start : s.steps_since_user_onset + 1;

  Frame& out = r.out;
  out.listen = in.listen;
  const Codes silent(k, cfg.empty_audio_id());

  if (policy.gating == Gating::PassThrough) {
    out.text = raw_text;
    out.speak = raw_codes;
  } else {
    const bool raw_silent = detail::is_text_filler(cfg, raw_text) && detail::all_empty(cfg, raw_codes);
    const bool active = s.mode == DuplexMode::Responding || s.mode == DuplexMode::Speaking ||
                        s.mode == DuplexMode::WaitFill;
    auto end_sentence = [&] {
      if (s.sentence_open && s.last_response_token) r.events.sentence_end = *s.last_response_token;
      s.sentence_open = false;
    };
    auto begin_response = [&] {
      s.mode = DuplexMode::Responding;
      s.pending_text.clear();
      s.answer_seen = false;
      s.speech_started = false;
      s.sentence_open = false;
      s.response_text_start.reset();
      s.last_response_token.reset();
    };

    if (fire && active) {
      s.mode = DuplexMode::Interrupted;
      s.pending_text.clear();
      r.events.cutoff = true;
      end_sentence();
    }

    switch (s.mode) {
      case DuplexMode::Listening:
      case DuplexMode::Interrupted:
        if (detail::is_trigger(cfg, raw_text)) {
          begin_response();
          s.answer_seen = raw_text == cfg.answer_id();
          out.text = raw_text;
          out.speak = raw_codes;
        } else {
          if (s.mode == DuplexMode::Interrupted && raw_silent) s.mode = DuplexMode::Listening;
          out.text = cfg.wait_id();
          out.speak = silent;
        }
        break;
      case DuplexMode::Responding:
      case DuplexMode::Speaking:
      case DuplexMode::WaitFill: {
        if (detail::is_trigger(cfg, raw_text) && s.pending_text.empty() && s.answer_seen) {
          end_sentence();
          begin_response();
        }
        if (!detail::is_text_filler(cfg, raw_text)) s.pending_text.push_back(raw_text);
        if (!s.pending_text.empty()) {
          out.text = s.pending_text.front();
          s.pending_text.pop_front();
          if (out.text == cfg.answer_id()) {
            s.answer_seen = true;
          } else if (s.answer_seen && cfg.is_ordinary_text(out.text)) {
            if (!s.sentence_open) {
              s.sentence_open = true;
              r.events.sentence_start = t;
              if (!s.response_text_start) s.response_text_start = t;
            }
            s.last_response_token = t;
          }
          if (s.mode == DuplexMode::WaitFill) s.mode = DuplexMode::Speaking;
        } else {
          out.text = cfg.wait_id();
          end_sentence();
          if (s.mode != DuplexMode::WaitFill) s.mode = DuplexMode::WaitFill;
        }
        out.speak = raw_codes;
        const bool speaking_now = !detail::all_empty(cfg, raw_codes);
        if (speaking_now && !s.speech_started) {
          s.speech_started = true;
          if (s.response_text_start) r.events.first_speech_latency_steps = t - *s.response_text_start;
          if (s.mode == DuplexMode::Responding) s.mode = DuplexMode::Speaking;
        }
        // Done once text is exhausted and speech has ended, or never began
        // within the lead window.
        const bool speech_window_over =
            s.speech_started ||
            (s.response_text_start && t >= *s.response_text_start + cfg.text_lead_steps + cfg.acoustic_delay_steps);
        if (s.mode == DuplexMode::WaitFill && !speaking_now && out.text == cfg.wait_id() && speech_window_over)
          s.mode = DuplexMode::Listening;
        break;
      }
    }
  }

  s.previous_output = Frame{out.text, {}, out.speak};
  s.step = t + 1;
  return r;
}

/// Pull-based listen input. next() blocks until a frame is available and
/// returns nullopt at end of stream.
class ListenSource {
 public:
  virtual ~ListenSource() = default;
  virtual std::optional<InputFrame> next() = 0;
};

/// Listen channel of a recorded sequence; a frame is voiced when its codes are
/// not the empty filler.
class SequenceListenSource final : public ListenSource {
 public:
  explicit SequenceListenSource(const FrameSequence& seq) : seq_(&seq) {}

  std::optional<InputFrame> next() override {
    if (pos_ >= seq_->size()) return std::nullopt;
    const Codes& c = seq_->frames[pos_++].listen;
    return InputFrame{c, !detail::all_empty(seq_->config, c)};
  }

 private:
  const FrameSequence* seq_;
  std::size_t pos_ = 0;
};

/// Raw audio encoded hop by hop; voiced when the hop is louder than the gate.
class WaveformListenSource final : public ListenSource {
 public:
  WaveformListenSource(const Waveform& w, const CodecInterface& codec, double gate_db = -40.0)
      : w_(&w), codec_(&codec), gate_db_(gate_db) {
    if (w.sample_rate_hz != codec.config().sample_rate_hz)
      throw CodecError("waveform sample rate does not match the stream config");
  }

  std::optional<InputFrame> next() override {
    const std::size_t hop = codec_->config().hop_samples;
    if ((pos_ + 1) * hop > w_->samples.size()) return std::nullopt;
    std::span<const float> chunk(w_->samples.data() + pos_ * hop, hop);
    ++pos_;
    return InputFrame{codec_->encode_hop(chunk), rms_db(chunk) > gate_db_};
  }

 private:
  const Waveform* w_;
  const CodecInterface* codec_;
  double gate_db_;
  std::size_t pos_ = 0;
};

/// Frames handed over from another thread.
class QueueListenSource final : public ListenSource {
 public:
  explicit QueueListenSource(BoundedQueue<InputFrame>& q) : q_(&q) {}
  std::optional<InputFrame> next() override { return q_->pop(); }

 private:
  BoundedQueue<InputFrame>* q_;
};

struct LatencyReport {
  std::vector<double> step_wall_ms;
  std::optional<std::uint64_t> first_speech_latency_steps;
  std::optional<double> first_speech_latency_ms;
  std::vector<std::uint64_t> cutoff_latency_steps;  // onset -> first silent step

  double mean_step_period_ms = 0.0;  // realtime: spacing between step starts
};

struct RunResult {
  FrameSequence output;
  LatencyReport latency;
};

/// Called after every step with the step index and output frame.
using StepSink = std::function<void(std::uint64_t, const Frame&, const StepEvents&)>;

/// Drives `model` over `source`, one output frame per input frame. Input is
/// pulled one frame at a time, never ahead of the step being computed. In
/// realtime mode step k starts at t0 + k * frame period.
inline RunResult run(DuplexModel& model, ListenSource& source, const StreamConfig& cfg,
                     const RuntimePolicy& policy, const StepSink& sink = {}) {
  cfg.require_valid();
  RunResult res{FrameSequence(cfg, "runtime"), {}};
  DuplexState state = initial_state(cfg);
  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double, std::milli>(cfg.frame_period_ms()));
  const auto t0 = clock::now();
  std::optional<clock::time_point> first_start, last_start;

  for (std::uint64_t k = 0;; ++k) {
    if (policy.realtime) std::this_thread::sleep_until(t0 + period * static_cast<long>(k));
    auto in = source.next();
    if (!in) break;
    const auto start = clock::now();
    if (!first_start) first_start = start;
    last_start = start;

    StepResult r = step_once(model, state, *in, cfg, policy);
    state = std::move(r.state);
    const StepEvents& ev = r.events;
    if (ev.user_onset) res.output.add_marker(k, MarkerKind::UserOnset);
    if (ev.sentence_start) res.output.add_marker(*ev.sentence_start, MarkerKind::SentenceStart);
    if (ev.sentence_end) res.output.add_marker(*ev.sentence_end, MarkerKind::SentenceEnd);
    if (ev.cutoff) {
      res.output.add_marker(k, MarkerKind::Cutoff);
      res.latency.cutoff_latency_steps.push_back(k - state.run_start);
    }
    if (ev.first_speech_latency_steps && !res.latency.first_speech_latency_steps) {
      res.latency.first_speech_latency_steps = ev.first_speech_latency_steps;
      res.latency.first_speech_latency_ms = static_cast<double>(*ev.first_speech_latency_steps) * cfg.frame_period_ms();
    }
    if (sink) sink(k, r.out, ev);
    res.output.push_back(std::move(r.out));
    res.latency.step_wall_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - start).count());
  }
  if (state.sentence_open && state.last_response_token)
    res.output.add_marker(*state.last_response_token, MarkerKind::SentenceEnd);
  res.output.sort_markers();
  const std::size_t n = res.output.size();
  if (n > 1)
    res.latency.mean_step_period_ms =
        std::chrono::duration<double, std::milli>(*last_start - *first_start).count() / static_cast<double>(n - 1);
  return res;
}

}  // namespace fdse

#endif  // FDSE_RUNTIME_HPP
