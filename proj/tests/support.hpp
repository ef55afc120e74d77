// Test-side generators and oracles. The oracles never call the builders: each
// one answers "what belongs at (step, slot)" from the closed-form layout rules.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "fdse/fdse.hpp"

namespace fdse::test {

using Gen = std::mt19937_64;

inline std::uint64_t draw(Gen& g, std::uint64_t lo, std::uint64_t hi) {
  return std::uniform_int_distribution<std::uint64_t>(lo, hi)(g);
}

inline Codes random_codes(Gen& g, const StreamConfig& cfg) {
  Codes c(cfg.num_codebooks);
  for (auto& x : c) x = static_cast<TokenId>(draw(g, 0, cfg.empty_audio_id() - 1));
  return c;
}

inline std::vector<Codes> random_audio(Gen& g, const StreamConfig& cfg, std::size_t n) {
  std::vector<Codes> a;
  for (std::size_t i = 0; i < n; ++i) a.push_back(random_codes(g, cfg));
  return a;
}

inline std::vector<TokenId> random_tokens(Gen& g, const StreamConfig& cfg, std::size_t n) {
  std::vector<TokenId> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(static_cast<TokenId>(draw(g, 0, cfg.text_vocab_base - 1)));
  return t;
}

inline AlignedPair random_pair(Gen& g, const StreamConfig& cfg, std::size_t t_len, std::size_t a_len,
                               std::string id = "pair") {
  return {random_tokens(g, cfg, t_len), random_audio(g, cfg, a_len), std::move(id)};
}

struct ExchangeShape {
  std::size_t user_frames;
  std::size_t user_tokens;
  std::size_t reply_tokens;
  std::size_t reply_frames;
};

inline DialogScript make_dialog(Gen& g, const StreamConfig& cfg, const std::vector<ExchangeShape>& shape,
                                std::string id = "dialog") {
  DialogScript d;
  d.dialog_id = std::move(id);
  for (const auto& s : shape) {
    d.turns.push_back({Speaker::User, random_tokens(g, cfg, s.user_tokens), random_audio(g, cfg, s.user_frames), {}});
    d.turns.push_back(
        {Speaker::Model, random_tokens(g, cfg, s.reply_tokens), random_audio(g, cfg, s.reply_frames), {}});
  }
  return d;
}

/// Any frame sequence at all: random text incl. specials, random or empty codes,
/// canonical labels and a few markers.
inline FrameSequence random_sequence(Gen& g, const StreamConfig& cfg, std::size_t len) {
  FrameSequence s(cfg, "random");
  for (std::size_t t = 0; t < len; ++t) {
    Frame f = Frame::filler(cfg, static_cast<TokenId>(draw(g, 0, cfg.text_vocab_size() - 1)));
    for (auto* ch : {&f.listen, &f.speak})
      for (auto& c : *ch)
        if (draw(g, 0, 2) != 0) c = static_cast<TokenId>(draw(g, 0, cfg.audio_vocab_size - 1));
    s.push_back(std::move(f));
  }
  const std::size_t markers = len == 0 ? 0 : draw(g, 0, 4);
  for (std::size_t i = 0; i < markers; ++i)
    s.add_marker(draw(g, 0, len - 1), static_cast<MarkerKind>(draw(g, 0, 3)));
  s.sort_markers();
  return s;
}

// ----------------------------------------------------------------- oracles

/// Supervision class of one slot straight from the class table.
inline SupervisionClass oracle_class(const StreamConfig& cfg, const Frame& f, std::size_t slot) {
  if (slot == 0) {
    if (f.text == cfg.wait_id()) return SupervisionClass::Wait;
    if (f.text == cfg.pad_id() || f.text == cfg.bos_id()) return SupervisionClass::Unsupervised;
    return SupervisionClass::Monologue;
  }
  if (slot <= cfg.num_codebooks) return SupervisionClass::Unsupervised;
  const std::size_t k = slot - 1 - cfg.num_codebooks;
  if (f.speak[k] == cfg.empty_audio_id()) return SupervisionClass::Unsupervised;
  return k == 0 ? SupervisionClass::SpeakSemantic : SupervisionClass::SpeakAcoustic;
}

/// Half-open step interval.
struct Span {
  std::size_t lo = 0, hi = 0;
  bool has(std::size_t t) const { return t >= lo && t < hi; }
};

/// A response as the oracle sees it: text from `text_at`, speech `lead` later.
struct OracleResponse {
  Span text;
  Span semantic;
  Span acoustic;
  const std::vector<TokenId>* tokens;
  const std::vector<Codes>* audio;
};

/// Fills frame t from the closed-form spans. Later entries win nothing: spans
/// never overlap in valid layouts, and the test asserts that separately.
struct LayoutOracle {
  StreamConfig cfg;
  std::size_t length = 0;
  std::vector<std::pair<Span, const std::vector<Codes>*>> listen;
  std::vector<std::pair<std::size_t, TokenId>> text_points;  // single specials
  std::vector<std::pair<Span, const std::vector<TokenId>*>> text_runs;
  std::vector<OracleResponse> responses;
  TokenId background = 0;  // text outside every run

  Frame frame(std::size_t t) const {
    Frame f = Frame::filler(cfg, background);
    for (const auto& [sp, a] : listen)
      if (sp.has(t)) f.listen = (*a)[t - sp.lo];
    for (const auto& [step, id] : text_points)
      if (step == t) f.text = id;
    for (const auto& [sp, toks] : text_runs)
      if (sp.has(t)) f.text = (*toks)[t - sp.lo];
    for (const auto& r : responses) {
      if (r.text.has(t)) f.text = (*r.tokens)[t - r.text.lo];
      if (r.semantic.has(t)) f.speak[0] = (*r.audio)[t - r.semantic.lo][0];
      if (r.acoustic.has(t))
        for (std::size_t k = 1; k < cfg.num_codebooks; ++k) f.speak[k] = (*r.audio)[t - r.acoustic.lo][k];
    }
    return f;
  }

  std::vector<Frame> frames() const {
    std::vector<Frame> out;
    for (std::size_t t = 0; t < length; ++t) out.push_back(frame(t));
    return out;
  }
};

inline LayoutOracle tts_oracle(const AlignedPair& p, const StreamConfig& cfg) {
  const std::size_t T = p.transcript.size(), A = p.audio.size();
  const std::size_t lead = cfg.text_lead_steps, d = cfg.acoustic_delay_steps;
  LayoutOracle o;
  o.cfg = cfg;
  o.background = cfg.wait_id();
  o.responses.push_back({{0, T}, {lead, lead + A}, {lead + d, lead + d + A}, &p.transcript, &p.audio});
  o.length = std::max(T, lead + d + A);
  return o;
}

inline LayoutOracle asr_oracle(const AlignedPair& p, const StreamConfig& cfg) {
  const std::size_t T = p.transcript.size(), A = p.audio.size();
  LayoutOracle o;
  o.cfg = cfg;
  o.background = cfg.wait_id();
  o.listen.push_back({{0, A}, &p.audio});
  o.text_runs.push_back({{A, A + T}, &p.transcript});
  o.length = A + T;
  return o;
}

/// Uninterrupted dialog layouts with a fixed inter-exchange gap `gap`.
inline LayoutOracle dialog_oracle(const DialogScript& d, const StreamConfig& cfg, bool asr, std::size_t gap,
                                  std::vector<Marker>* markers = nullptr) {
  const std::size_t lead = cfg.text_lead_steps, del = cfg.acoustic_delay_steps;
  LayoutOracle o;
  o.cfg = cfg;
  o.background = cfg.wait_id();
  std::size_t start = 0;
  for (std::size_t k = 0; k < d.exchanges(); ++k) {
    const Turn& u = d.turns[2 * k];
    const Turn& m = d.turns[2 * k + 1];
    const std::size_t U = u.audio.size(), T = m.transcript.size(), A = m.audio.size();
    o.listen.push_back({{start, start + U}, &u.audio});
    std::size_t p = start + U;
    if (asr) {
      o.text_points.push_back({p, cfg.asr_begin_id()});
      o.text_runs.push_back({{p + 1, p + 1 + u.transcript.size()}, &u.transcript});
      p += 1 + u.transcript.size();
    }
    o.text_points.push_back({p, cfg.answer_id()});
    const std::size_t ts = p + 1;
    o.responses.push_back({{ts, ts + T}, {ts + lead, ts + lead + A}, {ts + lead + del, ts + lead + del + A},
                           &m.transcript, &m.audio});
    if (markers) {
      markers->push_back({start, MarkerKind::UserOnset});
      markers->push_back({ts, MarkerKind::SentenceStart});
      markers->push_back({ts + T - 1, MarkerKind::SentenceEnd});
    }
    const std::size_t end = std::max(ts + T, ts + lead + del + A);
    o.length = end;
    start = end + gap;
  }
  if (markers) std::sort(markers->begin(), markers->end());
  return o;
}

inline std::vector<SupervisionClass> oracle_labels(const StreamConfig& cfg, const std::vector<Frame>& frames) {
  std::vector<SupervisionClass> out;
  for (const Frame& f : frames)
    for (std::size_t s = 0; s < cfg.slots_per_frame(); ++s) out.push_back(oracle_class(cfg, f, s));
  return out;
}

// ------------------------------------------------------------------ audio

inline Waveform sine(double hz, double amp, std::size_t n, std::uint32_t sr = 24000) {
  Waveform w;
  w.sample_rate_hz = sr;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * 3.14159265358979323846 * hz * static_cast<double>(i) / sr));
  return w;
}

inline Waveform noise(Gen& g, double amp, std::size_t n, std::uint32_t sr = 24000) {
  Waveform w;
  w.sample_rate_hz = sr;
  std::uniform_real_distribution<double> u(-amp, amp);
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(static_cast<float>(u(g)));
  return w;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  auto p = std::filesystem::temp_directory_path() /
           ("fdse-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Small on-disk corpora: tone WAVs plus a JSON-lines manifest.
inline std::filesystem::path write_pair_corpus(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed,
                                               std::size_t broken = 0) {
  Gen g(seed);
  std::filesystem::create_directories(dir / "wav");
  std::ofstream m(dir / "pairs.jsonl");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "utt" + std::to_string(i);
    const std::size_t hops = draw(g, 3, 12);
    write_wav((dir / "wav" / (id + ".wav")).string(), sine(100.0 + 50.0 * draw(g, 1, 60), 0.3, hops * 1920 + 100));
    nlohmann::json j{{"source_id", id}, {"wav_path", "wav/" + id + ".wav"}, {"lang", "en"}};
    if (i % 2 == 0) j["transcript_token_ids"] = random_tokens(g, StreamConfig{}, draw(g, 1, 8));
    else j["transcript_text"] = "hello " + std::to_string(i), j["tokenizer"] = "byte";
    m << j.dump() << "\n";
  }
  for (std::size_t i = 0; i < broken; ++i)
    m << nlohmann::json{{"source_id", "missing" + std::to_string(i)}, {"wav_path", "wav/none.wav"},
                        {"transcript_token_ids", {1, 2}}}.dump() << "\n";
  return dir / "pairs.jsonl";
}

inline std::filesystem::path write_dialog_corpus(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed,
                                                 std::size_t exchanges = 2) {
  Gen g(seed);
  std::filesystem::create_directories(dir / "wav");
  std::ofstream m(dir / "dialogs.jsonl");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "dlg" + std::to_string(i);
    nlohmann::json turns = nlohmann::json::array();
    for (std::size_t k = 0; k < 2 * exchanges; ++k) {
      const bool user = k % 2 == 0;
      const std::string name = id + "_" + std::to_string(k) + ".wav";
      const std::size_t hops = user ? draw(g, 7, 14) : draw(g, 12, 30);
      write_wav((dir / "wav" / name).string(), sine(user ? 220.0 : 660.0, user ? 0.25 : 0.4, hops * 1920));
      turns.push_back({{"speaker", user ? "user" : "model"},
                       {"wav_path", "wav/" + name},
                       {"transcript_token_ids", random_tokens(g, StreamConfig{}, draw(g, 2, 9))}});
    }
    m << nlohmann::json{{"dialog_id", id}, {"turns", turns}}.dump() << "\n";
  }
  return dir / "dialogs.jsonl";
}

inline std::filesystem::path write_noise_manifest(const std::filesystem::path& dir, std::uint64_t seed) {
  Gen g(seed);
  std::filesystem::create_directories(dir / "noise");
  std::ofstream m(dir / "noise.jsonl");
  for (int i = 0; i < 3; ++i) {
    const std::string name = "noise/n" + std::to_string(i) + ".wav";
    write_wav((dir / name).string(), noise(g, 0.2, 3000 + 1000 * i));
    m << nlohmann::json{{"wav_path", name}, {"category", i == 2 ? "speech" : "environmental"}}.dump() << "\n";
  }
  return dir / "noise.jsonl";
}

// Undoes the builder's cutoffs: every interrupted response is repainted from
// its script up to the step before the next response's <answer>. The result
// is what an uninterrupted model would say; the runtime must cut it again.
inline FrameSequence uncut_script(const FrameSequence& built, const DialogScript& d) {
  FrameSequence s = built;
  const auto& cfg = s.config;
  std::vector<std::uint64_t> starts, cuts;
  for (const auto& m : built.markers) {
    if (m.kind == MarkerKind::SentenceStart) starts.push_back(m.step);
    if (m.kind == MarkerKind::Cutoff) cuts.push_back(m.step);
  }
  for (std::uint64_t c : cuts) {
    std::size_t k = 0;
    while (k + 1 < starts.size() && starts[k + 1] < c) ++k;
    const Turn& m = d.turns[2 * k + 1];
    const std::size_t ts = starts[k];
    const std::size_t stop = k + 1 < starts.size() ? starts[k + 1] - 1 : s.size();
    const std::size_t sem = ts + cfg.text_lead_steps, ac = sem + cfg.acoustic_delay_steps;
    for (std::size_t t = c; t < stop; ++t) {
      Frame& f = s.frames[t];
      if (t - ts < m.transcript.size()) f.text = m.transcript[t - ts];
      if (t >= sem && t - sem < m.audio.size()) f.speak[0] = m.audio[t - sem][0];
      if (t >= ac && t - ac < m.audio.size())
        for (std::size_t i = 1; i < cfg.num_codebooks; ++i) f.speak[i] = m.audio[t - ac][i];
    }
  }
  s.markers.clear();
  s.relabel();
  return s;
}

inline std::vector<std::uint64_t> marker_steps(const FrameSequence& s, MarkerKind kind) {
  std::vector<std::uint64_t> out;
  for (const auto& m : s.markers)
    if (m.kind == kind) out.push_back(m.step);
  return out;
}

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& p) { return read_file_bytes(p.string()); }

}  // namespace fdse::test
