#ifndef FDSE_ANALYZER_HPP
#define FDSE_ANALYZER_HPP

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdse/frame.hpp"

namespace fdse {

enum class Scheme { Native, TDM };

/// Native merges every channel into one step; TDM gives each token slot its
/// own position in the sequence.
struct SchedulingScheme {
  Scheme scheme = Scheme::Native;
  std::uint32_t channels = 17;

  double positions_per_second(const StreamConfig& cfg) const {
    return cfg.frame_rate_hz.value() * (scheme == Scheme::TDM ? channels : 1);
  }
};

struct CostReport {
  double duration_s = 0.0;
  std::uint32_t channels = 17;
  std::uint64_t native_ctx_len = 0;
  std::uint64_t tdm_ctx_len = 0;
  double attention_ops_native = 0.0;  // ctx^2 proxy
  double attention_ops_tdm = 0.0;
  std::uint64_t budget_tokens = 0;
  double max_audio_s_native = 0.0;
  double max_audio_s_tdm = 0.0;
};

/// ceil(duration * frame_rate), tolerant of binary rounding (0.08 s -> 1).
inline std::uint64_t native_steps(double duration_s, const StreamConfig& cfg) {
  if (duration_s < 0) throw std::invalid_argument("duration must be >= 0");
  const double x = duration_s * static_cast<double>(cfg.frame_rate_hz.num) / static_cast<double>(cfg.frame_rate_hz.den);
  return static_cast<std::uint64_t>(std::ceil(x - 1e-9));
}

inline CostReport context_growth(double duration_s, const StreamConfig& cfg, std::uint32_t channels = 17,
                                 std::uint64_t budget_tokens = 8192) {
  if (channels == 0) throw std::invalid_argument("channels must be positive");
  CostReport r;
  r.duration_s = duration_s;
  r.channels = channels;
  r.native_ctx_len = native_steps(duration_s, cfg);
  r.tdm_ctx_len = r.native_ctx_len * channels;
  r.attention_ops_native = static_cast<double>(r.native_ctx_len) * static_cast<double>(r.native_ctx_len);
  r.attention_ops_tdm = static_cast<double>(r.tdm_ctx_len) * static_cast<double>(r.tdm_ctx_len);
  r.budget_tokens = budget_tokens;
  r.max_audio_s_native =
      static_cast<double>(budget_tokens) / SchedulingScheme{Scheme::Native, channels}.positions_per_second(cfg);
  r.max_audio_s_tdm =
      static_cast<double>(budget_tokens) / SchedulingScheme{Scheme::TDM, channels}.positions_per_second(cfg);
  return r;
}

/// "seconds,native_ctx,tdm_ctx" rows every `step_s` up to `duration_s`.
inline std::string context_csv(double duration_s, double step_s, const StreamConfig& cfg, std::uint32_t channels = 17) {
  if (!(step_s > 0)) throw std::invalid_argument("step must be positive");
  std::ostringstream os;
  os << "seconds,native_ctx,tdm_ctx\n";
  const auto n = static_cast<std::uint64_t>(std::floor(duration_s / step_s + 1e-9));
  for (std::uint64_t i = 0; i <= n; ++i) {
    const double s = static_cast<double>(i) * step_s;
    const auto native = native_steps(s, cfg);
    os << s << ',' << native << ',' << native * channels << '\n';
  }
  return os.str();
}

struct TextChannelStats {
  std::size_t length = 0;
  std::size_t ordinary_tokens = 0;
  std::size_t longest_run = 0;  // contiguous ordinary tokens
  std::size_t runs = 0;         // fragmentation: number of contiguous ordinary runs
  std::size_t wait_count = 0;
  std::size_t pad_count = 0;
  double wait_fraction = 0.0;
  double pad_fraction = 0.0;
};

inline TextChannelStats text_channel_stats(const FrameSequence& seq) {
  const StreamConfig& cfg = seq.config;
  TextChannelStats s;
  s.length = seq.size();
  std::size_t run = 0;
  for (const Frame& f : seq.frames) {
    if (cfg.is_ordinary_text(f.text)) {
      ++s.ordinary_tokens;
      if (run++ == 0) ++s.runs;
      s.longest_run = std::max(s.longest_run, run);
    } else {
      run = 0;
      if (f.text == cfg.wait_id()) ++s.wait_count;
      if (f.text == cfg.pad_id()) ++s.pad_count;
    }
  }
  if (s.length > 0) {
    s.wait_fraction = static_cast<double>(s.wait_count) / static_cast<double>(s.length);
    s.pad_fraction = static_cast<double>(s.pad_count) / static_cast<double>(s.length);
  }
  return s;
}

struct MonologueComparison {
  TextChannelStats natural;
  TextChannelStats word_aligned;
};

/// Contrasts a sentence-level layout with a word-level one built from the same
/// pair; both must carry the same source id and the same ordinary tokens.
inline MonologueComparison monologue_stats(const FrameSequence& natural, const FrameSequence& word_aligned) {
  if (natural.source_id != word_aligned.source_id)
    throw std::invalid_argument("monologue_stats: layouts come from different sources ('" + natural.source_id +
                                "' vs '" + word_aligned.source_id + "')");
  auto tokens = [](const FrameSequence& s) {
    std::vector<TokenId> out;
    for (const Frame& f : s.frames)
      if (s.config.is_ordinary_text(f.text)) out.push_back(f.text);
    return out;
  };
  if (tokens(natural) != tokens(word_aligned))
    throw std::invalid_argument("monologue_stats: layouts carry different transcripts");
  return {text_channel_stats(natural), text_channel_stats(word_aligned)};
}

}  // namespace fdse

#endif  // FDSE_ANALYZER_HPP
