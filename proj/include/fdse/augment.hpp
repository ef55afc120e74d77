#ifndef FDSE_AUGMENT_HPP
#define FDSE_AUGMENT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdse/codec.hpp"
#include "fdse/rng.hpp"

namespace fdse {

class AugmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DbRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct AugmentSpec {
  double p_gain = 0.6;
  DbRange gain_db_range{-24.0, 20.0};
  double min_loudness_db = -40.0;
  DbRange noise_db_range{-70.0, -40.0};
  double p_noise_silence = 0.3;
  double p_leakage = 0.3;
  DbRange leakage_gain_range{0.0, 0.2};  // linear
  DbRange leakage_delay_range_s{0.1, 0.5};
  std::uint64_t seed = 0;

  void check() const {
    for (double p : {p_gain, p_noise_silence, p_leakage})
      if (!(p >= 0.0 && p <= 1.0)) throw AugmentError("probabilities must lie in [0, 1]");
    for (const DbRange& r : {gain_db_range, noise_db_range, leakage_gain_range, leakage_delay_range_s})
      if (!(r.lo <= r.hi)) throw AugmentError("ranges must satisfy low <= high");
    if (leakage_delay_range_s.lo < 0.0) throw AugmentError("leakage delay must be >= 0");
  }
};

inline double rms(std::span<const float> s) {
  if (s.empty()) return 0.0;
  double acc = 0.0;
  for (float x : s) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc / static_cast<double>(s.size()));
}

/// 20 * log10(rms + 1e-6).
inline double rms_db(std::span<const float> s) {
  if (s.empty()) throw AugmentError("rms_db of an empty waveform");
  return 20.0 * std::log10(rms(s) + 1e-6);
}

inline double rms_db(const Waveform& w) { return rms_db(std::span<const float>(w.samples)); }

/// Linear scale factor that brings `s` to exactly `target_db` under rms_db.
inline double gain_for_db(std::span<const float> s, double target_db) {
  const double r = rms(s);
  if (!(r > 0.0)) throw AugmentError("cannot scale a silent waveform to a target loudness");
  const double target_rms = std::pow(10.0, target_db / 20.0) - 1e-6;
  if (!(target_rms > 0.0)) throw AugmentError("target loudness is below the rms_db floor");
  return target_rms / r;
}

inline void scale_in_place(std::span<float> s, double k) {
  for (float& x : s) x = static_cast<float>(static_cast<double>(x) * k);
}

inline Waveform apply_gain_to_db(const Waveform& w, double target_db) {
  Waveform out = w;
  scale_in_place(out.samples, gain_for_db(w.samples, target_db));
  return out;
}

inline void clip_unit(std::span<float> s) {
  for (float& x : s) x = std::clamp(x, -1.0f, 1.0f);
}

struct NoiseClipTrace {
  std::size_t pool_index = 0;
  std::size_t offset = 0;  // into the noise track
  std::size_t length = 0;
  double target_db = 0.0;
  double scaled_db = 0.0;  // rms_db after scaling, before silencing
  bool silenced = false;
};

struct UserAugmentTrace {
  bool gain_applied = false;
  double gain_db = 0.0;
  bool floored = false;
  double final_user_db = 0.0;  // rms_db of the utterance after gain and floor
  std::vector<NoiseClipTrace> clips;
};

struct UserAugmentResult {
  Waveform audio;
  UserAugmentTrace trace;
};

/// Random gain with a loudness floor, then a noise track of concatenated pool
/// clips each scaled to a random level (or silenced), mixed in and clipped.
inline UserAugmentResult augment_user_audio(const Waveform& w, std::span<const Waveform> noise_pool,
                                            const AugmentSpec& spec, Rng& rng) {
  spec.check();
  UserAugmentResult res{w, {}};
  std::vector<float>& out = res.audio.samples;

  if (rng.bernoulli(spec.p_gain)) {
    const double g = rng.uniform(spec.gain_db_range.lo, spec.gain_db_range.hi);
    res.trace.gain_applied = true;
    res.trace.gain_db = g;
    scale_in_place(out, std::pow(10.0, g / 20.0));
    if (!out.empty() && rms(out) > 0.0 && rms_db(out) < spec.min_loudness_db) {
      scale_in_place(out, gain_for_db(out, spec.min_loudness_db));
      res.trace.floored = true;
    }
  }
  if (!out.empty()) res.trace.final_user_db = rms_db(out);

  if (out.empty()) return res;
  if (noise_pool.empty()) throw AugmentError("noise pool is empty");
  for (const auto& clip : noise_pool)
    if (clip.sample_rate_hz != w.sample_rate_hz) throw AugmentError("noise clip sample rate differs from the utterance");

  std::vector<float> noise(out.size(), 0.0f);
  std::size_t pos = 0;
  while (pos < noise.size()) {
    NoiseClipTrace c;
    c.pool_index = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(noise_pool.size()) - 1));
    c.target_db = rng.uniform(spec.noise_db_range.lo, spec.noise_db_range.hi);
    c.silenced = rng.bernoulli(spec.p_noise_silence);
    const auto& src = noise_pool[c.pool_index].samples;
    c.offset = pos;
    c.length = std::min(src.size(), noise.size() - pos);
    if (c.length == 0) {
      // Empty pool clips contribute nothing but still advance the draw.
      res.trace.clips.push_back(c);
      if (std::all_of(noise_pool.begin(), noise_pool.end(), [](const Waveform& x) { return x.empty(); }))
        throw AugmentError("noise pool holds only empty clips");
      continue;
    }
    std::span<float> seg(noise.data() + pos, c.length);
    std::copy_n(src.begin(), c.length, seg.begin());
    if (rms(seg) > 0.0) {
      scale_in_place(seg, gain_for_db(seg, c.target_db));
      c.scaled_db = rms_db(seg);
    } else {
      c.scaled_db = rms_db(seg);
    }
    if (c.silenced) std::fill(seg.begin(), seg.end(), 0.0f);
    res.trace.clips.push_back(c);
    pos += c.length;
  }

  for (std::size_t i = 0; i < out.size(); ++i) out[i] += noise[i];
  clip_unit(out);
  return res;
}

struct LeakageTrace {
  bool applied = false;
  double gain = 0.0;
  double delay_s = 0.0;
  std::size_t delay_samples = 0;
};

struct LeakageResult {
  Waveform audio;
  LeakageTrace trace;
};

/// With probability p_leakage, mixes an attenuated, delayed copy of the speak
/// track into the listen track (zero-padded at the head), then clips.
inline LeakageResult speech_leakage(const Waveform& listen, const Waveform& speak, const AugmentSpec& spec,
                                    Rng& rng) {
  spec.check();
  if (listen.sample_rate_hz != speak.sample_rate_hz)
    throw AugmentError("listen and speak tracks have different sample rates");
  LeakageResult res{listen, {}};
  if (!rng.bernoulli(spec.p_leakage)) return res;

  auto& t = res.trace;
  t.applied = true;
  t.gain = rng.uniform(spec.leakage_gain_range.lo, spec.leakage_gain_range.hi);
  t.delay_s = rng.uniform(spec.leakage_delay_range_s.lo, spec.leakage_delay_range_s.hi);
  const double sr = listen.sample_rate_hz;
  const auto lo = static_cast<std::size_t>(std::ceil(spec.leakage_delay_range_s.lo * sr - 1e-9));
  const auto hi = static_cast<std::size_t>(std::floor(spec.leakage_delay_range_s.hi * sr + 1e-9));
  t.delay_samples = std::clamp(static_cast<std::size_t>(std::floor(t.delay_s * sr)), lo, hi);

  auto& out = res.audio.samples;
  for (std::size_t i = t.delay_samples; i < out.size(); ++i) {
    const std::size_t j = i - t.delay_samples;
    if (j >= speak.samples.size()) break;
    out[i] = static_cast<float>(static_cast<double>(out[i]) + t.gain * static_cast<double>(speak.samples[j]));
  }
  clip_unit(out);
  return res;
}

}  // namespace fdse

#endif  // FDSE_AUGMENT_HPP
