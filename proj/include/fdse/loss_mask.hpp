#ifndef FDSE_LOSS_MASK_HPP
#define FDSE_LOSS_MASK_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdse/frame.hpp"
#include "fdse/frame_io.hpp"

namespace fdse {

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Class weights of the multi-channel cross-entropy.
struct LossWeights {
  double alpha1 = 1.0;  // speak, semantic
  double alpha2 = 0.5;  // speak, acoustic
  double beta = 1.0;    // monologue
  double gamma = 0.01;  // wait

  /// Word-aligned baseline profile (semantic-heavy, large pad weight).
  static LossWeights moshi() { return {100.0, 1.0, 1.0, 0.5}; }

  double of(SupervisionClass c) const {
    switch (c) {
      case SupervisionClass::SpeakSemantic: return alpha1;
      case SupervisionClass::SpeakAcoustic: return alpha2;
      case SupervisionClass::Monologue: return beta;
      case SupervisionClass::Wait: return gamma;
      case SupervisionClass::Unsupervised: return 0.0;
    }
    return 0.0;
  }

  void check() const {
    for (double w : {alpha1, alpha2, beta, gamma})
      if (!(w >= 0.0)) throw LossError("loss weights must be >= 0");
  }
};

/// One weight per (frame, slot), same ordering as the frame file.
struct WeightMap {
  std::size_t frames = 0;
  std::size_t slots = 0;
  std::vector<double> weights;

  double at(std::size_t frame, std::size_t slot) const { return weights[frame * slots + slot]; }
  double total() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
};

inline WeightMap weight_map(const FrameSequence& seq, const LossWeights& w) {
  w.check();
  WeightMap m{seq.size(), seq.slots(), {}};
  m.weights.resize(seq.supervision.size());
  for (std::size_t i = 0; i < seq.supervision.size(); ++i) m.weights[i] = w.of(seq.supervision[i]);
  // Empty speak slots never carry weight, whatever their label says.
  const TokenId empty = seq.config.empty_audio_id();
  for (std::size_t t = 0; t < seq.size(); ++t)
    for (std::size_t i = 0; i < seq.config.num_codebooks; ++i)
      if (seq.frames[t].speak[i] == empty) m.weights[t * m.slots + seq.config.speak_slot(i)] = 0.0;
  return m;
}

/// Flat little-endian f32 export for external trainers.
inline std::vector<std::uint8_t> serialize_weights(const WeightMap& m) {
  std::vector<std::uint8_t> out;
  out.reserve(m.weights.size() * 4);
  for (double w : m.weights) {
    const auto f = static_cast<float>(w);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    le::put<std::uint32_t>(out, bits);
  }
  return out;
}

inline std::vector<float> deserialize_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw LossError("weight file size is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto bits = le::get<std::uint32_t>(bytes.data() + 4 * i);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

struct CeResult {
  double loss = 0.0;  // sum(w * nll) / sum(w)
  std::array<double, kNumSupervisionClasses> weighted_nll{};  // per class: sum(w * nll)
  std::array<double, kNumSupervisionClasses> weight{};        // per class: sum(w)
  double total_weight = 0.0;
};

/// Log-probabilities per (frame, slot), flat in frame-file order. A position
/// may be left empty when its weight is zero.
using LogProbTable = std::vector<std::vector<double>>;

inline CeResult weighted_ce(const LogProbTable& logprobs, const FrameSequence& targets, const WeightMap& map) {
  const std::size_t slots = targets.slots();
  const std::size_t n = targets.size() * slots;
  if (logprobs.size() != n || map.weights.size() != n || targets.supervision.size() != n)
    throw LossError("shape mismatch: " + std::to_string(logprobs.size()) + " distributions, " +
                    std::to_string(map.weights.size()) + " weights, " + std::to_string(n) + " positions");
  CeResult r;
  for (std::size_t p = 0; p < n; ++p) {
    const double w = map.weights[p];
    if (w == 0.0) continue;
    const auto& dist = logprobs[p];
    double mass = 0.0;
    for (double lp : dist) mass += std::exp(lp);
    if (std::abs(mass - 1.0) > 1e-6)
      throw LossError("distribution at position " + std::to_string(p) + " sums to " + std::to_string(mass));
    const Frame& f = targets.frames[p / slots];
    const std::size_t slot = p % slots;
    const TokenId target = slot == 0                                 ? f.text
                           : slot <= targets.config.num_codebooks ? f.listen[slot - 1]
                                                                  : f.speak[slot - 1 - targets.config.num_codebooks];
    if (target >= dist.size())
      throw LossError("target " + std::to_string(target) + " outside distribution at position " + std::to_string(p));
    const auto cls = static_cast<std::size_t>(targets.supervision[p]);
    r.weighted_nll[cls] += w * -dist[target];
    r.weight[cls] += w;
    r.total_weight += w;
  }
  if (!(r.total_weight > 0.0)) throw LossError("no supervised positions (all weights are zero)");
  double sum = 0.0;
  for (double v : r.weighted_nll) sum += v;
  r.loss = sum / r.total_weight;
  return r;
}

}  // namespace fdse

#endif  // FDSE_LOSS_MASK_HPP
