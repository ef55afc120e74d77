#ifndef FDSE_CODEC_HPP
#define FDSE_CODEC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdse/frame.hpp"

namespace fdse {

struct Waveform {
  std::vector<float> samples;
  std::uint32_t sample_rate_hz = 24000;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
  bool operator==(const Waveform&) const = default;
};

/// K codes of one frame on one channel.
using Codes = std::vector<TokenId>;

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Waveform <-> code-frame bridge. Implementations must be stateless per call
/// so a single instance can serve several streams from different threads.
class CodecInterface {
 public:
  virtual ~CodecInterface() = default;

  virtual const StreamConfig& config() const = 0;

  /// Exactly one hop of samples in, one code frame out.
  virtual Codes encode_hop(std::span<const float> hop) const = 0;

  /// Exactly hop_samples out.
  virtual std::vector<float> decode_frame(std::span<const TokenId> codes) const = 0;

  /// floor(samples / hop) frames; a trailing partial hop is dropped.
  std::vector<Codes> encode(const Waveform& w) const {
    const auto& cfg = config();
    if (w.sample_rate_hz != cfg.sample_rate_hz)
      throw CodecError("sample rate " + std::to_string(w.sample_rate_hz) + " Hz, codec expects " +
                       std::to_string(cfg.sample_rate_hz) + " Hz");
    const std::size_t hop = cfg.hop_samples;
    const std::size_t n = w.samples.size() / hop;
    std::vector<Codes> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(encode_hop(std::span<const float>(w.samples).subspan(i * hop, hop)));
    return out;
  }

  Waveform decode(std::span<const Codes> frames) const {
    const auto& cfg = config();
    Waveform w;
    w.sample_rate_hz = cfg.sample_rate_hz;
    w.samples.reserve(frames.size() * cfg.hop_samples);
    for (const Codes& c : frames) {
      auto chunk = decode_frame(c);
      w.samples.insert(w.samples.end(), chunk.begin(), chunk.end());
    }
    return w;
  }
};

/// Deterministic stand-in codec. Each code is the quantized log energy of one
/// spectral band (Blackman-Harris windowed Goertzel probes at up to 8 bins per band);
/// decoding renders one sinusoid per band at the encoded level. Fidelity is
/// not a goal, determinism and the length laws are.
class PseudoCodec final : public CodecInterface {
 public:
  static constexpr double kFloorDb = -90.0;
  static constexpr std::size_t kProbesPerBand = 8;
  static constexpr double kBh[4] = {0.35875, 0.48829, 0.14128, 0.01168};

  explicit PseudoCodec(StreamConfig cfg) : cfg_(cfg) {
    cfg_.require_valid();
    const std::size_t k = cfg_.num_codebooks;
    const std::size_t n = cfg_.hop_samples;
    const double nyquist = cfg_.sample_rate_hz / 2.0;
    const double df = static_cast<double>(cfg_.sample_rate_hz) / static_cast<double>(n);

    edges_.resize(k + 1);
    edges_[0] = 0.0;
    for (std::size_t i = 1; i <= k; ++i)
      edges_[i] = 100.0 * std::pow(nyquist / 100.0, static_cast<double>(i) / static_cast<double>(k));

    window_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
    {
      // 4-term Blackman-Harris: sidelobes sit below the quantizer floor, so a
      // steady tone codes the same whatever its phase within the hop.
      const double x = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
      window_[i] = kBh[0] - kBh[1] * std::cos(x) + kBh[2] * std::cos(2 * x) - kBh[3] * std::cos(3 * x);
    }

    probes_.resize(k);
    centers_.resize(k);
    for (std::size_t b = 0; b < k; ++b) {
      const auto lo = static_cast<std::size_t>(std::ceil(edges_[b] / df));
      auto hi = static_cast<std::size_t>(std::ceil(edges_[b + 1] / df));  // exclusive
      if (b + 1 == k) hi = std::max(hi, n / 2 + 1);
      hi = std::min(hi, n / 2 + 1);
      std::vector<std::size_t> bins;
      if (hi > lo) {
        const std::size_t count = std::min(kProbesPerBand, hi - lo);
        for (std::size_t j = 0; j < count; ++j) bins.push_back(lo + j * (hi - lo) / count);
      }
      probes_[b] = std::move(bins);
      centers_[b] = 0.5 * (edges_[b] + edges_[b + 1]);
    }
  }

  const StreamConfig& config() const override { return cfg_; }

  TokenId max_code() const { return cfg_.empty_audio_id() - 1; }

  /// Monotone map from band level in dB to a code in [0, empty).
  TokenId quantize_db(double db) const {
    const double x = std::clamp((db - kFloorDb) / -kFloorDb, 0.0, 1.0);
    return static_cast<TokenId>(std::lround(x * max_code()));
  }

  double dequantize_db(TokenId code) const {
    if (max_code() == 0) return 0.0;
    return kFloorDb + (-kFloorDb) * static_cast<double>(code) / static_cast<double>(max_code());
  }

  /// Normalized band energies: a full-scale sinusoid on a probed bin reads 1.
  std::vector<double> band_energies(std::span<const float> hop) const {
    const std::size_t n = cfg_.hop_samples;
    if (hop.size() != n) throw CodecError("encode_hop expects exactly hop_samples samples");
    const double norm = static_cast<double>(n) * kBh[0] / 2.0;
    std::vector<double> e(probes_.size(), 0.0);
    for (std::size_t b = 0; b < probes_.size(); ++b) {
      if (probes_[b].empty()) continue;
      double acc = 0.0;
      for (std::size_t bin : probes_[b]) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(bin) / static_cast<double>(n);
        const double coeff = 2.0 * std::cos(w);
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double s0 = window_[i] * hop[i] + coeff * s1 - s2;
          s2 = s1;
          s1 = s0;
        }
        const double power = s1 * s1 + s2 * s2 - coeff * s1 * s2;
        acc += power / (norm * norm);
      }
      e[b] = acc / static_cast<double>(probes_[b].size());
    }
    return e;
  }

  Codes encode_hop(std::span<const float> hop) const override {
    const auto energies = band_energies(hop);
    Codes codes(energies.size());
    for (std::size_t b = 0; b < energies.size(); ++b)
      codes[b] = quantize_db(10.0 * std::log10(energies[b] + 1e-12));
    return codes;
  }

  std::vector<float> decode_frame(std::span<const TokenId> codes) const override {
    const std::size_t k = cfg_.num_codebooks;
    if (codes.size() != k)
      throw CodecError("decode expects " + std::to_string(k) + " codes, got " + std::to_string(codes.size()));
    for (TokenId c : codes)
      if (c >= cfg_.audio_vocab_size) throw CodecError("code " + std::to_string(c) + " out of range");
    std::vector<double> acc(cfg_.hop_samples, 0.0);
    for (std::size_t b = 0; b < k; ++b) {
      if (codes[b] == cfg_.empty_audio_id()) continue;
      const double amp = std::pow(10.0, dequantize_db(codes[b]) / 20.0) / static_cast<double>(k);
      const double w = 2.0 * std::numbers::pi * centers_[b] / cfg_.sample_rate_hz;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += amp * std::sin(w * static_cast<double>(i));
    }
    return std::vector<float>(acc.begin(), acc.end());
  }

 private:
  StreamConfig cfg_;
  std::vector<double> edges_;
  std::vector<double> window_;
  std::vector<std::vector<std::size_t>> probes_;
  std::vector<double> centers_;
};

}  // namespace fdse

#endif  // FDSE_CODEC_HPP
