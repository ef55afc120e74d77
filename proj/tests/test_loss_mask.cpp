#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace fdse;
using namespace fdse::test;

namespace {
const StreamConfig kCfg;

TokenId target_at(const FrameSequence& s, std::size_t p) {
  const auto& f = s.frames[p / 17];
  const std::size_t k = p % 17;
  return k == 0 ? f.text : k <= 8 ? f.listen[k - 1] : f.speak[k - 9];
}

// Counting oracle: weights straight from the frame contents.
double oracle_total(const FrameSequence& s, const LossWeights& w) {
  double sum = 0.0;
  for (const auto& f : s.frames) {
    if (f.text == kCfg.wait_id())
      sum += w.gamma;
    else if (f.text != kCfg.pad_id() && f.text != kCfg.bos_id())
      sum += w.beta;
    if (f.speak[0] != kCfg.empty_audio_id()) sum += w.alpha1;
    for (std::size_t k = 1; k < 8; ++k)
      if (f.speak[k] != kCfg.empty_audio_id()) sum += w.alpha2;
  }
  return sum;
}
}  // namespace

TEST(WeightMap, GoldenTotalAtDefaults) {
  Gen g(1);
  const auto s = align_tts(random_pair(g, kCfg, 5, 25), kCfg);
  const auto m = weight_map(s, LossWeights{});
  EXPECT_NEAR(m.total(), 117.73, 1e-9);
  EXPECT_EQ(m.frames, 28u);
  EXPECT_EQ(m.slots, 17u);
}

TEST(WeightMap, MoshiProfileOnSameLayout) {
  Gen g(1);
  const auto s = align_tts(random_pair(g, kCfg, 5, 25), kCfg);
  EXPECT_NEAR(weight_map(s, LossWeights::moshi()).total(), 100.0 * 25 + 1.0 * 175 + 1.0 * 5 + 0.5 * 23, 1e-9);
}

TEST(WeightMap, PackTailIsZero) {
  Gen g(2);
  const auto packs = pack(std::vector<FrameSequence>{align_tts(random_pair(g, kCfg, 5, 25), kCfg)}, PackingPolicy{});
  const auto m = weight_map(packs[0], LossWeights{});
  for (std::size_t t = 28; t < 8192; ++t)
    for (std::size_t k = 0; k < 17; ++k) ASSERT_EQ(m.at(t, k), 0.0);
}

TEST(WeightMap, MatchesCountingOracleAndNeverWeighsListen) {
  Gen g(3);
  for (int i = 0; i < 300; ++i) {
    const auto s = random_sequence(g, kCfg, draw(g, 1, 40));
    const LossWeights w{draw(g, 0, 100) / 10.0, draw(g, 0, 100) / 10.0, draw(g, 0, 100) / 10.0,
                        draw(g, 0, 100) / 100.0};
    const auto m = weight_map(s, w);
    EXPECT_NEAR(m.total(), oracle_total(s, w), 1e-9);
    for (std::size_t t = 0; t < m.frames; ++t)
      for (std::size_t k = 1; k <= 8; ++k) ASSERT_EQ(m.at(t, k), 0.0);
  }
}

TEST(WeightMap, ExportRoundTrip) {
  Gen g(4);
  const auto s = align_asr(random_pair(g, kCfg, 7, 9), kCfg);
  const auto m = weight_map(s, LossWeights{});
  const auto bytes = serialize_weights(m);
  ASSERT_EQ(bytes.size(), s.size() * 17 * 4);
  const auto back = deserialize_weights(bytes);
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], static_cast<float>(m.weights[i]));
  EXPECT_THROW(deserialize_weights(std::span(bytes).first(5)), LossError);
  EXPECT_THROW(weight_map(s, LossWeights{-1.0, 0.5, 1.0, 0.01}), LossError);
}

TEST(WeightedCe, OneHotGivesZero) {
  Gen g(5);
  const auto s = align_tts(random_pair(g, kCfg, 5, 25), kCfg);
  const auto m = weight_map(s, LossWeights{});
  LogProbTable lp(s.size() * 17);
  for (std::size_t p = 0; p < lp.size(); ++p) {
    if (m.weights[p] == 0.0) continue;
    const TokenId t = target_at(s, p);
    lp[p].assign(t + 1, -std::numeric_limits<double>::infinity());
    lp[p][t] = 0.0;
  }
  EXPECT_EQ(weighted_ce(lp, s, m).loss, 0.0);
}

TEST(WeightedCe, UniformGivesLnK) {
  StreamConfig small = kCfg;
  small.text_vocab_base = 100;  // every ID fits under K = 2049
  Gen g(6);
  const auto s = align_tts(random_pair(g, small, 5, 25), small);
  const std::size_t K = 2049;
  for (const LossWeights& w : {LossWeights{}, LossWeights::moshi(), LossWeights{0.3, 7.0, 0.0, 2.0}}) {
    const auto m = weight_map(s, w);
    LogProbTable lp(s.size() * 17);
    for (std::size_t p = 0; p < lp.size(); ++p)
      if (m.weights[p] > 0.0) lp[p].assign(K, -std::log(static_cast<double>(K)));
    EXPECT_NEAR(weighted_ce(lp, s, m).loss, std::log(static_cast<double>(K)), 1e-6);
  }
}

TEST(WeightedCe, PartialSumsAndLinearity) {
  StreamConfig small = kCfg;
  small.text_vocab_base = 100;
  Gen g(7);
  const auto s = align_tts(random_pair(g, small, 9, 14), small);
  LogProbTable lp(s.size() * 17);
  for (auto& d : lp) {
    std::vector<double> raw(2049);
    double z = 0.0;
    for (auto& x : raw) z += (x = 0.1 + draw(g, 0, 1000) / 100.0);
    for (auto& x : raw) x = std::log(x / z);
    d = raw;
  }
  LossWeights w;
  const auto a = weighted_ce(lp, s, weight_map(s, w));
  double sum = 0.0;
  for (double v : a.weighted_nll) sum += v;
  EXPECT_NEAR(sum / a.total_weight, a.loss, 1e-12);
  EXPECT_EQ(a.weight[static_cast<int>(SupervisionClass::Unsupervised)], 0.0);
  w.beta *= 2;
  const auto b = weighted_ce(lp, s, weight_map(s, w));
  const auto mono = static_cast<int>(SupervisionClass::Monologue);
  EXPECT_NEAR(b.weighted_nll[mono], 2.0 * a.weighted_nll[mono], 1e-9);
  EXPECT_EQ(b.weighted_nll[static_cast<int>(SupervisionClass::SpeakSemantic)],
            a.weighted_nll[static_cast<int>(SupervisionClass::SpeakSemantic)]);
}

TEST(WeightedCe, Errors) {
  Gen g(8);
  const auto s = align_tts(random_pair(g, kCfg, 2, 3), kCfg);
  const auto zero = weight_map(s, LossWeights{0, 0, 0, 0});
  EXPECT_THROW(weighted_ce(LogProbTable(s.size() * 17), s, zero), LossError);
  const auto m = weight_map(s, LossWeights{});
  EXPECT_THROW(weighted_ce(LogProbTable(3), s, m), LossError);
  LogProbTable half(s.size() * 17);
  for (std::size_t p = 0; p < half.size(); ++p)
    if (m.weights[p] > 0.0) half[p].assign(40000, std::log(0.5 / 40000));
  EXPECT_THROW(weighted_ce(half, s, m), LossError);
}
