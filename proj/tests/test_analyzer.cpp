#include <gtest/gtest.h>

#include "support.hpp"

using namespace fdse;
using namespace fdse::test;

namespace {
const StreamConfig kCfg;

std::vector<std::uint64_t> spread(std::size_t words, std::size_t frames, Gen& g) {
  // distinct increasing word starts inside [0, frames)
  std::vector<std::uint64_t> all(frames);
  for (std::size_t i = 0; i < frames; ++i) all[i] = i;
  std::shuffle(all.begin(), all.end(), g);
  all.resize(words);
  std::sort(all.begin(), all.end());
  return all;
}
}  // namespace

TEST(ContextGrowth, ZeroSeconds) {
  const auto r = context_growth(0.0, kCfg);
  EXPECT_EQ(r.native_ctx_len, 0u);
  EXPECT_EQ(r.tdm_ctx_len, 0u);
  EXPECT_EQ(r.attention_ops_native, 0.0);
  EXPECT_EQ(r.attention_ops_tdm, 0.0);
}

TEST(ContextGrowth, SixtySeconds) {
  const auto r = context_growth(60.0, kCfg);
  EXPECT_EQ(r.native_ctx_len, 750u);
  EXPECT_EQ(r.tdm_ctx_len, 12750u);
  EXPECT_DOUBLE_EQ(r.attention_ops_tdm / r.attention_ops_native, 289.0);
}

TEST(ContextGrowth, BudgetInSeconds) {
  const auto r = context_growth(1.0, kCfg, 17, 8192);
  EXPECT_NEAR(r.max_audio_s_native, 655.36, 1e-9);
  EXPECT_NEAR(r.max_audio_s_tdm, 8192.0 / 212.5, 1e-9);
  EXPECT_NEAR(r.max_audio_s_tdm, 38.55, 0.01);
}

TEST(ContextGrowth, RatioIsChannelsForEveryDuration) {
  Gen g(1);
  for (int i = 0; i < 2000; ++i) {
    const double d = draw(g, 1, 10'000'000) / 1000.0;
    const auto r = context_growth(d, kCfg);
    ASSERT_GT(r.native_ctx_len, 0u);
    EXPECT_EQ(r.tdm_ctx_len, 17 * r.native_ctx_len);
    EXPECT_DOUBLE_EQ(r.attention_ops_tdm / r.attention_ops_native, 289.0);
    EXPECT_GE(r.native_ctx_len * 0.08, d - 1e-6);
    EXPECT_LT((r.native_ctx_len - 1) * 0.08, d);
  }
  EXPECT_EQ(context_growth(0.08, kCfg).native_ctx_len, 1u);
  EXPECT_EQ(context_growth(0.081, kCfg).native_ctx_len, 2u);
  EXPECT_THROW(context_growth(-1.0, kCfg), std::invalid_argument);
}

TEST(ContextGrowth, CsvRows) {
  const auto csv = context_csv(1.0, 0.5, kCfg);
  EXPECT_EQ(csv, "seconds,native_ctx,tdm_ctx\n0,0,0\n0.5,7,119\n1,13,221\n");
}

TEST(MonologueStats, GoldenT5A25) {
  Gen g(2);
  const auto p = random_pair(g, kCfg, 5, 25);
  const std::vector<std::uint64_t> words{0, 4, 8, 12, 16};
  const auto c = monologue_stats(align_tts(p, kCfg), moshi_word_align(p, words, kCfg));
  EXPECT_EQ(c.natural.longest_run, 5u);
  EXPECT_EQ(c.natural.runs, 1u);
  EXPECT_EQ(c.natural.wait_count, 23u);
  EXPECT_DOUBLE_EQ(c.natural.wait_fraction, 23.0 / 28.0);
  EXPECT_EQ(c.word_aligned.longest_run, 1u);
  EXPECT_EQ(c.word_aligned.runs, 5u);
  EXPECT_DOUBLE_EQ(c.word_aligned.pad_fraction, 20.0 / 25.0);
}

TEST(MonologueStats, SingleWord) {
  Gen g(3);
  const auto p = random_pair(g, kCfg, 1, 4);
  const std::vector<std::uint64_t> words{2};
  const auto c = monologue_stats(align_tts(p, kCfg), moshi_word_align(p, words, kCfg));
  EXPECT_EQ(c.natural.longest_run, 1u);
  EXPECT_EQ(c.word_aligned.longest_run, 1u);
}

TEST(MonologueStats, ClosedFormOverRandomPairs) {
  Gen g(4);
  for (int i = 0; i < 300; ++i) {
    const std::size_t T = draw(g, 1, 20), A = draw(g, T, 60);
    const auto p = random_pair(g, kCfg, T, A, "m" + std::to_string(i));
    const auto words = spread(T, A, g);
    const auto c = monologue_stats(align_tts(p, kCfg), moshi_word_align(p, words, kCfg));
    const std::size_t L = std::max(T, A + 3);
    EXPECT_EQ(c.natural.length, L);
    EXPECT_EQ(c.natural.longest_run, T);
    EXPECT_EQ(c.natural.runs, 1u);
    EXPECT_DOUBLE_EQ(c.natural.wait_fraction, static_cast<double>(L - T) / L);
    std::size_t runs = 0, longest = 0, cur = 0;
    for (std::size_t t = 0; t < A; ++t) {
      const bool word = std::find(words.begin(), words.end(), t) != words.end();
      cur = word ? cur + 1 : 0;
      if (cur == 1) ++runs;
      longest = std::max(longest, cur);
    }
    EXPECT_EQ(c.word_aligned.runs, runs);
    EXPECT_EQ(c.word_aligned.longest_run, longest);
    EXPECT_DOUBLE_EQ(c.word_aligned.pad_fraction, static_cast<double>(A - T) / A);
  }
}

TEST(MonologueStats, MismatchedSourcesRejected) {
  Gen g(5);
  const auto a = random_pair(g, kCfg, 3, 9, "a");
  const auto b = random_pair(g, kCfg, 3, 9, "b");
  const std::vector<std::uint64_t> w{0, 3, 6};
  EXPECT_THROW(monologue_stats(align_tts(a, kCfg), moshi_word_align(b, w, kCfg)), std::invalid_argument);
  auto c = b;
  c.source_id = "a";
  EXPECT_THROW(monologue_stats(align_tts(a, kCfg), moshi_word_align(c, w, kCfg)), std::invalid_argument);
}
