#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace fdse;
using namespace fdse::test;

TEST(StreamConfig, DefaultsAndSpecialIds) {
  const StreamConfig cfg;
  EXPECT_EQ(cfg.empty_audio_id(), 2048u);
  EXPECT_EQ(cfg.wait_id(), 32000u);
  EXPECT_EQ(cfg.asr_begin_id(), 32001u);
  EXPECT_EQ(cfg.answer_id(), 32002u);
  EXPECT_EQ(cfg.pad_id(), 32003u);
  EXPECT_EQ(cfg.bos_id(), 32004u);
  EXPECT_EQ(cfg.text_vocab_size(), 32005u);
  EXPECT_EQ(cfg.slots_per_frame(), 17u);
  EXPECT_DOUBLE_EQ(cfg.frame_period_ms(), 80.0);
  EXPECT_TRUE(cfg.check().empty());
}

TEST(StreamConfig, RejectsBrokenInvariants) {
  StreamConfig c;
  c.hop_samples = 1000;
  EXPECT_FALSE(c.check().empty());
  EXPECT_THROW(c.require_valid(), std::invalid_argument);
  c = {};
  c.acoustic_delay_steps = 2;
  EXPECT_FALSE(c.check().empty());
  c = {};
  c.audio_vocab_size = 1;
  EXPECT_FALSE(c.check().empty());
}

TEST(Labels, CanonicalClassTable) {
  const StreamConfig cfg;
  Gen g(7);
  for (int i = 0; i < 2000; ++i) {
    auto s = random_sequence(g, cfg, 3);
    EXPECT_EQ(s.supervision, oracle_labels(cfg, s.frames));
  }
}

TEST(Validate, GoldenSequenceIsClean) {
  const StreamConfig cfg;
  Gen g(1);
  auto seq = align_tts(random_pair(g, cfg, 5, 25), cfg);
  EXPECT_TRUE(validate(seq).empty());
}

TEST(Validate, SevenSpeakCodesIsArityViolation) {
  const StreamConfig cfg;
  FrameSequence s(cfg);
  s.push_back(Frame::filler(cfg, cfg.wait_id()));
  s.frames[0].speak.pop_back();
  auto v = validate(s);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v.front().rule, Rule::Arity);
  EXPECT_EQ(v.front().frame, std::optional<std::size_t>(0));
}

TEST(Validate, SupervisedListenSlotIsViolation) {
  const StreamConfig cfg;
  FrameSequence s(cfg);
  s.push_back(Frame::filler(cfg, cfg.wait_id()));
  s.push_back(Frame::filler(cfg, cfg.wait_id()));
  s.supervision[17 + cfg.listen_slot(3)] = SupervisionClass::SpeakSemantic;
  auto v = validate(s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, Rule::ListenSupervised);
  EXPECT_EQ(v[0].frame, std::optional<std::size_t>(1));
  EXPECT_EQ(v[0].channel, "listen[3]");
}

TEST(Validate, RangeMarkerAndLengthRules) {
  StreamConfig cfg;
  cfg.max_seq_len = 4;
  FrameSequence s(cfg);
  for (int i = 0; i < 5; ++i) s.push_back(Frame::filler(cfg, cfg.wait_id()));
  s.frames[1].text = cfg.text_vocab_size();
  s.frames[2].listen[0] = 3000;
  s.markers = {{3, MarkerKind::Cutoff}, {1, MarkerKind::UserOnset}};
  std::set<Rule> rules;
  for (const auto& v : validate(s)) rules.insert(v.rule);
  EXPECT_TRUE(rules.count(Rule::TextRange));
  EXPECT_TRUE(rules.count(Rule::AudioRange));
  EXPECT_TRUE(rules.count(Rule::MarkerOrder));
  EXPECT_TRUE(rules.count(Rule::Length));
}

TEST(FrameFile, EmptySequenceIsHeaderOnly) {
  const StreamConfig cfg;
  FrameSequence s(cfg);
  auto bytes = serialize_frames(s);
  // header + label section (none) + marker count
  EXPECT_EQ(bytes.size(), kHeaderBytes + 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FDSE");
  EXPECT_EQ(deserialize_frames(bytes), s);
}

TEST(FrameFile, FillerFrameLayout) {
  const StreamConfig cfg;
  FrameSequence s(cfg);
  s.push_back(Frame::filler(cfg, cfg.wait_id()));
  auto bytes = serialize_frames(s);
  ASSERT_EQ(bytes.size(), kHeaderBytes + 17 * 4 + 17 + 4);
  EXPECT_EQ(le::get<std::uint32_t>(bytes.data() + kHeaderBytes), cfg.wait_id());
  for (std::size_t i = 1; i < 17; ++i) EXPECT_EQ(le::get<std::uint32_t>(bytes.data() + kHeaderBytes + 4 * i), 2048u);
}

TEST(FrameFile, RoundTripsRandomSequences) {
  const StreamConfig cfg;
  Gen g(99);
  for (int i = 0; i < 300; ++i) {
    auto s = random_sequence(g, cfg, draw(g, 0, 60));
    auto bytes = serialize_frames(s);
    auto back = deserialize_frames(bytes);
    EXPECT_EQ(back, s);
    EXPECT_EQ(serialize_frames(back), bytes);
  }
}

TEST(FrameFile, FullLengthPackRoundTrips) {
  const StreamConfig cfg;
  Gen g(3);
  std::vector<FrameSequence> items;
  for (int i = 0; i < 30; ++i) items.push_back(align_tts(random_pair(g, cfg, draw(g, 1, 40), draw(g, 1, 250)), cfg));
  auto packs = pack(items, PackingPolicy{});
  ASSERT_FALSE(packs.empty());
  EXPECT_EQ(packs[0].size(), 8192u);
  auto bytes = serialize_frames(packs[0]);
  EXPECT_EQ(serialize_frames(deserialize_frames(bytes)), bytes);
}

namespace {
FormatErrc error_of(std::span<const std::uint8_t> b, std::optional<std::uint64_t>* frame = nullptr) {
  try {
    deserialize_frames(b);
  } catch (const FormatError& e) {
    if (frame) *frame = e.frame();
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return FormatErrc::InvalidSequence;
}
}  // namespace

TEST(FrameFile, DistinctErrors) {
  const StreamConfig cfg;
  Gen g(5);
  auto s = align_tts(random_pair(g, cfg, 5, 25), cfg);
  const auto good = serialize_frames(s);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(error_of(bad_magic), FormatErrc::BadMagic);

  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_EQ(error_of(bad_version), FormatErrc::VersionMismatch);

  // cut in the middle of frame 7
  const std::size_t cut = kHeaderBytes + 7 * 17 * 4 + 30;
  std::optional<std::uint64_t> frame;
  EXPECT_EQ(error_of(std::span(good).first(cut), &frame), FormatErrc::Truncated);
  EXPECT_EQ(frame, std::optional<std::uint64_t>(7));

  auto out_of_range = good;
  const std::size_t off = kHeaderBytes + (4 * 17 + 1 + 2) * 4;  // frame 4, listen[2]
  for (int i = 0; i < 4; ++i) out_of_range[off + i] = static_cast<std::uint8_t>((3000u >> (8 * i)) & 0xFF);
  EXPECT_EQ(error_of(out_of_range, &frame), FormatErrc::OutOfRange);
  EXPECT_EQ(frame, std::optional<std::uint64_t>(4));
}

TEST(FrameFile, EveryBuiltFrameHasSeventeenSlots) {
  const StreamConfig cfg;
  Gen g(11);
  for (int i = 0; i < 10000; ++i) {
    const auto p = random_pair(g, cfg, draw(g, 1, 6), draw(g, 1, 6));
    const auto s = (i % 2) ? align_tts(p, cfg) : align_asr(p, cfg);
    for (const auto& f : s.frames) {
      ASSERT_EQ(1 + f.listen.size() + f.speak.size(), 17u);
      for (TokenId c : f.speak) ASSERT_LT(c, 2049u);
    }
  }
}
