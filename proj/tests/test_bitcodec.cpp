#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "vitft/bitcodec.hpp"
#include "vitft/rng.hpp"

using namespace vitft;

namespace {

// Parity by shifting, independent of std::popcount.
int slow_parity(Word32 w) {
  int p = 0;
  for (int i = 0; i < 32; ++i) p ^= static_cast<int>((w >> i) & 1u);
  return p;
}

}  // namespace

TEST(BitCodec, FrozenWords) {
  // 1.0f = 0x3F800000: seven set bits.
  EXPECT_EQ(popcount32(0x3F800000u), 7);
  EXPECT_EQ(encode_word(0x3F800000u), 0x3F800001u);
  EXPECT_TRUE(check_word(0x3F800001u));
  EXPECT_FALSE(check_word(0x3F800000u));
  EXPECT_EQ(encode_word(0u), 0u);
  EXPECT_EQ(encode_word(0x80000000u), 0x80000001u);
  EXPECT_EQ(encode_word(0xFFFFFFFFu), 0xFFFFFFFFu);
  // Exponent MSB of 1.0 turns it into infinity.
  EXPECT_EQ(flip_bit(0x3F800000u, 30), 0x7F800000u);
  EXPECT_TRUE(std::isinf(from_bits(flip_bit(to_bits(1.0f), kExponentMsb))));
  EXPECT_EQ(flip_bit(0u, 31), 0x80000000u);
}

TEST(BitCodec, FlipBitRange) {
  EXPECT_THROW(flip_bit(0u, -1), std::out_of_range);
  EXPECT_THROW(flip_bit(0u, 32), std::out_of_range);
}

TEST(BitCodec, EncodeProperties) {
  auto rng = make_rng(7);
  for (int i = 0; i < 200000; ++i) {
    const auto w = static_cast<Word32>(rng());
    const auto e = encode_word(w);
    ASSERT_TRUE(check_word(e));
    ASSERT_EQ(slow_parity(e), 0);
    ASSERT_EQ(e & ~1u, w & ~1u);
    ASSERT_EQ(encode_word(e), e);
    ASSERT_EQ(check_word(w), slow_parity(w) == 0);
  }
}

TEST(BitCodec, FlipIsInvolutionAndBreaksParity) {
  auto rng = make_rng(11);
  for (int i = 0; i < 20000; ++i) {
    const auto e = encode_word(static_cast<Word32>(rng()));
    const int a = static_cast<int>(uniform_below(rng, 32));
    const int b = static_cast<int>((a + 1 + uniform_below(rng, 31)) % 32);
    ASSERT_EQ(flip_bit(flip_bit(e, a), a), e);
    ASSERT_FALSE(check_word(flip_bit(e, a)));
    ASSERT_TRUE(check_word(flip_bit(flip_bit(e, a), b)));
  }
}

TEST(BitCodec, Ulp) {
  EXPECT_EQ(ulp(1.0f), std::numeric_limits<float>::epsilon());
  EXPECT_EQ(ulp(-1.0f), std::numeric_limits<float>::epsilon());
  EXPECT_EQ(ulp(0.0f), std::numeric_limits<float>::denorm_min());
  EXPECT_EQ(ulp(2.0f), 2 * std::numeric_limits<float>::epsilon());
}

TEST(BitCodec, EncodeMovesAtMostOneUlp) {
  std::vector<float> v;
  auto rng = make_rng(3);
  for (int i = 0; i < 10000; ++i) v.push_back(static_cast<float>(standard_normal(rng)));
  const auto before = v;
  const auto flipped = encode_in_place(std::span<float>(v));
  EXPECT_LE(max_ulp_perturbation(before, v), 1.0);
  EXPECT_EQ(count_parity_mismatches(v), 0u);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    changed += to_bits(v[i]) != to_bits(before[i]);
    EXPECT_LE(std::abs(v[i] - before[i]), ulp(before[i]));
  }
  EXPECT_EQ(changed, flipped);
}

TEST(BitCodec, ZeroTensorNeedsNoFlips) {
  std::vector<float> zeros(1000, 0.0f);
  EXPECT_EQ(encode_in_place(std::span<float>(zeros)), 0u);
  EXPECT_EQ(max_ulp_perturbation(std::vector<float>(1000, 0.0f), zeros), 0.0);
}

TEST(BitCodec, ScrubMasksOddWordsOnly) {
  std::vector<TensorF32> tensors{TensorF32("a", {4}, {1.0f, -0.5f, 0.25f, 3.0f}),
                                 TensorF32("b", {2}, {0.125f, -2.0f})};
  auto p = encode_params(tensors);
  EXPECT_EQ(p.total_words(), 6u);
  p.tensors[0].words[2] = flip_bit(p.tensors[0].words[2], 12);
  p.tensors[1].words[1] = flip_bit(flip_bit(p.tensors[1].words[1], 3), 9);  // even count stays hidden
  const auto [clean, report] = scrub(p);
  EXPECT_EQ(report.detected, 1u);
  ASSERT_EQ(report.detected_indices.size(), 1u);
  EXPECT_EQ(report.detected_indices[0], (ElementRef{0, 2}));
  EXPECT_EQ(report.total_words, 6u);
  EXPECT_EQ(clean[0].values[2], 0.0f);
  EXPECT_EQ(to_bits(clean[0].values[0]), p.tensors[0].words[0]);
  EXPECT_NE(clean[1].values[1], 0.0f);
}

TEST(BitCodec, ScrubIsIdempotent) {
  ParamSet params;
  params.add("w", {1000});
  auto rng = make_rng(5);
  for (auto& x : params.values()) x = static_cast<float>(standard_normal(rng));
  encode_in_place(params);
  for (std::size_t i = 0; i < 1000; i += 37) params.values()[i] = from_bits(flip_bit(to_bits(params.values()[i]), 17));
  const auto first = scrub_in_place(params);
  const auto once = params;
  const auto second = scrub_in_place(params);
  EXPECT_EQ(first.detected, 28u);
  EXPECT_EQ(second.detected, 0u);
  EXPECT_TRUE(params == once);
}
