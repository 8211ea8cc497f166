#pragma once

// Bit-level view of IEEE-754 single precision parameters and the
// LSB-as-parity protection built on it.
//
// A protected word keeps an even number of set bits across all 32 positions:
// bit 0 is overwritten with popcount(bits 31..1) mod 2. Any odd number of
// flips in a word is then visible as odd parity, and a scrub pass replaces
// such words with 0.0.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "vitft/tensor.hpp"

namespace vitft {

/// Raw 32-bit pattern of a float. Bit 31 is the sign, 30..23 the exponent,
/// 22..0 the mantissa.
using Word32 = std::uint32_t;

inline constexpr int kSignBit = 31;
inline constexpr int kExponentMsb = 30;
inline constexpr int kExponentLsb = 23;
inline constexpr int kParityBit = 0;

constexpr Word32 to_bits(float v) noexcept { return std::bit_cast<Word32>(v); }
constexpr float from_bits(Word32 w) noexcept { return std::bit_cast<float>(w); }

constexpr int popcount32(Word32 w) noexcept { return std::popcount(w); }

/// Flips the LSB when the word has odd parity.
constexpr Word32 encode_word(Word32 w) noexcept {
  return w ^ static_cast<Word32>(std::popcount(w) & 1);
}

/// True when parity is even (no detectable fault).
constexpr bool check_word(Word32 w) noexcept { return (std::popcount(w) & 1) == 0; }

/// Toggles bit `pos`. Throws std::out_of_range unless 0 <= pos <= 31.
Word32 flip_bit(Word32 w, int pos);

inline float encode_value(float v) noexcept { return from_bits(encode_word(to_bits(v))); }

/// Distance from |v| to the next representable magnitude, i.e. the value of
/// toggling the mantissa LSB at v's exponent. Defined for finite v.
float ulp(float v) noexcept;

struct ProtectedTensor {
  std::string name;
  Shape shape;
  std::vector<Word32> words;
};

/// Parameter words after parity encoding. Every word has even popcount.
struct ProtectedParams {
  std::vector<ProtectedTensor> tensors;

  std::size_t total_words() const noexcept;
};

struct ScrubReport {
  std::size_t detected = 0;
  std::vector<ElementRef> detected_indices;
  std::size_t total_words = 0;
};

ProtectedParams encode_params(std::span<const TensorF32> params);

/// Zero-masks every odd-parity word. Clean words pass through with their
/// parity bit still in place.
std::pair<std::vector<TensorF32>, ScrubReport> scrub(const ProtectedParams& p);

// In-place variants over float storage, used by the campaign hot loop.

/// Encodes every word; returns how many LSBs were flipped.
std::size_t encode_in_place(std::span<float> values) noexcept;

/// Number of words with odd parity.
std::size_t count_parity_mismatches(std::span<const float> values) noexcept;

/// Zeroes odd-parity words. When `hits` is non-null the flat indices of the
/// masked words are appended to it. Returns the number of masked words.
std::size_t scrub_in_place(std::span<float> values, std::vector<std::size_t>* hits = nullptr);

ScrubReport scrub_in_place(ParamSet& params);
std::size_t encode_in_place(ParamSet& params) noexcept;

/// Largest |encode(v) - v| / ulp(v) over finite entries; 0 for an empty span.
double max_ulp_perturbation(std::span<const float> original, std::span<const float> encoded);

}  // namespace vitft
