#pragma once

// Seeded bit-flip fault plans at a target bit-error rate.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vitft/bitcodec.hpp"
#include "vitft/tensor.hpp"

namespace vitft {

/// Flipped parameter bits over total parameter bits; always in (0, 1].
class BitErrorRate {
 public:
  explicit BitErrorRate(double value);
  double value() const noexcept { return value_; }

 private:
  double value_;
};

/// What a BER is a fraction of. `bits` follows the flipped-bits over
/// total-bits definition; `params` reproduces the "num parameters x BER"
/// reading of the injection loop.
enum class BerDenominator { bits, params };

struct InjectionMode {
  enum class Kind { random_bit, fixed_bit };

  Kind kind = Kind::random_bit;
  int bit = -1;  // only meaningful for fixed_bit

  static InjectionMode random() { return {}; }
  static InjectionMode fixed(int bit);

  std::string to_string() const;  // "random" or "fixed:<bit>"
  static InjectionMode parse(const std::string& s);

  bool operator==(const InjectionMode&) const = default;
};

struct Flip {
  std::uint32_t tensor = 0;
  std::uint64_t element = 0;
  std::uint8_t bit = 0;

  auto operator<=>(const Flip&) const = default;
};

struct FaultPlan {
  std::uint64_t seed = 0;
  double ber = 0.0;
  InjectionMode mode;
  std::vector<int> excluded_bits;
  std::vector<Flip> flips;  // sorted, distinct

  bool operator==(const FaultPlan&) const = default;
};

/// Bit 30 is the exponent MSB; flipping it on any |v| < 2 yields an
/// infinity-scale value.
inline const std::vector<int> kDefaultExcludedBits{kExponentMsb};

/// round(total_param_bits * ber). A result of 0 means an empty plan.
std::uint64_t num_faults(std::uint64_t total_param_bits, BitErrorRate ber);

/// Fault count for a tensor layout under the chosen denominator.
std::uint64_t num_faults(std::span<const std::uint64_t> layout, BitErrorRate ber,
                         BerDenominator denominator = BerDenominator::bits);

/// Samples distinct (tensor, element, bit) triples uniformly over the allowed
/// bit positions. In fixed-bit mode every flip uses the mode's bit, which must
/// not appear in `excluded_bits`. Throws ValidationError when the fault count
/// exceeds the number of distinct positions.
FaultPlan plan_faults(std::span<const std::uint64_t> layout, BitErrorRate ber, std::uint64_t seed,
                      const std::vector<int>& excluded_bits = kDefaultExcludedBits,
                      InjectionMode mode = InjectionMode::random(),
                      BerDenominator denominator = BerDenominator::bits);

/// Toggles every planned bit in place. Applying the same plan again reverts.
void apply_faults_in_place(ParamSet& params, const FaultPlan& plan);
void apply_faults_in_place(ProtectedParams& params, const FaultPlan& plan);

ParamSet apply_faults(const ParamSet& params, const FaultPlan& plan);
ProtectedParams apply_faults(const ProtectedParams& params, const FaultPlan& plan);

inline ParamSet revert_faults(const ParamSet& faulted, const FaultPlan& plan) {
  return apply_faults(faulted, plan);
}
inline void revert_faults_in_place(ParamSet& faulted, const FaultPlan& plan) {
  apply_faults_in_place(faulted, plan);
}

/// Checks plan indices against a layout; throws ValidationError.
void validate_plan(const FaultPlan& plan, std::span<const std::uint64_t> layout);

/// One JSON object on a single line: seed, ber, mode, excluded_bits, flips.
std::string to_jsonl(const FaultPlan& plan);
FaultPlan plan_from_jsonl(const std::string& line);

}  // namespace vitft
