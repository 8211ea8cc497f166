#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>

#include "vitft/error.hpp"
#include "vitft/faultinject.hpp"
#include "vitft/rng.hpp"

using namespace vitft;

namespace {

ParamSet random_params(std::vector<std::pair<std::string, Shape>> shapes, std::uint64_t seed) {
  ParamSet p;
  for (auto& [name, shape] : shapes) p.add(name, shape);
  auto rng = make_rng(seed);
  for (auto& v : p.values()) v = static_cast<float>(0.1 * standard_normal(rng));
  return p;
}

double chi_square_critical(double dof, double alpha) {
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), alpha));
}

}  // namespace

TEST(FaultInject, BitErrorRateDomain) {
  EXPECT_THROW(BitErrorRate(0.0), ValidationError);
  EXPECT_THROW(BitErrorRate(-1e-6), ValidationError);
  EXPECT_THROW(BitErrorRate(1.5), ValidationError);
  EXPECT_THROW(BitErrorRate(std::nan("")), ValidationError);
  EXPECT_EQ(BitErrorRate(1.0).value(), 1.0);
}

TEST(FaultInject, FaultCounts) {
  EXPECT_EQ(num_faults(32000, BitErrorRate(1e-3)), 32u);
  EXPECT_EQ(num_faults(1000, BitErrorRate(1.4e-3)), 1u);
  EXPECT_EQ(num_faults(1000, BitErrorRate(1e-4)), 0u);
  const std::vector<std::uint64_t> layout{600, 400};
  EXPECT_EQ(num_faults(layout, BitErrorRate(1e-3)), 32u);
  EXPECT_EQ(num_faults(layout, BitErrorRate(1e-3), BerDenominator::params), 1u);
  // toy-tiny: 208074 words, 6658368 bits.
  EXPECT_EQ(num_faults(std::vector<std::uint64_t>{208074}, BitErrorRate(1e-5)), 67u);
}

TEST(FaultInject, ModeParsing) {
  EXPECT_EQ(InjectionMode::parse("random"), InjectionMode::random());
  EXPECT_EQ(InjectionMode::parse("fixed:23"), InjectionMode::fixed(23));
  EXPECT_EQ(InjectionMode::fixed(7).to_string(), "fixed:7");
  EXPECT_THROW(InjectionMode::parse("fixed:32"), ValidationError);
  EXPECT_THROW(InjectionMode::parse("fixed:"), ValidationError);
  EXPECT_THROW(InjectionMode::parse("sometimes"), ValidationError);
}

TEST(FaultInject, PlanIsSortedDistinctAndSeeded) {
  const std::vector<std::uint64_t> layout{1000, 10, 5000};
  const auto a = plan_faults(layout, BitErrorRate(1e-2), 42);
  const auto b = plan_faults(layout, BitErrorRate(1e-2), 42);
  const auto c = plan_faults(layout, BitErrorRate(1e-2), 43);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.flips, c.flips);
  EXPECT_EQ(a.flips.size(), num_faults(layout, BitErrorRate(1e-2)));
  EXPECT_TRUE(std::is_sorted(a.flips.begin(), a.flips.end()));
  EXPECT_EQ(std::adjacent_find(a.flips.begin(), a.flips.end()), a.flips.end());
  for (const auto& f : a.flips) {
    ASSERT_LT(f.tensor, layout.size());
    ASSERT_LT(f.element, layout[f.tensor]);
    ASSERT_NE(f.bit, 30);
  }
  EXPECT_NO_THROW(validate_plan(a, layout));
}

TEST(FaultInject, PlanCoversWholeUniverse) {
  // k equal to every allowed position: each (element, bit) appears once.
  const std::vector<std::uint64_t> layout{3, 2};
  const auto plan = plan_faults(layout, BitErrorRate(1.0), 1, {}, InjectionMode::random());
  EXPECT_EQ(plan.flips.size(), 5u * 32u);
  std::set<std::pair<std::uint64_t, int>> seen;
  for (const auto& f : plan.flips) seen.insert({f.tensor * 10 + f.element, f.bit});
  EXPECT_EQ(seen.size(), 5u * 32u);
}

TEST(FaultInject, PlanRejectsImpossibleRequests) {
  const std::vector<std::uint64_t> layout{3, 2};
  EXPECT_THROW(plan_faults(layout, BitErrorRate(1.0), 1), ValidationError);  // 160 flips, 155 positions
  EXPECT_THROW(plan_faults(layout, BitErrorRate(0.1), 1, {30}, InjectionMode::fixed(30)), ValidationError);
  EXPECT_THROW(plan_faults(layout, BitErrorRate(0.1), 1, {40}), ValidationError);
  EXPECT_THROW(plan_faults(std::vector<std::uint64_t>{}, BitErrorRate(0.1), 1), ValidationError);
  // Fixed-bit mode has one position per word, so BER above 1/32 cannot be met.
  EXPECT_THROW(plan_faults(layout, BitErrorRate(0.05), 1, {}, InjectionMode::fixed(4)), ValidationError);
}

TEST(FaultInject, FixedBitMode) {
  const std::vector<std::uint64_t> layout{4096};
  const auto plan = plan_faults(layout, BitErrorRate(1e-2), 9, {}, InjectionMode::fixed(23));
  ASSERT_FALSE(plan.flips.empty());
  for (const auto& f : plan.flips) EXPECT_EQ(f.bit, 23);
  std::set<std::uint64_t> elements;
  for (const auto& f : plan.flips) elements.insert(f.element);
  EXPECT_EQ(elements.size(), plan.flips.size());
}

TEST(FaultInject, BitPositionsAreUniform) {
  // Chi-square over the 31 allowed positions, pooled across seeds.
  const std::vector<std::uint64_t> layout{50000};
  std::array<double, 32> counts{};
  double total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& f : plan_faults(layout, BitErrorRate(2e-3), seed).flips) {
      counts[f.bit] += 1;
      total += 1;
    }
  }
  EXPECT_EQ(counts[30], 0.0);
  const double expected = total / 31;
  double chi2 = 0;
  for (int b = 0; b < 32; ++b) {
    if (b == 30) continue;
    chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
  }
  EXPECT_LT(chi2, chi_square_critical(30, 1e-3));
}

TEST(FaultInject, TensorsHitInProportionToSize) {
  const std::vector<std::uint64_t> layout{1000, 3000, 6000};
  std::array<double, 3> counts{};
  double total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& f : plan_faults(layout, BitErrorRate(5e-3), seed).flips) {
      counts[f.tensor] += 1;
      total += 1;
    }
  }
  double chi2 = 0;
  for (int t = 0; t < 3; ++t) {
    const double e = total * static_cast<double>(layout[t]) / 10000.0;
    chi2 += (counts[t] - e) * (counts[t] - e) / e;
  }
  EXPECT_LT(chi2, chi_square_critical(2, 1e-3));
}

TEST(FaultInject, ApplyTwiceRestores) {
  const auto params = random_params({{"a", {64, 32}}, {"b", {100}}}, 1);
  const auto plan = plan_faults(params.layout(), BitErrorRate(1e-2), 5);
  const auto faulted = apply_faults(params, plan);
  EXPECT_FALSE(faulted == params);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < params.num_elements(); ++i) {
    differing += to_bits(params.values()[i]) != to_bits(faulted.values()[i]);
  }
  std::set<std::pair<std::uint32_t, std::uint64_t>> words;
  for (const auto& f : plan.flips) words.insert({f.tensor, f.element});
  EXPECT_EQ(differing, words.size());
  EXPECT_TRUE(revert_faults(faulted, plan) == params);
  auto work = params;
  apply_faults_in_place(work, plan);
  revert_faults_in_place(work, plan);
  EXPECT_TRUE(work == params);
}

TEST(FaultInject, ProtectedAndRawFlipTheSameBits) {
  auto params = random_params({{"a", {200}}, {"b", {50}}}, 2);
  encode_in_place(params);
  const auto prot = encode_params(params.to_tensors());
  const auto plan = plan_faults(params.layout(), BitErrorRate(5e-3), 8);
  const auto raw = apply_faults(params, plan);
  const auto enc = apply_faults(prot, plan);
  for (std::size_t t = 0; t < 2; ++t) {
    const auto values = raw.tensor(t);
    for (std::size_t i = 0; i < values.size(); ++i) {
      ASSERT_EQ(to_bits(values[i]), enc.tensors[t].words[i]);
    }
  }
}

TEST(FaultInject, ValidatePlanCatchesBadIndices) {
  const std::vector<std::uint64_t> layout{10};
  FaultPlan plan;
  plan.flips = {{0, 10, 3}};
  EXPECT_THROW(validate_plan(plan, layout), ValidationError);
  plan.flips = {{1, 0, 3}};
  EXPECT_THROW(validate_plan(plan, layout), ValidationError);
  plan.flips = {{0, 1, 32}};
  EXPECT_THROW(validate_plan(plan, layout), ValidationError);
  auto params = random_params({{"a", {10}}}, 3);
  EXPECT_THROW(apply_faults_in_place(params, FaultPlan{0, 0.1, {}, {}, {{0, 99, 1}}}), ValidationError);
}

TEST(FaultInject, JsonlRoundTrip) {
  const std::vector<std::uint64_t> layout{500, 20};
  const auto plan = plan_faults(layout, BitErrorRate(1e-3), 77, {30, 31}, InjectionMode::random());
  const auto line = to_jsonl(plan);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(plan_from_jsonl(line), plan);
  EXPECT_THROW(plan_from_jsonl("{not json"), ValidationError);
}
