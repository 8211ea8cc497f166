#include "vitft/faultinject.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "vitft/error.hpp"
#include "vitft/rng.hpp"

namespace vitft {

BitErrorRate::BitErrorRate(double value) : value_(value) {
  if (!(value > 0.0 && value <= 1.0)) {
    throw ValidationError("bit error rate " + std::to_string(value) + " outside (0, 1]");
  }
}

InjectionMode InjectionMode::fixed(int bit) {
  if (bit < 0 || bit > 31) throw ValidationError("fixed bit position outside [0, 31]");
  return {Kind::fixed_bit, bit};
}

std::string InjectionMode::to_string() const {
  return kind == Kind::random_bit ? "random" : "fixed:" + std::to_string(bit);
}

InjectionMode InjectionMode::parse(const std::string& s) {
  if (s == "random") return random();
  if (s.rfind("fixed:", 0) == 0) {
    const std::string digits = s.substr(6);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit) || digits.size() > 2)
      throw ValidationError("bad injection mode '" + s + "'");
    return fixed(std::stoi(digits));
  }
  throw ValidationError("bad injection mode '" + s + "' (expected random or fixed:<bit>)");
}

std::uint64_t num_faults(std::uint64_t total_param_bits, BitErrorRate ber) {
  if (total_param_bits == 0) throw ValidationError("total_param_bits must be positive");
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(total_param_bits) * ber.value()));
}

std::uint64_t num_faults(std::span<const std::uint64_t> layout, BitErrorRate ber,
                         BerDenominator denominator) {
  const std::uint64_t elements = std::accumulate(layout.begin(), layout.end(), std::uint64_t{0});
  if (elements == 0) throw ValidationError("layout has no elements");
  if (denominator == BerDenominator::params) {
    return static_cast<std::uint64_t>(std::llround(static_cast<double>(elements) * ber.value()));
  }
  return num_faults(elements * 32, ber);
}

namespace {

// Floyd's sampling: k distinct values from [0, universe), uniformly.
std::vector<std::uint64_t> sample_distinct(Rng& rng, std::uint64_t universe, std::uint64_t k) {
  std::vector<std::uint64_t> picked;
  picked.reserve(k);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(k * 2);
  for (std::uint64_t j = universe - k; j < universe; ++j) {
    const std::uint64_t t = uniform_below(rng, j + 1);
    const std::uint64_t v = seen.insert(t).second ? t : j;
    if (v == j) seen.insert(j);
    picked.push_back(v);
  }
  return picked;
}

}  // namespace

FaultPlan plan_faults(std::span<const std::uint64_t> layout, BitErrorRate ber, std::uint64_t seed,
                      const std::vector<int>& excluded_bits, InjectionMode mode,
                      BerDenominator denominator) {
  if (layout.empty()) throw ValidationError("fault plan needs a non-empty layout");
  for (int b : excluded_bits) {
    if (b < 0 || b > 31) throw ValidationError("excluded bit outside [0, 31]");
  }

  FaultPlan plan;
  plan.seed = seed;
  plan.ber = ber.value();
  plan.mode = mode;
  plan.excluded_bits = excluded_bits;
  std::sort(plan.excluded_bits.begin(), plan.excluded_bits.end());
  plan.excluded_bits.erase(std::unique(plan.excluded_bits.begin(), plan.excluded_bits.end()),
                           plan.excluded_bits.end());

  std::vector<int> allowed;
  if (mode.kind == InjectionMode::Kind::fixed_bit) {
    if (std::binary_search(plan.excluded_bits.begin(), plan.excluded_bits.end(), mode.bit)) {
      throw ValidationError("fixed bit " + std::to_string(mode.bit) + " is excluded");
    }
    allowed.push_back(mode.bit);
  } else {
    for (int b = 0; b < 32; ++b) {
      if (!std::binary_search(plan.excluded_bits.begin(), plan.excluded_bits.end(), b))
        allowed.push_back(b);
    }
    if (allowed.empty()) throw ValidationError("every bit position is excluded");
  }

  const std::uint64_t k = num_faults(layout, ber, denominator);
  const std::uint64_t elements = std::accumulate(layout.begin(), layout.end(), std::uint64_t{0});
  const std::uint64_t universe = elements * allowed.size();
  if (k > universe) {
    throw ValidationError("fault count " + std::to_string(k) + " exceeds the " +
                          std::to_string(universe) + " distinct (element, bit) positions");
  }
  if (k == 0) return plan;

  std::vector<std::uint64_t> offsets(layout.size() + 1, 0);
  std::partial_sum(layout.begin(), layout.end(), offsets.begin() + 1);

  auto rng = make_rng(seed);
  plan.flips.reserve(k);
  for (std::uint64_t idx : sample_distinct(rng, universe, k)) {
    const std::uint64_t flat = idx / allowed.size();
    const int bit = allowed[idx % allowed.size()];
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const auto t = static_cast<std::uint32_t>(std::distance(offsets.begin(), it) - 1);
    plan.flips.push_back({t, flat - offsets[t], static_cast<std::uint8_t>(bit)});
  }
  std::sort(plan.flips.begin(), plan.flips.end());
  return plan;
}

void validate_plan(const FaultPlan& plan, std::span<const std::uint64_t> layout) {
  for (const auto& f : plan.flips) {
    if (f.tensor >= layout.size() || f.element >= layout[f.tensor] || f.bit > 31) {
      throw ValidationError("fault plan entry (" + std::to_string(f.tensor) + ", " +
                            std::to_string(f.element) + ", " + std::to_string(f.bit) +
                            ") out of bounds");
    }
  }
}

void apply_faults_in_place(ParamSet& params, const FaultPlan& plan) {
  const auto layout = params.layout();
  validate_plan(plan, layout);
  auto values = params.values();
  for (const auto& f : plan.flips) {
    float& v = values[params.entry(f.tensor).offset + f.element];
    v = from_bits(to_bits(v) ^ (Word32{1} << f.bit));
  }
}

void apply_faults_in_place(ProtectedParams& params, const FaultPlan& plan) {
  std::vector<std::uint64_t> layout;
  for (const auto& t : params.tensors) layout.push_back(t.words.size());
  validate_plan(plan, layout);
  for (const auto& f : plan.flips) {
    auto& w = params.tensors[f.tensor].words[f.element];
    w ^= Word32{1} << f.bit;
  }
}

ParamSet apply_faults(const ParamSet& params, const FaultPlan& plan) {
  ParamSet out = params;
  apply_faults_in_place(out, plan);
  return out;
}

ProtectedParams apply_faults(const ProtectedParams& params, const FaultPlan& plan) {
  ProtectedParams out = params;
  apply_faults_in_place(out, plan);
  return out;
}

std::string to_jsonl(const FaultPlan& plan) {
  nlohmann::json j;
  j["seed"] = plan.seed;
  j["ber"] = plan.ber;
  j["mode"] = plan.mode.to_string();
  j["excluded_bits"] = plan.excluded_bits;
  auto flips = nlohmann::json::array();
  for (const auto& f : plan.flips) flips.push_back({f.tensor, f.element, f.bit});
  j["flips"] = std::move(flips);
  return j.dump();
}

FaultPlan plan_from_jsonl(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    FaultPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.ber = j.at("ber").get<double>();
    plan.mode = InjectionMode::parse(j.at("mode").get<std::string>());
    plan.excluded_bits = j.at("excluded_bits").get<std::vector<int>>();
    for (const auto& f : j.at("flips")) {
      const auto bit = f.at(2).get<int>();
      if (bit < 0 || bit > 31) throw ValidationError("flip bit outside [0, 31]");
      plan.flips.push_back({f.at(0).get<std::uint32_t>(), f.at(1).get<std::uint64_t>(),
                            static_cast<std::uint8_t>(bit)});
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed fault plan record: ") + e.what());
  }
}

}  // namespace vitft
