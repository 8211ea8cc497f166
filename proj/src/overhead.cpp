#include "vitft/overhead.hpp"

#include <cmath>
#include <sstream>

#include "vitft/error.hpp"

namespace vitft {

void CostModel::validate() const {
  if (!(xor_per_word_encode > 0 && xor_per_word_check > 0 && add_to_xor > 0 && mul_to_xor_low > 0 &&
        mul_to_xor_high > 0)) {
    throw ValidationError("cost model weights must be positive");
  }
  if (mul_to_xor_low > mul_to_xor_high) throw ValidationError("cost model needs mul_to_xor_low <= mul_to_xor_high");
}

ParityCost parity_cost(double num_params, const CostModel& model) {
  model.validate();
  if (!(num_params > 0)) throw ValidationError("num_params must be positive");
  return {model.xor_per_word_check * num_params, 0.0};
}

OverheadComparison compare(const ParityCost& parity, const AbftCost& abft, const CostModel& model) {
  model.validate();
  if (!(parity.xor_count > 0)) throw ValidationError("parity XOR count must be positive");
  if (abft.multiplies < 0 || abft.adds < 0 || abft.memory_overhead_fraction < 0) {
    throw ValidationError("ABFT costs must be non-negative");
  }
  const double adds = abft.adds * model.add_to_xor;
  return {(abft.multiplies * model.mul_to_xor_low + adds) / parity.xor_count,
          (abft.multiplies * model.mul_to_xor_high + adds) / parity.xor_count,
          abft.memory_overhead_fraction - parity.memory_overhead_fraction};
}

double mul_weight_for_factor(const ParityCost& parity, const AbftCost& abft, double factor, const CostModel& model) {
  if (!(abft.multiplies > 0)) throw ValidationError("no multiplies: factor does not depend on the weight");
  return (factor * parity.xor_count - abft.adds * model.add_to_xor) / abft.multiplies;
}

std::vector<OverheadRow> published_rows() {
  return {{"ViT_base", 86e6, {124.85e9, 126.66e6, 0.25}}, {"DeiT_base", 85.8e6, {125.48e9, 127.10e6, 0.25}}};
}

namespace {

std::string percent(double fraction) {
  std::ostringstream os;
  os << fraction * 100 << '%';
  return os.str();
}

}  // namespace

nlohmann::json overhead_table(const std::vector<OverheadRow>& rows, const CostModel& model) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    const auto parity = parity_cost(row.num_params, model);
    const auto cmp = compare(parity, row.abft, model);
    nlohmann::json entry = {
        {"network", row.network},
        {"num_params", row.num_params},
        {"parity", {{"xor", parity.xor_count}, {"memory_overhead", parity.memory_overhead_fraction}}},
        {"abft",
         {{"multiplies", row.abft.multiplies},
          {"adds", row.abft.adds},
          {"memory_overhead", row.abft.memory_overhead_fraction}}},
        {"factor_low", cmp.factor_low},
        {"factor_high", cmp.factor_high},
        {"memory_delta", cmp.memory_delta},
        {"memory", percent(parity.memory_overhead_fraction) + " vs " + percent(row.abft.memory_overhead_fraction)}};
    if (row.abft.multiplies > 0) entry["mul_weight_for_500x"] = mul_weight_for_factor(parity, row.abft, 500, model);
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace vitft
