#pragma once

// Analytical overhead of parity protection against a checksum-based ABFT
// scheme, in XOR-equivalent operations.

#include <string>
#include <vector>

#include <json.hpp>

namespace vitft {

struct CostModel {
  double xor_per_word_encode = 31;  // XOR reduction tree over 32 bits
  double xor_per_word_check = 31;
  double add_to_xor = 2;
  double mul_to_xor_low = 10;
  double mul_to_xor_high = 50;

  void validate() const;
};

struct ParityCost {
  double xor_count = 0;
  double memory_overhead_fraction = 0;
};

struct AbftCost {
  double multiplies = 0;
  double adds = 0;
  double memory_overhead_fraction = 0;
};

struct OverheadComparison {
  double factor_low = 0;   // at mul_to_xor_low
  double factor_high = 0;  // at mul_to_xor_high
  double memory_delta = 0; // ABFT minus parity, as a fraction
};

/// One parity check per parameter; storage is unchanged.
ParityCost parity_cost(double num_params, const CostModel& model = {});

/// ABFT XOR-equivalent work over parity XOR work at both multiply weights.
OverheadComparison compare(const ParityCost& parity, const AbftCost& abft, const CostModel& model = {});

/// Multiply weight at which the ABFT/parity ratio reaches `factor`.
double mul_weight_for_factor(const ParityCost& parity, const AbftCost& abft, double factor,
                             const CostModel& model = {});

struct OverheadRow {
  std::string network;
  double num_params = 0;
  AbftCost abft;
};

/// ViT_base and DeiT_base rows of the published comparison (ALBERTA counts).
std::vector<OverheadRow> published_rows();

/// Full comparison table as JSON, one entry per row.
nlohmann::json overhead_table(const std::vector<OverheadRow>& rows, const CostModel& model = {});

}  // namespace vitft
