#pragma once

// Command-line front end. Kept in a library so tests can drive it in-process.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vitft/campaign.hpp"
#include "vitft/overhead.hpp"

namespace vitft::cli {

enum ExitCode : int { ok = 0, validation_failure = 1, io_failure = 2, verification_failure = 3 };

/// Batch configuration for campaign, berzad and overhead runs.
struct RunSpec {
  std::string command;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> golden;
  std::filesystem::path output_dir = ".";
  CampaignConfig campaign;
  std::vector<BerzadTarget> targets;
  std::vector<OverheadRow> rows = published_rows();
  CostModel cost_model;
  nlohmann::json echo;  // the spec as given
};

/// Relative paths resolve against `base_dir`. Unknown keys throw ValidationError naming the key.
RunSpec parse_run_spec(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunSpec load_run_spec(const std::filesystem::path& path);

/// Runs the CLI with `args` (args[0] is the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vitft::cli
