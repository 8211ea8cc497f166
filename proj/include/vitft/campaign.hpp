#pragma once

// Fault-injection campaigns: BER sweeps with and without parity protection,
// adaptive trial counts, and BERZAD estimation.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vitft/faultinject.hpp"
#include "vitft/modelio.hpp"
#include "vitft/rng.hpp"
#include "vitft/stats.hpp"
#include "vitft/vit.hpp"

namespace vitft {

enum class Protection { off, parity };
enum class AccuracyMetric { labeled, agreement };
/// When protected weights are checked: once after injection, or tensor by
/// tensor as the forward pass first reads them. Both see the same words in a
/// single-forward trial.
enum class ScrubPolicy { once, on_read };

/// `per_decade` log-spaced points from `lo` to `hi` inclusive.
std::vector<double> log_grid(double lo, double hi, int per_decade);

/// 1e-9 ... 1e-1, three points per decade.
std::vector<double> default_ber_grid();

struct CampaignConfig {
  std::vector<double> ber_grid = default_ber_grid();
  Protection protection = Protection::off;
  double confidence = 0.95;
  double ci_half_width_target = 0.01;
  std::size_t n_initial = 30;
  std::size_t n_max = 1000;
  std::uint64_t base_seed = 0;
  AccuracyMetric accuracy_metric = AccuracyMetric::agreement;
  std::vector<int> excluded_bits = kDefaultExcludedBits;
  InjectionMode injection_mode = InjectionMode::random();
  BerDenominator ber_denominator = BerDenominator::bits;
  ScrubPolicy scrub_policy = ScrubPolicy::once;
  std::size_t workers = 0;  // 0 = hardware concurrency; results do not depend on it

  void validate() const;
};

nlohmann::json to_json(const CampaignConfig& config);
/// Applies the keys of `j` over `base`; unknown keys throw ValidationError naming the key.
CampaignConfig campaign_config_from_json(const nlohmann::json& j, CampaignConfig base = {});

struct TrialOutcome {
  double accuracy = 0.0;
  std::size_t detections = 0;
  std::size_t flips = 0;

  bool operator==(const TrialOutcome&) const = default;
};

struct BerRecord {
  double ber = 0.0;
  std::uint64_t faults_per_trial = 0;
  std::vector<double> samples;  // ordered by trial index
  double mean = 0.0;
  double stddev = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_used = 0;
  double detections_mean = 0.0;
  bool hit_n_max = false;

  bool operator==(const BerRecord&) const = default;
};

struct CampaignResult {
  CampaignConfig config;
  double baseline = 0.0;
  std::string rng = kRngName;
  std::string version = VITFT_VERSION;
  std::vector<BerRecord> records;
};

/// Seed of trial `trial` at grid position `ber_index`.
std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t ber_index, std::size_t trial);

/// Holds the fault-free reference state for one model/dataset/config triple.
class Campaign {
 public:
  /// Computes the golden predictions itself.
  Campaign(const ViTModel& model, const Batch& dataset, CampaignConfig config);
  /// Reuses a golden cache; throws ValidationError if it belongs to another model.
  Campaign(const ViTModel& model, const Batch& dataset, CampaignConfig config, const GoldenCache& golden);

  const CampaignConfig& config() const noexcept { return config_; }

  /// Accuracy of the fault-free model under the configured protection.
  double baseline() const noexcept { return baseline_; }

  /// Weights trials start from: raw, or parity-encoded when protected.
  const ParamSet& reference_params() const noexcept { return pristine_; }

  /// One injection/evaluation/restore cycle on `work`, which must equal
  /// reference_params() on entry and is bit-identical to it on return.
  TrialOutcome run_trial(ParamSet& work, double ber, std::uint64_t seed) const;
  TrialOutcome run_trial(double ber, std::uint64_t seed) const;

  /// Adaptive trial loop for one BER.
  BerRecord run_level(double ber, std::size_t ber_index, std::ostream* progress = nullptr) const;

  CampaignResult run(std::ostream* progress = nullptr) const;

  double accuracy_of(const std::vector<std::int32_t>& predictions) const;

 private:
  void init(const GoldenCache& golden);

  const ViTModel& model_;
  Batch dataset_;
  CampaignConfig config_;
  ParamSet pristine_;
  std::vector<std::int32_t> reference_;
  double baseline_ = 0.0;
};

CampaignResult run_campaign(const ViTModel& model, const Batch& dataset, const CampaignConfig& config,
                            std::ostream* progress = nullptr);

TrialOutcome run_trial(const ViTModel& model, const Batch& dataset, const CampaignConfig& config, double ber,
                       std::uint64_t seed);

// BERZAD ----------------------------------------------------------------------

/// A bit position swept in fixed-bit mode, or every allowed bit (nullopt).
struct BerzadTarget {
  std::optional<int> bit;

  std::string to_string() const { return bit ? "bit" + std::to_string(*bit) : "all"; }
  static BerzadTarget parse(const std::string& s);  // "all", "bit<k>" or "<k>"
};

enum class BerzadStatus { within_grid, below_grid_minimum, at_or_above_grid_maximum };
std::string to_string(BerzadStatus s);

struct BerzadEntry {
  BerzadTarget target;
  BerzadStatus status = BerzadStatus::below_grid_minimum;
  std::optional<double> berzad;   // largest passing BER
  std::optional<double> first_failing_ber;
  double baseline = 0.0;
  std::vector<BerRecord> sweep;   // every evaluated BER, ascending
  bool grid_truncated = false;    // later grid points exceeded the available positions
};

struct BerzadEstimate {
  CampaignConfig config;
  std::vector<BerzadEntry> entries;
  std::string rng = kRngName;
  std::string version = VITFT_VERSION;
};

/// True when the drop from `baseline` is not significant: ci_high >= baseline.
bool zero_accuracy_loss(const BerRecord& record, double baseline);

BerzadEstimate compute_berzad(const ViTModel& model, const Batch& dataset, const CampaignConfig& config,
                              const std::vector<BerzadTarget>& targets, std::ostream* progress = nullptr);

// Reports ---------------------------------------------------------------------

enum class ReportKind { csv, histogram_csv, json };

inline constexpr int kHistogramBins = 100;  // bin width 0.01 over [0, 1]

/// Bin of an accuracy value; 1.0 falls in the last bin.
int histogram_bin(double accuracy);
std::vector<std::size_t> histogram(const std::vector<double>& samples);

std::string report_csv(const CampaignResult& result);
std::string report_histogram_csv(const CampaignResult& result);
nlohmann::json report_json(const CampaignResult& result);
CampaignResult result_from_json(const nlohmann::json& j);

void export_report(const CampaignResult& result, const std::filesystem::path& path, ReportKind kind);

nlohmann::json berzad_json(const BerzadEstimate& estimate);
std::string berzad_csv(const BerzadEstimate& estimate);

}  // namespace vitft
