#include "vitft/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <thread>

#include "vitft/bitcodec.hpp"
#include "vitft/error.hpp"
#include "vitft/rng.hpp"

namespace vitft {

std::vector<double> log_grid(double lo, double hi, int per_decade) {
  if (!(lo > 0 && hi >= lo) || per_decade < 1) throw ValidationError("bad log grid bounds");
  const auto k0 = static_cast<long>(std::lround(std::log10(lo) * per_decade));
  const auto k1 = static_cast<long>(std::lround(std::log10(hi) * per_decade));
  std::vector<double> out;
  for (long k = k0; k <= k1; ++k) {
    out.push_back(k % per_decade == 0 ? std::pow(10.0, static_cast<double>(k / per_decade))
                                      : std::pow(10.0, static_cast<double>(k) / per_decade));
  }
  return out;
}

std::vector<double> default_ber_grid() { return log_grid(1e-9, 1e-1, 3); }

void CampaignConfig::validate() const {
  if (ber_grid.empty()) throw ValidationError("ber_grid must not be empty");
  for (double b : ber_grid) (void)BitErrorRate(b);
  if (!std::is_sorted(ber_grid.begin(), ber_grid.end())) throw ValidationError("ber_grid must be ascending");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("confidence must lie in (0, 1)");
  if (!(ci_half_width_target > 0.0)) throw ValidationError("ci_half_width_target must be positive");
  if (n_initial < 1) throw ValidationError("n_initial must be at least 1");
  if (n_max < n_initial) throw ValidationError("n_max must be >= n_initial");
  for (int b : excluded_bits) {
    if (b < 0 || b > 31) throw ValidationError("excluded_bits entries must lie in [0, 31]");
  }
}

namespace {

const char* name(Protection p) { return p == Protection::off ? "off" : "parity"; }
const char* name(AccuracyMetric m) { return m == AccuracyMetric::labeled ? "labeled" : "agreement"; }
const char* name(BerDenominator d) { return d == BerDenominator::bits ? "bits" : "params"; }
const char* name(ScrubPolicy s) { return s == ScrubPolicy::once ? "once" : "on_read"; }

template <typename T>
T get_checked(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace

nlohmann::json to_json(const CampaignConfig& c) {
  return {{"ber_grid", c.ber_grid},
          {"protection", name(c.protection)},
          {"confidence", c.confidence},
          {"ci_half_width_target", c.ci_half_width_target},
          {"n_initial", c.n_initial},
          {"n_max", c.n_max},
          {"base_seed", c.base_seed},
          {"accuracy_metric", name(c.accuracy_metric)},
          {"excluded_bits", c.excluded_bits},
          {"injection_mode", c.injection_mode.to_string()},
          {"ber_denominator", name(c.ber_denominator)},
          {"scrub_policy", name(c.scrub_policy)},
          {"workers", c.workers}};
}

CampaignConfig campaign_config_from_json(const nlohmann::json& j, CampaignConfig c) {
  if (!j.is_object()) throw ValidationError("campaign config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "ber_grid") {
      if (v.is_object()) {
        // {"min": .., "max": .., "per_decade": ..}
        for (const auto& [k2, _] : v.items()) {
          if (k2 != "min" && k2 != "max" && k2 != "per_decade")
            throw ValidationError("unknown config key 'ber_grid." + k2 + "'");
        }
        c.ber_grid = log_grid(get_checked<double>(v.at("min"), "ber_grid.min"),
                              get_checked<double>(v.at("max"), "ber_grid.max"),
                              get_checked<int>(v.value("per_decade", nlohmann::json(3)), "ber_grid.per_decade"));
      } else {
        c.ber_grid = get_checked<std::vector<double>>(v, key);
      }
    } else if (key == "protection") {
      const auto s = get_checked<std::string>(v, key);
      if (s == "off") c.protection = Protection::off;
      else if (s == "parity") c.protection = Protection::parity;
      else throw ValidationError("config key 'protection' must be off or parity");
    } else if (key == "confidence") {
      c.confidence = get_checked<double>(v, key);
    } else if (key == "ci_half_width_target") {
      c.ci_half_width_target = get_checked<double>(v, key);
    } else if (key == "n_initial") {
      c.n_initial = get_checked<std::size_t>(v, key);
    } else if (key == "n_max") {
      c.n_max = get_checked<std::size_t>(v, key);
    } else if (key == "base_seed") {
      c.base_seed = get_checked<std::uint64_t>(v, key);
    } else if (key == "accuracy_metric") {
      const auto s = get_checked<std::string>(v, key);
      if (s == "labeled") c.accuracy_metric = AccuracyMetric::labeled;
      else if (s == "agreement") c.accuracy_metric = AccuracyMetric::agreement;
      else throw ValidationError("config key 'accuracy_metric' must be labeled or agreement");
    } else if (key == "excluded_bits") {
      c.excluded_bits = get_checked<std::vector<int>>(v, key);
    } else if (key == "injection_mode") {
      c.injection_mode = InjectionMode::parse(get_checked<std::string>(v, key));
    } else if (key == "ber_denominator") {
      const auto s = get_checked<std::string>(v, key);
      if (s == "bits") c.ber_denominator = BerDenominator::bits;
      else if (s == "params") c.ber_denominator = BerDenominator::params;
      else throw ValidationError("config key 'ber_denominator' must be bits or params");
    } else if (key == "scrub_policy") {
      const auto s = get_checked<std::string>(v, key);
      if (s == "once") c.scrub_policy = ScrubPolicy::once;
      else if (s == "on_read") c.scrub_policy = ScrubPolicy::on_read;
      else throw ValidationError("config key 'scrub_policy' must be once or on_read");
    } else if (key == "workers") {
      c.workers = get_checked<std::size_t>(v, key);
    } else {
      throw ValidationError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t ber_index, std::size_t trial) {
  return derive_seed(base_seed, ber_index, trial);
}

Campaign::Campaign(const ViTModel& model, const Batch& dataset, CampaignConfig config)
    : model_(model), dataset_(dataset), config_(std::move(config)) {
  config_.validate();
  GoldenCache golden;
  golden.predictions = predict(forward(model_, dataset_));
  init(golden);
}

Campaign::Campaign(const ViTModel& model, const Batch& dataset, CampaignConfig config, const GoldenCache& golden)
    : model_(model), dataset_(dataset), config_(std::move(config)) {
  config_.validate();
  if (!golden.valid_for(model_)) throw ValidationError("golden cache was computed for a different model");
  if (golden.predictions.size() != dataset_.size()) throw ValidationError("golden cache size does not match dataset");
  init(golden);
}

void Campaign::init(const GoldenCache& golden) {
  validate_batch(model_.config, dataset_);
  if (config_.accuracy_metric == AccuracyMetric::labeled && !dataset_.labels) {
    throw ValidationError("accuracy_metric 'labeled' needs a dataset with labels");
  }
  reference_ = golden.predictions;
  pristine_ = model_.params;
  if (config_.protection == Protection::parity) encode_in_place(pristine_);
  baseline_ = accuracy_of(predict(forward(model_.config, pristine_, dataset_)));
}

double Campaign::accuracy_of(const std::vector<std::int32_t>& predictions) const {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto p = predictions[i];
    if (p == kInvalidLabel) continue;
    if (config_.accuracy_metric == AccuracyMetric::agreement) {
      hits += (p == reference_[i]);
    } else {
      hits += (static_cast<std::uint32_t>(p) == (*dataset_.labels)[i]);
    }
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

TrialOutcome Campaign::run_trial(ParamSet& work, double ber, std::uint64_t seed) const {
  const auto layout = work.layout();
  const FaultPlan plan = plan_faults(layout, BitErrorRate(ber), seed, config_.excluded_bits,
                                     config_.injection_mode, config_.ber_denominator);
  apply_faults_in_place(work, plan);

  TrialOutcome out;
  out.flips = plan.flips.size();
  TensorAccessHook hook;
  if (config_.protection == Protection::parity) {
    if (config_.scrub_policy == ScrubPolicy::once) {
      out.detections = scrub_in_place(work.values());
    } else {
      hook = [&](std::size_t t) { out.detections += scrub_in_place(work.tensor(t)); };
    }
  }
  out.accuracy = accuracy_of(predict(forward(model_.config, work, dataset_, hook)));

  // Only planned words can differ from the reference: flips touch them and
  // the scrub can only mask words whose parity a flip broke.
  auto dst = work.values();
  const auto src = pristine_.values();
  for (const auto& f : plan.flips) {
    const auto i = work.entry(f.tensor).offset + f.element;
    dst[i] = src[i];
  }
  return out;
}

TrialOutcome Campaign::run_trial(double ber, std::uint64_t seed) const {
  ParamSet work = pristine_;
  return run_trial(work, ber, seed);
}

namespace {

// Runs trials [first, last) and stores them by index.
void run_batch(const Campaign& campaign, double ber, std::size_t ber_index, std::size_t first, std::size_t last,
               std::size_t workers, std::vector<TrialOutcome>& out) {
  out.resize(last);
  const std::size_t count = last - first;
  if (count == 0) return;
  std::size_t n_threads = workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : workers;
  n_threads = std::min(n_threads, count);

  const auto seed_base = campaign.config().base_seed;
  std::atomic<std::size_t> next{first};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    ParamSet work = campaign.reference_params();
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= last) return;
      try {
        out[i] = campaign.run_trial(work, ber, trial_seed(seed_base, ber_index, i));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = last;
        return;
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

BerRecord Campaign::run_level(double ber, std::size_t ber_index, std::ostream* progress) const {
  std::vector<TrialOutcome> trials;
  std::vector<double> samples;
  auto extend_to = [&](std::size_t target) {
    const std::size_t first = trials.size();
    run_batch(*this, ber, ber_index, first, target, config_.workers, trials);
    for (std::size_t i = first; i < target; ++i) samples.push_back(trials[i].accuracy);
  };

  extend_to(std::min(config_.n_initial, config_.n_max));
  for (;;) {
    if (samples.size() >= config_.n_max || samples.size() < 2) break;
    const auto needed = required_iterations(samples, config_.confidence, config_.ci_half_width_target);
    const auto target = std::min(needed, config_.n_max);
    if (target <= samples.size()) break;
    extend_to(target);
  }

  BerRecord r;
  r.ber = ber;
  r.faults_per_trial = trials.empty() ? 0 : trials.front().flips;
  const auto s = summarize(samples, config_.confidence);
  r.samples = std::move(samples);
  r.mean = s.mean;
  r.stddev = s.stddev;
  r.ci_low = s.ci_low;
  r.ci_high = s.ci_high;
  r.n_used = s.n;
  double det = 0.0;
  for (const auto& t : trials) det += static_cast<double>(t.detections);
  r.detections_mean = trials.empty() ? 0.0 : det / static_cast<double>(trials.size());
  r.hit_n_max = r.n_used >= config_.n_max &&
                required_iterations(s.stddev, config_.confidence, config_.ci_half_width_target) > r.n_used;

  if (progress) {
    *progress << "BER=" << std::setprecision(4) << ber << " n=" << r.n_used << " mean=" << std::setprecision(6)
              << r.mean << " ci=\xC2\xB1" << s.half_width() << (r.hit_n_max ? " (n_max reached)" : "") << '\n';
  }
  return r;
}

CampaignResult Campaign::run(std::ostream* progress) const {
  CampaignResult result;
  result.config = config_;
  result.baseline = baseline_;
  for (std::size_t i = 0; i < config_.ber_grid.size(); ++i) {
    result.records.push_back(run_level(config_.ber_grid[i], i, progress));
  }
  return result;
}

CampaignResult run_campaign(const ViTModel& model, const Batch& dataset, const CampaignConfig& config,
                            std::ostream* progress) {
  return Campaign(model, dataset, config).run(progress);
}

TrialOutcome run_trial(const ViTModel& model, const Batch& dataset, const CampaignConfig& config, double ber,
                       std::uint64_t seed) {
  return Campaign(model, dataset, config).run_trial(ber, seed);
}

// BERZAD ----------------------------------------------------------------------

BerzadTarget BerzadTarget::parse(const std::string& s) {
  if (s == "all") return {};
  std::string digits = s.rfind("bit", 0) == 0 ? s.substr(3) : s;
  if (digits.empty() || digits.size() > 2 || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
    throw ValidationError("bad BERZAD target '" + s + "'");
  }
  const int bit = std::stoi(digits);
  if (bit > 31) throw ValidationError("BERZAD target bit outside [0, 31]");
  return {bit};
}

std::string to_string(BerzadStatus s) {
  switch (s) {
    case BerzadStatus::within_grid: return "within_grid";
    case BerzadStatus::below_grid_minimum: return "below_grid_minimum";
    case BerzadStatus::at_or_above_grid_maximum: return "at_or_above_grid_maximum";
  }
  return "?";
}

bool zero_accuracy_loss(const BerRecord& record, double baseline) {
  return record.ci_high >= baseline - 1e-12;
}

BerzadEstimate compute_berzad(const ViTModel& model, const Batch& dataset, const CampaignConfig& config,
                              const std::vector<BerzadTarget>& targets, std::ostream* progress) {
  config.validate();
  BerzadEstimate est;
  est.config = config;
  const auto layout = model.params.layout();

  for (const auto& target : targets) {
    CampaignConfig tc = config;
    if (target.bit) {
      tc.injection_mode = InjectionMode::fixed(*target.bit);
      tc.excluded_bits.clear();
    } else {
      tc.injection_mode = InjectionMode::random();
    }
    tc.base_seed = derive_seed(config.base_seed, 0xBE52AD, target.bit ? *target.bit : 32);
    const Campaign campaign(model, dataset, tc);

    BerzadEntry entry;
    entry.target = target;
    entry.baseline = campaign.baseline();
    if (progress) *progress << "target=" << target.to_string() << " baseline=" << entry.baseline << '\n';

    bool failed = false;
    for (std::size_t i = 0; i < tc.ber_grid.size(); ++i) {
      const double ber = tc.ber_grid[i];
      try {
        // Probe feasibility: fixed-bit sweeps run out of positions at 1/32.
        plan_faults(layout, BitErrorRate(ber), 0, tc.excluded_bits, tc.injection_mode, tc.ber_denominator);
      } catch (const ValidationError&) {
        entry.grid_truncated = true;
        break;
      }
      entry.sweep.push_back(campaign.run_level(ber, i, progress));
      if (!zero_accuracy_loss(entry.sweep.back(), entry.baseline)) {
        entry.first_failing_ber = ber;
        failed = true;
        break;
      }
      entry.berzad = ber;
    }
    if (!entry.berzad) {
      entry.status = BerzadStatus::below_grid_minimum;
    } else {
      entry.status = failed ? BerzadStatus::within_grid : BerzadStatus::at_or_above_grid_maximum;
    }
    est.entries.push_back(std::move(entry));
  }
  return est;
}

}  // namespace vitft
