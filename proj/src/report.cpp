#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vitft/campaign.hpp"
#include "vitft/error.hpp"

namespace vitft {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::json record_json(const BerRecord& r) {
  return {{"ber", r.ber},         {"faults_per_trial", r.faults_per_trial},
          {"samples", r.samples}, {"mean", r.mean},
          {"std", r.stddev},      {"ci_low", r.ci_low},
          {"ci_high", r.ci_high}, {"n_used", r.n_used},
          {"detections_mean", r.detections_mean}, {"hit_n_max", r.hit_n_max}};
}

BerRecord record_from_json(const nlohmann::json& j) {
  BerRecord r;
  r.ber = j.at("ber").get<double>();
  r.faults_per_trial = j.at("faults_per_trial").get<std::uint64_t>();
  r.samples = j.at("samples").get<std::vector<double>>();
  r.mean = j.at("mean").get<double>();
  r.stddev = j.at("std").get<double>();
  r.ci_low = j.at("ci_low").get<double>();
  r.ci_high = j.at("ci_high").get<double>();
  r.n_used = j.at("n_used").get<std::size_t>();
  r.detections_mean = j.at("detections_mean").get<double>();
  r.hit_n_max = j.at("hit_n_max").get<bool>();
  return r;
}

}  // namespace

int histogram_bin(double accuracy) {
  const auto bin = static_cast<int>(std::floor(accuracy * kHistogramBins + 1e-9));
  return std::clamp(bin, 0, kHistogramBins - 1);
}

std::vector<std::size_t> histogram(const std::vector<double>& samples) {
  std::vector<std::size_t> counts(kHistogramBins, 0);
  for (double s : samples) ++counts[static_cast<std::size_t>(histogram_bin(s))];
  return counts;
}

std::string report_csv(const CampaignResult& result) {
  std::ostringstream os;
  os << "ber,mean,std,ci_low,ci_high,n,detections\n";
  for (const auto& r : result.records) {
    os << fmt(r.ber) << ',' << fmt(r.mean) << ',' << fmt(r.stddev) << ',' << fmt(r.ci_low) << ','
       << fmt(r.ci_high) << ',' << r.n_used << ',' << fmt(r.detections_mean) << '\n';
  }
  return os.str();
}

std::string report_histogram_csv(const CampaignResult& result) {
  std::ostringstream os;
  os << "ber,bin_low,bin_high,count\n";
  for (const auto& r : result.records) {
    const auto counts = histogram(r.samples);
    for (int b = 0; b < kHistogramBins; ++b) {
      os << fmt(r.ber) << ',' << fmt(b / static_cast<double>(kHistogramBins)) << ','
         << fmt((b + 1) / static_cast<double>(kHistogramBins)) << ',' << counts[static_cast<std::size_t>(b)]
         << '\n';
    }
  }
  return os.str();
}

nlohmann::json report_json(const CampaignResult& result) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : result.records) records.push_back(record_json(r));
  return {{"version", result.version},
          {"rng", result.rng},
          {"config", to_json(result.config)},
          {"baseline", result.baseline},
          {"records", records}};
}

CampaignResult result_from_json(const nlohmann::json& j) {
  try {
    CampaignResult r;
    r.version = j.at("version").get<std::string>();
    r.rng = j.at("rng").get<std::string>();
    r.config = campaign_config_from_json(j.at("config"));
    r.baseline = j.at("baseline").get<double>();
    for (const auto& rec : j.at("records")) r.records.push_back(record_from_json(rec));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed campaign report: ") + e.what());
  }
}

void export_report(const CampaignResult& result, const std::filesystem::path& path, ReportKind kind) {
  switch (kind) {
    case ReportKind::csv: write_text(path, report_csv(result)); break;
    case ReportKind::histogram_csv: write_text(path, report_histogram_csv(result)); break;
    case ReportKind::json: write_text(path, report_json(result).dump(2) + "\n"); break;
  }
}

nlohmann::json berzad_json(const BerzadEstimate& estimate) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : estimate.entries) {
    nlohmann::json sweep = nlohmann::json::array();
    for (const auto& r : e.sweep) sweep.push_back(record_json(r));
    entries.push_back({{"target", e.target.to_string()},
                       {"status", to_string(e.status)},
                       {"berzad", e.berzad ? nlohmann::json(*e.berzad) : nlohmann::json(nullptr)},
                       {"first_failing_ber",
                        e.first_failing_ber ? nlohmann::json(*e.first_failing_ber) : nlohmann::json(nullptr)},
                       {"baseline", e.baseline},
                       {"grid_truncated", e.grid_truncated},
                       {"sweep", sweep}});
  }
  return {{"version", estimate.version},
          {"rng", estimate.rng},
          {"config", to_json(estimate.config)},
          {"entries", entries}};
}

std::string berzad_csv(const BerzadEstimate& estimate) {
  std::ostringstream os;
  os << "target,status,berzad,first_failing_ber,baseline\n";
  for (const auto& e : estimate.entries) {
    os << e.target.to_string() << ',' << to_string(e.status) << ',' << (e.berzad ? fmt(*e.berzad) : "") << ','
       << (e.first_failing_ber ? fmt(*e.first_failing_ber) : "") << ',' << fmt(e.baseline) << '\n';
  }
  return os.str();
}

}  // namespace vitft
