// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vitft/bitcodec.hpp"
#include "vitft/campaign.hpp"
#include "vitft/faultinject.hpp"
#include "vitft/overhead.hpp"
#include "vitft/rng.hpp"
#include "vitft/toygen.hpp"
#include "vitft/vit.hpp"

using namespace vitft;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS  " : "FAIL  ") << name << "  (" << detail << ")" << std::endl;
}

template <typename... Ts>
std::string cat(const Ts&... parts) {
  std::ostringstream os;
  os << std::setprecision(4);
  (os << ... << parts);
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Setup {
  ViTModel model;
  Batch eval;
};

// Same recipe as `vitft gen-toy` with default options.
Setup toy_setup() {
  const auto cfg = ViTConfig::toy_tiny();
  Setup s{make_toy_model(cfg, 0), make_synthetic_dataset(cfg, 64, 0)};
  fit_class_mean_head(s.model, make_synthetic_dataset(cfg, 500, 0, 1));
  return s;
}

void codec_exactness() {
  auto rng = make_rng(0xC0DEC);
  std::size_t bad_check = 0, other_bits = 0, beyond_ulp = 0, finite = 0;
  for (int i = 0; i < 1000000; ++i) {
    const auto w = static_cast<Word32>(rng());
    const auto e = encode_word(w);
    bad_check += !check_word(e);
    other_bits += ((e ^ w) & ~Word32{1}) != 0;
    const float a = from_bits(w), b = from_bits(e);
    if (std::isfinite(a)) {
      ++finite;
      beyond_ulp += std::fabs(static_cast<double>(b) - a) > ulp(a);
    }
  }
  report("parity codec exactness", bad_check == 0 && other_bits == 0 && beyond_ulp == 0,
         cat("1e6 words: ", bad_check, " failed check, ", other_bits, " changed a bit other than 0, ", beyond_ulp,
             " of ", finite, " finite values moved more than 1 ulp"));
}

void detection(const Setup& s) {
  const auto t0 = std::chrono::steady_clock::now();
  ParamSet p = s.model.params;
  encode_in_place(p);
  const ParamSet encoded = p;
  auto rng = make_rng(0xDE7EC7);
  const auto words = p.num_elements();

  std::size_t detected = 0, exact = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto idx = uniform_below(rng, words);
    const auto bit = static_cast<int>(uniform_below(rng, 32));
    auto v = p.values();
    v[idx] = from_bits(flip_bit(to_bits(v[idx]), bit));
    const auto r = scrub_in_place(p);
    detected += r.detected == 1;
    exact += r.detected == 1 && r.detected_indices.size() == 1 && p.flat_index(r.detected_indices[0]) == idx &&
             to_bits(p.values()[idx]) == 0;
    p.values()[idx] = encoded.values()[idx];
  }
  const bool restored = p == encoded;

  std::size_t double_detected = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto idx = uniform_below(rng, words);
    const auto a = static_cast<int>(uniform_below(rng, 32));
    const auto b = static_cast<int>((a + 1 + uniform_below(rng, 31)) % 32);
    auto v = p.values();
    v[idx] = from_bits(flip_bit(flip_bit(to_bits(v[idx]), a), b));
    double_detected += scrub_in_place(p).detected;
    p.values()[idx] = encoded.values()[idx];
  }
  const double secs = seconds_since(t0);
  report("detection and masking", detected == 10000 && exact == 10000 && double_detected == 0 && restored && secs < 60,
         cat("single flips detected ", detected, "/10000, masked exactly ", exact,
             "/10000; double flips detected ", double_detected, "/1000; ", secs, " s"));
}

void overhead_table_ii() {
  const auto rows = published_rows();
  const auto parity = parity_cost(rows[0].num_params);
  const auto cmp = compare(parity, rows[0].abft);
  const auto table = overhead_table(rows);
  const bool xor_ok = std::fabs(parity.xor_count - 2.666e9) <= 0.005 * 2.666e9;
  const bool mem_ok = table[0].at("memory") == "0% vs 25%" && parity.memory_overhead_fraction == 0.0 &&
                      rows[0].abft.memory_overhead_fraction == 0.25;
  const bool range_ok = std::fabs(cmp.factor_low - 468.0) <= 0.005 * 468.0 &&
                        std::fabs(cmp.factor_high - 2342.0) <= 0.005 * 2342.0;
  CostModel at11;
  at11.mul_to_xor_low = 11;
  const double w500 = mul_weight_for_factor(parity, rows[0].abft, 500);
  const bool claim_ok = compare(parity, rows[0].abft, at11).factor_low > 500 && w500 <= 11;
  report("overhead table reproduction", xor_ok && mem_ok && range_ok && claim_ok,
         cat("XOR ", parity.xor_count, ", memory ", table[0].at("memory").get<std::string>(), ", factor [",
             cmp.factor_low, ", ", cmp.factor_high, "], >500x from mul weight ", w500));
}

// Largest grid BER whose run shows no significant loss, scanning up to the first failure.
std::optional<double> last_zero_loss(const CampaignResult& r) {
  std::optional<double> last;
  for (const auto& rec : r.records) {
    if (!zero_accuracy_loss(rec, r.baseline)) break;
    last = rec.ber;
  }
  return last;
}

void robustness_trend(const Setup& s) {
  const auto t0 = std::chrono::steady_clock::now();
  CampaignConfig cfg;
  cfg.ber_grid = log_grid(1e-6, 1e-2, 3);
  cfg.accuracy_metric = AccuracyMetric::agreement;
  cfg.n_initial = 30;
  cfg.n_max = 100;
  cfg.base_seed = 5;
  cfg.protection = Protection::off;
  const auto off = run_campaign(s.model, s.eval, cfg);
  cfg.protection = Protection::parity;
  const auto on = run_campaign(s.model, s.eval, cfg);
  const double secs = seconds_since(t0);

  std::cout << "      ber        unprotected (n)        protected (n)\n";
  for (std::size_t i = 0; i < off.records.size(); ++i) {
    const auto &a = off.records[i], &b = on.records[i];
    std::cout << "      " << std::setw(9) << std::setprecision(3) << a.ber << "  " << std::fixed
              << std::setprecision(4) << a.mean << " +- " << (a.ci_high - a.mean) << " (" << a.n_used << ")  "
              << b.mean << " +- " << (b.ci_high - b.mean) << " (" << b.n_used << ")" << std::defaultfloat << "\n";
  }

  // Unprotected drop below 0.9 at or before 1e-4.
  std::optional<double> below_09;
  for (const auto& rec : off.records) {
    if (rec.mean < 0.9) {
      below_09 = rec.ber;
      break;
    }
  }
  const bool drop_ok = below_09 && *below_09 <= 1e-4 * (1 + 1e-9);

  double protected_at_1e5 = 0;
  for (const auto& rec : on.records) {
    if (std::fabs(rec.ber - 1e-5) < 1e-12) protected_at_1e5 = rec.mean;
  }

  // Unprotected failure BER: first level whose interval excludes the baseline.
  std::optional<double> fail_off;
  for (const auto& rec : off.records) {
    if (!zero_accuracy_loss(rec, off.baseline)) {
      fail_off = rec.ber;
      break;
    }
  }
  bool held = fail_off.has_value();
  double held_through = 0;
  if (fail_off) {
    for (const auto& rec : on.records) {
      if (rec.ber > 100 * *fail_off * (1 + 1e-9)) break;
      if (!zero_accuracy_loss(rec, on.baseline)) {
        held = false;
        break;
      }
      held_through = rec.ber;
    }
  }
  const auto zad_off = last_zero_loss(off), zad_on = last_zero_loss(on);
  const double ratio = zad_off && zad_on ? *zad_on / *zad_off : 0.0;

  report("BER sweep trend", drop_ok && protected_at_1e5 >= 0.99 && held,
         cat("unprotected < 0.9 first at ", below_09 ? *below_09 : 0.0, "; protected at 1e-5 = ", protected_at_1e5,
             "; unprotected fails at ", fail_off ? *fail_off : 0.0, ", protected holds baseline-CI through ",
             held_through, " (needs ", fail_off ? 100 * *fail_off : 0.0, "); zero-loss BER ratio ", ratio, "x; ",
             secs, " s"));

  // Distribution shift at the first BER where unprotected trials fall below 0.5.
  std::optional<std::size_t> level;
  for (std::size_t i = 0; i < off.records.size() && !level; ++i) {
    const auto h = histogram(off.records[i].samples);
    std::size_t low = 0;
    for (int b = 0; b < 50; ++b) low += h[static_cast<std::size_t>(b)];
    if (low > 0) level = i;
  }
  if (!level) {
    report("accuracy distribution shift", false, "no BER put unprotected mass below 0.5");
    return;
  }
  const auto h_off = histogram(off.records[*level].samples);
  const auto h_on = histogram(on.records[*level].samples);
  std::size_t off_low = 0, on_high = 0;
  for (int b = 0; b < 50; ++b) off_low += h_off[static_cast<std::size_t>(b)];
  for (int b = 90; b < kHistogramBins; ++b) on_high += h_on[static_cast<std::size_t>(b)];
  const double frac = static_cast<double>(on_high) / static_cast<double>(on.records[*level].n_used);
  report("accuracy distribution shift", frac >= 0.95,
         cat("at BER ", off.records[*level].ber, ": unprotected ", off_low, "/", off.records[*level].n_used,
             " trials below 0.5, protected ", on_high, "/", on.records[*level].n_used, " (", 100 * frac,
             "%) at or above 0.9"));
}

void per_bit_berzad(const Setup& s) {
  const auto t0 = std::chrono::steady_clock::now();
  CampaignConfig cfg;
  cfg.ber_grid = log_grid(1e-8, 1e-1, 3);
  cfg.n_initial = 30;
  cfg.n_max = 100;
  cfg.base_seed = 7;
  const auto est = compute_berzad(s.model, s.eval, cfg, {BerzadTarget{0}, BerzadTarget{23}, BerzadTarget{30}});
  const auto& b0 = est.entries[0];
  const auto& b23 = est.entries[1];
  const auto& b30 = est.entries[2];

  auto value = [](const BerzadEntry& e) { return e.berzad.value_or(0.0); };
  auto describe = [&](const BerzadEntry& e) {
    return cat(e.target.to_string(), "=", value(e), " [", to_string(e.status),
               e.grid_truncated ? ", grid truncated" : "", "]");
  };
  const bool order = value(b0) > value(b23) && value(b23) > value(b30);

  // Separation: at bit 30's first failing BER, bit 0's interval lies above bit 30's.
  bool separated = false;
  std::string sep;
  if (b30.first_failing_ber) {
    const auto& fail30 = b30.sweep.back();
    const BerRecord* rec0 = nullptr;
    for (const auto& r : b0.sweep) {
      if (r.ber == fail30.ber) rec0 = &r;
    }
    if (rec0) {
      separated = rec0->ci_low > fail30.ci_high;
      sep = cat("at ", fail30.ber, ": bit0 CI [", rec0->ci_low, ", ", rec0->ci_high, "] vs bit30 CI [",
                fail30.ci_low, ", ", fail30.ci_high, "]");
    }
  }
  report("per-bit BERZAD ordering", order && separated,
         cat(describe(b0), ", ", describe(b23), ", ", describe(b30), "; ", sep, "; ", seconds_since(t0), " s"));
}

void injection_mechanics(const Setup& s) {
  const auto layout = s.model.params.layout();
  std::size_t samples = 0, bit30 = 0;
  for (std::uint64_t seed = 0; samples < 100000; ++seed) {
    const auto plan = plan_faults(layout, BitErrorRate(1e-3), seed);
    for (const auto& f : plan.flips) bit30 += f.bit == 30;
    samples += plan.flips.size();
  }

  bool restored = true;
  for (auto prot : {Protection::off, Protection::parity}) {
    CampaignConfig cfg;
    cfg.protection = prot;
    const Campaign campaign(s.model, s.eval, cfg);
    ParamSet work = campaign.reference_params();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      campaign.run_trial(work, 1e-3, seed);
      restored = restored && work == campaign.reference_params();
    }
  }

  const auto n97 = required_iterations(0.05, 0.95, 0.01);

  const auto spec = nlohmann::json::parse(
      R"({"ber_grid": [1e-5, 1e-4], "protection": "parity", "n_initial": 5, "n_max": 12, "base_seed": 11})");
  auto cfg_a = campaign_config_from_json(spec);
  auto cfg_b = campaign_config_from_json(spec);
  cfg_b.workers = 3;
  const auto a = report_json(run_campaign(s.model, s.eval, cfg_a)).at("records").dump();
  const auto b = report_json(run_campaign(s.model, s.eval, cfg_b)).at("records").dump();

  report("injection loop mechanics", bit30 == 0 && restored && n97 == 97 && a == b,
         cat(samples, " random-mode flips with ", bit30, " on bit 30; revert ", restored ? "bit-exact" : "differs",
             "; required_iterations = ", n97, "; repeated campaign ", a == b ? "identical" : "differs"));
}

void kernel_oracles(const Setup& s) {
  auto rng = make_rng(0x0AC1E);
  auto fill = [&](auto& m, double scale) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(scale * standard_normal(rng));
  };

  RowMatrixf x(64, 65);
  fill(x, 10.0);
  const auto sm = softmax_rows(x);
  double worst_sum = 0;
  for (Eigen::Index r = 0; r < sm.rows(); ++r) worst_sum = std::max(worst_sum, std::fabs(sm.row(r).sum() - 1.0));

  RowMatrixf q1(1, 16), k1(1, 16), v1(1, 8);
  fill(q1, 1.0);
  fill(k1, 1.0);
  fill(v1, 1.0);
  const bool identity = (attention(q1, k1, v1) - v1).cwiseAbs().maxCoeff() == 0.0f;

  RowMatrixf q(2, 4), k(2, 4), v(2, 3);
  fill(q, 1.0);
  fill(k, 1.0);
  fill(v, 1.0);
  const auto att = attention(q, k, v);
  double worst_att = 0;
  for (int i = 0; i < 2; ++i) {
    double w[2], z = 0;
    for (int j = 0; j < 2; ++j) {
      double dot = 0;
      for (int c = 0; c < 4; ++c) dot += double(q(i, c)) * k(j, c);
      w[j] = std::exp(dot / 2.0);
      z += w[j];
    }
    for (int c = 0; c < 3; ++c) {
      const double want = (w[0] * v(0, c) + w[1] * v(1, c)) / z;
      worst_att = std::max(worst_att, std::fabs(want - att(i, c)));
    }
  }

  RowMatrixf ln_in(8, 64);
  fill(ln_in, 3.0);
  ln_in.array() += 5.0f;
  RowVectorf g(64), b(64);
  fill(g, 1.0);
  fill(b, 1.0);
  const auto ln = layernorm(ln_in, g, b, 1e-6f);
  double worst_ln = 0;
  for (Eigen::Index r = 0; r < ln_in.rows(); ++r) {
    double mean = 0, var = 0;
    for (Eigen::Index c = 0; c < 64; ++c) mean += ln_in(r, c);
    mean /= 64;
    for (Eigen::Index c = 0; c < 64; ++c) var += (ln_in(r, c) - mean) * (ln_in(r, c) - mean);
    var /= 64;
    for (Eigen::Index c = 0; c < 64; ++c) {
      const double want = (ln_in(r, c) - mean) / std::sqrt(var + 1e-6) * g(c) + b(c);
      worst_ln = std::max(worst_ln, std::fabs(want - ln(r, c)));
    }
  }

  const RowMatrixf f1 = forward(s.model, s.eval);
  const RowMatrixf f2 = forward(s.model, s.eval);
  const bool same = std::memcmp(f1.data(), f2.data(), sizeof(float) * f1.size()) == 0;

  report("inference kernel oracles", worst_sum <= 1e-6 && identity && worst_att <= 1e-5 && worst_ln <= 1e-5 && same,
         cat("softmax row-sum error ", worst_sum, ", single-token identity ", identity ? "exact" : "broken",
             ", 2-token attention error ", worst_att, ", layernorm error ", worst_ln, ", forward repeat ",
             same ? "byte-identical" : "differs"));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = toy_setup();
  std::cout << "toy-tiny: " << s.model.parameter_count() << " parameters, " << s.eval.size() << " images\n";

  codec_exactness();
  detection(s);
  overhead_table_ii();
  robustness_trend(s);
  per_bit_berzad(s);
  injection_mechanics(s);
  kernel_oracles(s);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed") << " in "
            << std::setprecision(4) << seconds_since(t0) << " s\n";
  return failures == 0 ? 0 : 1;
}
