#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "vitft/bitcodec.hpp"
#include "vitft/error.hpp"
#include "vitft/faultinject.hpp"
#include "vitft/modelio.hpp"
#include "vitft/toygen.hpp"

namespace vitft::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

fs::path resolve(const json& v, const std::string& key, const fs::path& base) {
  if (!v.is_string()) throw ValidationError("spec key '" + key + "' must be a path string");
  fs::path p = v.get<std::string>();
  return p.is_relative() && !base.empty() ? base / p : p;
}

double number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ValidationError("spec key '" + key + "' must be a number");
  return v.get<double>();
}

CostModel cost_model_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("spec key 'cost_model' must be an object");
  CostModel m;
  for (const auto& [key, v] : j.items()) {
    const auto name = "cost_model." + key;
    if (key == "xor_per_word_encode") m.xor_per_word_encode = number(v, name);
    else if (key == "xor_per_word_check") m.xor_per_word_check = number(v, name);
    else if (key == "add_to_xor") m.add_to_xor = number(v, name);
    else if (key == "mul_to_xor_low") m.mul_to_xor_low = number(v, name);
    else if (key == "mul_to_xor_high") m.mul_to_xor_high = number(v, name);
    else throw ValidationError("unknown spec key '" + name + "'");
  }
  m.validate();
  return m;
}

std::vector<OverheadRow> rows_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("spec key 'rows' must be an array");
  std::vector<OverheadRow> rows;
  for (const auto& r : j) {
    if (!r.is_object()) throw ValidationError("spec key 'rows' must hold objects");
    OverheadRow row;
    for (const auto& [key, v] : r.items()) {
      const auto name = "rows." + key;
      if (key == "network") {
        if (!v.is_string()) throw ValidationError("spec key 'rows.network' must be a string");
        row.network = v.get<std::string>();
      } else if (key == "num_params") row.num_params = number(v, name);
      else if (key == "multiplies") row.abft.multiplies = number(v, name);
      else if (key == "adds") row.abft.adds = number(v, name);
      else if (key == "memory_overhead") row.abft.memory_overhead_fraction = number(v, name);
      else throw ValidationError("unknown spec key '" + name + "'");
    }
    if (!(row.num_params > 0)) throw ValidationError("spec key 'rows.num_params' must be positive");
    rows.push_back(std::move(row));
  }
  return rows;
}

void add_provenance(json& report, const json& echo) {
  report["version"] = VITFT_VERSION;
  report["spec"] = echo;
}

std::string csv_preamble(const json& echo) {
  return "# vitft " + std::string(VITFT_VERSION) + "\n# spec " + echo.dump() + "\n";
}

// Checkpoint metadata minus the fields the writer regenerates.
json carried_metadata(const Container& c) {
  json extra = c.metadata;
  extra.erase("kind");
  extra.erase("config");
  return extra;
}

struct LoadedCheckpoint {
  ViTModel model;
  json extra;
};

LoadedCheckpoint load(const fs::path& path) {
  const auto c = read_container(path);
  return {model_from_container(c), carried_metadata(c)};
}

ViTModel load_spec_model(const RunSpec& spec) {
  if (!spec.checkpoint) throw ValidationError("spec key 'checkpoint' is required for " + spec.command);
  return load_checkpoint(*spec.checkpoint);
}

Batch load_spec_dataset(const RunSpec& spec, const ViTModel& model) {
  if (!spec.dataset) throw ValidationError("spec key 'dataset' is required for " + spec.command);
  return load_dataset(*spec.dataset, model.config.num_classes);
}

int cmd_protect(const fs::path& in, const fs::path& out_path, std::ostream& out) {
  auto [model, extra] = load(in);
  const auto original = model.params.values();
  const std::vector<float> before(original.begin(), original.end());
  const auto flipped = encode_in_place(model.params);
  extra["protection"] = "parity";
  save_checkpoint(model, out_path, extra);
  out << "words: " << model.params.num_elements() << "\n";
  out << "lsb_flipped: " << flipped << "\n";
  out << "max_ulp_perturbation: " << max_ulp_perturbation(before, model.params.values()) << "\n";
  return ok;
}

int cmd_verify(const fs::path& in, std::ostream& out) {
  const auto model = load_checkpoint(in);
  const auto mismatches = count_parity_mismatches(model.params.values());
  out << "words: " << model.params.num_elements() << "\n";
  out << "mismatches: " << mismatches << "\n";
  return mismatches == 0 ? ok : verification_failure;
}

int cmd_scrub(const fs::path& in, const fs::path& out_path, std::optional<fs::path> report_path,
              std::ostream& out) {
  auto [model, extra] = load(in);
  const auto report = scrub_in_place(model.params);
  save_checkpoint(model, out_path, extra);
  json hits = json::array();
  for (const auto& ref : report.detected_indices) {
    hits.push_back({{"tensor", model.params.entry(ref.tensor).name}, {"element", ref.element}});
  }
  json j = {{"detected", report.detected}, {"total_words", report.total_words}, {"detected_indices", hits}};
  add_provenance(j, {{"command", "scrub"}, {"input", in.string()}, {"output", out_path.string()}});
  if (!report_path) report_path = fs::path(out_path.string() + ".scrub.json");
  write_text(*report_path, j.dump(2) + "\n");
  out << "detected: " << report.detected << "\n";
  return ok;
}

int cmd_inject(const fs::path& in, const fs::path& out_path, double ber, std::uint64_t seed,
               const std::string& mode, const std::vector<int>& excluded, const std::string& denominator,
               std::optional<fs::path> plan_path, std::ostream& out) {
  auto [model, extra] = load(in);
  BerDenominator denom;
  if (denominator == "bits") denom = BerDenominator::bits;
  else if (denominator == "params") denom = BerDenominator::params;
  else throw ValidationError("--denominator must be bits or params");
  const auto plan = plan_faults(model.params.layout(), BitErrorRate(ber), seed, excluded,
                                InjectionMode::parse(mode), denom);
  apply_faults_in_place(model.params, plan);
  save_checkpoint(model, out_path, extra);
  if (!plan_path) plan_path = fs::path(out_path.string() + ".plan.jsonl");
  write_text(*plan_path, to_jsonl(plan) + "\n");
  out << "flips: " << plan.flips.size() << "\n";
  return ok;
}

int cmd_campaign(const RunSpec& spec, std::ostream& out, std::ostream& err) {
  const auto model = load_spec_model(spec);
  const auto data = load_spec_dataset(spec, model);
  CampaignResult result;
  if (spec.golden) {
    const auto golden = load_golden(*spec.golden);
    result = Campaign(model, data, spec.campaign, golden).run(&err);
  } else {
    result = Campaign(model, data, spec.campaign).run(&err);
  }
  fs::create_directories(spec.output_dir);
  auto j = report_json(result);
  add_provenance(j, spec.echo);
  write_text(spec.output_dir / "campaign.json", j.dump(2) + "\n");
  write_text(spec.output_dir / "campaign.csv", csv_preamble(spec.echo) + report_csv(result));
  write_text(spec.output_dir / "campaign_histogram.csv", csv_preamble(spec.echo) + report_histogram_csv(result));
  out << "baseline: " << result.baseline << "\n";
  out << "levels: " << result.records.size() << "\n";
  out << "report: " << (spec.output_dir / "campaign.csv").string() << "\n";
  return ok;
}

int cmd_berzad(const RunSpec& spec, std::ostream& out, std::ostream& err) {
  const auto model = load_spec_model(spec);
  const auto data = load_spec_dataset(spec, model);
  const auto targets = spec.targets.empty() ? std::vector<BerzadTarget>{BerzadTarget{}} : spec.targets;
  const auto estimate = compute_berzad(model, data, spec.campaign, targets, &err);
  fs::create_directories(spec.output_dir);
  auto j = berzad_json(estimate);
  add_provenance(j, spec.echo);
  write_text(spec.output_dir / "berzad.json", j.dump(2) + "\n");
  write_text(spec.output_dir / "berzad.csv", csv_preamble(spec.echo) + berzad_csv(estimate));
  for (const auto& e : estimate.entries) {
    out << e.target.to_string() << ": " << to_string(e.status);
    if (e.berzad) out << " berzad=" << *e.berzad;
    out << "\n";
  }
  return ok;
}

int cmd_overhead(const RunSpec& spec, bool write_report, std::ostream& out) {
  json j = {{"rows", overhead_table(spec.rows, spec.cost_model)}};
  add_provenance(j, spec.echo);
  const auto text = j.dump(2) + "\n";
  if (write_report) {
    fs::create_directories(spec.output_dir);
    write_text(spec.output_dir / "overhead.json", text);
  }
  out << text;
  return ok;
}

struct GenToyOptions {
  fs::path out_dir = ".";
  std::string preset = "toy-tiny";
  std::uint64_t seed = 0;
  std::uint64_t task_seed = 0;
  std::size_t images = 64;
  std::size_t fit_images = 500;
  std::string head = "class-mean";
  double noise = 0.5;
};

int cmd_gen_toy(const GenToyOptions& o, std::ostream& out) {
  const auto config = ViTConfig::preset(o.preset);
  auto model = make_toy_model(config, o.seed);
  if (o.head == "class-mean") {
    const auto fit = make_synthetic_dataset(config, o.fit_images, o.task_seed, 1, o.noise);
    fit_class_mean_head(model, fit);
  } else if (o.head != "random") {
    throw ValidationError("--head must be class-mean or random");
  }
  const auto data = make_synthetic_dataset(config, o.images, o.task_seed, 0, o.noise);
  fs::create_directories(o.out_dir);
  const json provenance = {{"generator", "gen-toy"}, {"preset", o.preset}, {"seed", o.seed},
                           {"task_seed", o.task_seed}, {"head", o.head}, {"version", VITFT_VERSION}};
  save_checkpoint(model, o.out_dir / "model.vtft", provenance);
  save_dataset(data, o.out_dir / "dataset.vtft", config.num_classes);
  save_golden(compute_golden(model, data), o.out_dir / "golden.vtft");
  out << "params: " << model.parameter_count() << "\n";
  out << "wrote: " << (o.out_dir / "model.vtft").string() << " " << (o.out_dir / "dataset.vtft").string() << " "
      << (o.out_dir / "golden.vtft").string() << "\n";
  return ok;
}

constexpr const char* kSpecHelp =
    "RunSpec JSON keys:\n"
    "  command                campaign | berzad | overhead\n"
    "  checkpoint, dataset    container paths (relative to the spec file)\n"
    "  golden                 optional golden-prediction cache\n"
    "  output_dir             report directory (default: spec directory)\n"
    "  targets                berzad only: [\"bit0\", \"bit30\", \"all\", ...] (default [\"all\"])\n"
    "  rows, cost_model       overhead only (defaults: published ViT_base/DeiT_base rows,\n"
    "                         31 XOR per word, add = 2 XOR, multiply = 10..50 XOR)\n"
    "  ber_grid               list, or {\"min\", \"max\", \"per_decade\"} (default 1e-9..1e-1, 3/decade)\n"
    "  protection             off | parity (default off)\n"
    "  confidence             default 0.95\n"
    "  ci_half_width_target   default 0.01\n"
    "  n_initial, n_max       default 30, 1000\n"
    "  base_seed              default 0\n"
    "  accuracy_metric        agreement | labeled (default agreement)\n"
    "  excluded_bits          default [30]\n"
    "  injection_mode         random | fixed:<bit> (default random)\n"
    "  ber_denominator        bits | params (default bits)\n"
    "  scrub_policy           once | on_read (default once)\n"
    "  workers                0 = available parallelism (default)\n";

}  // namespace

RunSpec parse_run_spec(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("run spec must be a JSON object");
  RunSpec spec;
  spec.echo = j;
  spec.output_dir = base_dir.empty() ? fs::path(".") : base_dir;
  json campaign = json::object();
  for (const auto& [key, v] : j.items()) {
    if (key == "command") {
      if (!v.is_string()) throw ValidationError("spec key 'command' must be a string");
      spec.command = v.get<std::string>();
    } else if (key == "checkpoint") spec.checkpoint = resolve(v, key, base_dir);
    else if (key == "dataset") spec.dataset = resolve(v, key, base_dir);
    else if (key == "golden") spec.golden = resolve(v, key, base_dir);
    else if (key == "output_dir") spec.output_dir = resolve(v, key, base_dir);
    else if (key == "targets") {
      if (!v.is_array()) throw ValidationError("spec key 'targets' must be an array");
      for (const auto& t : v) {
        if (t.is_number_integer()) spec.targets.push_back(BerzadTarget{t.get<int>()});
        else if (t.is_string()) spec.targets.push_back(BerzadTarget::parse(t.get<std::string>()));
        else throw ValidationError("spec key 'targets' must hold bit numbers or strings");
      }
    } else if (key == "rows") spec.rows = rows_from_json(v);
    else if (key == "cost_model") spec.cost_model = cost_model_from_json(v);
    else campaign[key] = v;
  }
  if (spec.command != "campaign" && spec.command != "berzad" && spec.command != "overhead") {
    throw ValidationError("spec key 'command' must be campaign, berzad or overhead");
  }
  spec.campaign = campaign_config_from_json(campaign);
  return spec;
}

RunSpec load_run_spec(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("run spec " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_spec(j, path.parent_path());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parity protection and fault-injection campaigns for vision transformer weights", "vitft"};
  app.set_version_flag("--version", std::string("vitft ") + VITFT_VERSION);
  app.require_subcommand(1);
  app.footer(kSpecHelp);

  std::string in, out_path, spec_path;
  std::optional<std::string> report_path, plan_path;
  std::size_t workers = 0;
  bool workers_set = false;

  auto* protect = app.add_subcommand("protect", "Parity-encode every weight (LSB becomes the parity bit)");
  protect->add_option("input", in, "Input checkpoint")->required();
  protect->add_option("output", out_path, "Encoded checkpoint")->required();

  auto* verify = app.add_subcommand("verify", "Count parity mismatches; exit 3 if any");
  verify->add_option("checkpoint", in, "Encoded checkpoint")->required();

  auto* scrub = app.add_subcommand("scrub", "Zero every word with a parity mismatch");
  scrub->add_option("input", in, "Encoded checkpoint")->required();
  scrub->add_option("output", out_path, "Scrubbed checkpoint")->required();
  scrub->add_option("--report", report_path, "Scrub report JSON (default <output>.scrub.json)");

  double ber = 0;
  std::uint64_t seed = 0;
  std::string mode = "random", denominator = "bits";
  std::vector<int> excluded = kDefaultExcludedBits;
  auto* inject = app.add_subcommand("inject", "Flip seeded random bits at a target BER");
  inject->add_option("input", in, "Input checkpoint")->required();
  inject->add_option("output", out_path, "Faulted checkpoint")->required();
  inject->add_option("--ber", ber, "Bit error rate in (0, 1]")->required();
  inject->add_option("--seed", seed, "Plan seed")->capture_default_str();
  inject->add_option("--mode", mode, "random or fixed:<bit>")->capture_default_str();
  inject->add_option("--exclude", excluded, "Bits never flipped in random mode")->capture_default_str()->expected(0, 32);
  inject->add_option("--denominator", denominator, "bits or params")->capture_default_str();
  inject->add_option("--plan", plan_path, "Plan JSONL (default <output>.plan.jsonl)");

  std::vector<CLI::App*> spec_commands;
  for (const auto& [name, help] : {std::pair{"campaign", "Run a BER sweep from a RunSpec"},
                                  std::pair{"berzad", "Estimate BERZAD per target from a RunSpec"},
                                  std::pair{"overhead", "Parity versus ABFT overhead table"}}) {
    auto* sub = app.add_subcommand(name, help);
    auto* spec_opt = sub->add_option("spec", spec_path, "RunSpec JSON file");
    if (std::string(name) != "overhead") spec_opt->required();
    sub->add_option("--workers", workers, "Parallel trials (0 = available parallelism)")
        ->each([&](const std::string&) { workers_set = true; });
    spec_commands.push_back(sub);
  }

  GenToyOptions toy;
  auto* gen = app.add_subcommand("gen-toy", "Write a seeded toy checkpoint, synthetic dataset and golden cache");
  gen->add_option("--out-dir", toy.out_dir, "Output directory")->capture_default_str();
  gen->add_option("--preset", toy.preset, "toy-tiny, toy-small or toy-base")->capture_default_str();
  gen->add_option("--seed", toy.seed, "Weight seed")->capture_default_str();
  gen->add_option("--task-seed", toy.task_seed, "Class prototype seed")->capture_default_str();
  gen->add_option("--images", toy.images, "Evaluation images")->capture_default_str();
  gen->add_option("--fit-images", toy.fit_images, "Images used to fit the class-mean head")->capture_default_str();
  gen->add_option("--head", toy.head, "class-mean or random")->capture_default_str();
  gen->add_option("--noise", toy.noise, "Per-pixel noise std")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : validation_failure;
  }

  try {
    if (protect->parsed()) return cmd_protect(in, out_path, out);
    if (verify->parsed()) return cmd_verify(in, out);
    if (scrub->parsed()) return cmd_scrub(in, out_path, report_path, out);
    if (inject->parsed()) return cmd_inject(in, out_path, ber, seed, mode, excluded, denominator, plan_path, out);
    if (gen->parsed()) return cmd_gen_toy(toy, out);
    for (auto* sub : spec_commands) {
      if (!sub->parsed()) continue;
      RunSpec spec;
      if (spec_path.empty()) spec = parse_run_spec(json{{"command", sub->get_name()}});
      else spec = load_run_spec(spec_path);
      if (spec.command != sub->get_name()) {
        throw ValidationError("spec command '" + spec.command + "' does not match subcommand '" + sub->get_name() + "'");
      }
      if (workers_set) spec.campaign.workers = workers;
      if (spec.command == "campaign") return cmd_campaign(spec, out, err);
      if (spec.command == "berzad") return cmd_berzad(spec, out, err);
      return cmd_overhead(spec, !spec_path.empty(), out);
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return io_failure;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return io_failure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return validation_failure;
  }
  return validation_failure;
}

}  // namespace vitft::cli
