#include "fsuda/core/config.hpp"
#include "fsuda/core/dataset.hpp"
#include "fsuda/core/synthetic.hpp"
#include "fsuda/fourier/stylizer.hpp"
#include "fsuda/metrics/metrics.hpp"
#include "fsuda/nn/model.hpp"
#include "fsuda/pipeline/pipeline.hpp"
#include "fsuda/search/policy_search.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace fsuda;

namespace {

struct GlobalOptions {
  std::string config_file;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  std::string run_dir;
  std::vector<std::string> overrides;
  std::map<std::string, std::string> field_flags;
};

RunConfig build_config(const GlobalOptions& g) {
  RunConfig config = RunConfig::from_preset(g.preset);
  if (!g.config_file.empty()) load_config_file(config, g.config_file);
  for (const auto& [key, value] : g.field_flags) set_field(config, key, value);
  for (const auto& item : g.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + item + "'");
    set_field(config, item.substr(0, eq), item.substr(eq + 1));
  }
  if (g.seed) config.seed = *g.seed;
  config.validate();
  return config;
}

fs::path run_dir(const GlobalOptions& g) {
  if (!g.run_dir.empty()) return g.run_dir;
  if (const char* env = std::getenv("FSUDA_RUN_DIR"); env && *env) return env;
  return "runs/default";
}

PipelineOptions pipeline_options(const GlobalOptions& g, std::string stop_after = "") {
  PipelineOptions o;
  o.run_dir = run_dir(g);
  o.log = [](const std::string& line) { std::cerr << line << std::endl; };
  o.stop_after = std::move(stop_after);
  return o;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void print_manifest_summary(const ExperimentManifest& m) {
  std::vector<std::pair<std::string, EvalResult>> rows;
  if (m.source_model_eval) rows.emplace_back("stage 1", *m.source_model_eval);
  if (m.final_eval) rows.emplace_back("stage 2 (final)", *m.final_eval);
  if (!rows.empty()) std::cout << format_eval_table(rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot domain-adaptive optic disc and cup segmentation"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_file, "YAML config file merged over the preset");
  app.add_option("--preset", g.preset, "Base preset")->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--run-dir", g.run_dir, "Run directory (default $FSUDA_RUN_DIR or runs/default)");
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");
  RunConfig defaults = RunConfig::desk();
  auto* fields_group = app.add_option_group("Config fields", "One flag per config key");
  for (const auto& field : config_fields(defaults)) {
    if (field.key == "seed" || field.key == "preset") continue;
    fields_group->add_option_function<std::string>(
        "--" + field.key, [&g, key = field.key](const std::string& v) { g.field_flags[key] = v; },
        "default (desk): " + get_field(defaults, field.key));
  }

  auto* gen = app.add_subcommand("gen-synth", "Render a synthetic domain as an image/mask directory");
  std::string gen_domain = "source", gen_out;
  int gen_count = 10;
  gen->add_option("--domain", gen_domain)->check(CLI::IsMember({"source", "target"}));
  gen->add_option("--count", gen_count)->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out)->required();

  auto* sty = app.add_subcommand("stylize", "Fourier style transfer of a directory toward another");
  std::string sty_input, sty_amp, sty_out, sty_policy;
  std::vector<double> sty_betas;
  int sty_k = 1;
  sty->add_option("--input", sty_input)->required();
  sty->add_option("--amplitude-dir", sty_amp, "Images whose averaged amplitude is transferred")->required();
  sty->add_option("--beta", sty_betas, "Band parameter (repeatable)");
  sty->add_option("--policy", sty_policy, "Policy file from search-beta");
  sty->add_option("--k-groups", sty_k)->check(CLI::PositiveNumber);
  sty->add_option("--out", sty_out)->required();

  auto* search = app.add_subcommand("search-beta", "Search the band parameters and write a policy file");
  std::string search_out;
  search->add_option("--out", search_out, "Copy the policy file here");

  auto* s1 = app.add_subcommand("train-stage1", "Train the stage-1 model");
  auto* pl = app.add_subcommand("pseudo-label", "Generate pseudo labels with the stage-1 model");
  auto* s2 = app.add_subcommand("train-stage2", "Cross-style self-training from the stage-1 model");

  auto* ev = app.add_subcommand("evaluate", "Dice and ASD of a checkpoint on a labeled directory");
  std::string ev_ckpt, ev_data, ev_json;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data, "Labeled directory (default: the run's test set)");
  ev->add_option("--json", ev_json, "Write machine-readable results here");

  auto* run = app.add_subcommand("run-pipeline", "Search, stage 1, pseudo labels, stage 2, evaluation");
  auto* sweep = app.add_subcommand("gamma-sweep", "Re-run stage 2 for several pseudo-label thresholds");
  std::vector<double> gammas = {0.65, 0.70, 0.75, 0.80, 0.85};
  sweep->add_option("--gammas", gammas)->delimiter(',');
  auto* ablate = app.add_subcommand("ablate", "Ablation ladder");

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig config = build_config(g);
    if (gen->parsed()) {
      SyntheticOptions options;
      options.resolution = config.working_resolution;
      options.domain = gen_domain == "source" ? Domain::kSource : Domain::kTarget;
      options.id_prefix = gen_domain == "source" ? "src" : "tgt";
      const auto style = gen_domain == "source" ? StyleParams::source_default() : StyleParams::target_default();
      const auto samples = gen_synthetic_domain(style, gen_count, config.seed, options);
      save_dataset(gen_out, samples);
      std::cout << "wrote " << samples.size() << " images to " << gen_out << "\n";
    } else if (sty->parsed()) {
      std::vector<double> betas = sty_betas;
      if (!sty_policy.empty()) {
        const auto from_file = read_policy_file(sty_policy);
        betas.insert(betas.end(), from_file.begin(), from_file.end());
      }
      if (betas.empty()) throw Error("stylize: give --beta or --policy");
      LoadOptions lo;
      lo.resolution = config.working_resolution;
      lo.few_shot = 0;
      const auto input = load_dataset(sty_input, Split::kTarget, lo);
      const auto amp_images = load_dataset(sty_amp, Split::kTarget, lo);
      const auto groups = average_amplitude(amp_images, sty_k, config.seed);
      const auto out = expand_dataset(input, betas, groups, BandOptions{config.swap_dc});
      save_dataset(sty_out, out);
      nlohmann::json manifest = nlohmann::json::array();
      for (const auto& s : out) {
        manifest.push_back({{"id", s.id},
                            {"source_id", s.style->origin_id},
                            {"beta", s.style->beta},
                            {"group_index", s.style->group_index}});
      }
      write_text(fs::path(sty_out) / "manifest.json", manifest.dump(2) + "\n");
      std::cout << "wrote " << out.size() << " images to " << sty_out << "\n";
    } else if (search->parsed()) {
      const auto m = run_pipeline(config, pipeline_options(g, "search"));
      const auto policy = run_dir(g) / m.checkpoints.at("policy");
      if (!search_out.empty()) fs::copy_file(policy, search_out, fs::copy_options::overwrite_existing);
      std::cout << "policy " << policy.string() << ":";
      for (double b : m.betas) std::cout << " " << b;
      std::cout << "\n";
    } else if (s1->parsed() || pl->parsed() || s2->parsed()) {
      const std::string stop = s1->parsed() ? "stage1" : pl->parsed() ? "pseudo-label" : "stage2";
      const auto m = run_pipeline(config, pipeline_options(g, stop));
      print_manifest_summary(m);
    } else if (ev->parsed()) {
      const auto ckpt = load_checkpoint(ev_ckpt);
      std::vector<ImageSample> samples;
      if (ev_data.empty()) {
        samples = load_domains(config).target_test;
      } else {
        LoadOptions lo;
        lo.resolution = config.working_resolution;
        lo.few_shot = 0;
        samples = load_dataset(ev_data, Split::kTest, lo);
      }
      const auto result = evaluate(ckpt.model, Dataset(std::move(samples)), eval_options_for(config));
      std::cout << format_eval_table({{ckpt.stage_tag, result}});
      if (!ev_json.empty()) write_text(ev_json, eval_to_json(result, true) + "\n");
    } else if (run->parsed()) {
      const auto m = run_pipeline(config, pipeline_options(g));
      print_manifest_summary(m);
    } else if (sweep->parsed()) {
      const auto rows = gamma_sweep(config, gammas, pipeline_options(g));
      std::cout << format_gamma_table(rows);
    } else if (ablate->parsed()) {
      const auto rows = run_ablation(config, pipeline_options(g));
      std::vector<std::pair<std::string, EvalResult>> table;
      for (const auto& r : rows) table.emplace_back(r.name, r.result);
      std::cout << format_eval_table(table);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
