#pragma once

#include "fsuda/core/config.hpp"
#include "fsuda/core/dataset.hpp"
#include "fsuda/metrics/metrics.hpp"
#include "fsuda/search/policy_search.hpp"
#include "fsuda/train/trainer.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fsuda {

inline constexpr const char* kVersion = "0.3.0";

// Lossless binary container for sample lists (pixels, labels, style tags).
void save_samples(const std::filesystem::path& path, std::span<const ImageSample> samples);
std::vector<ImageSample> load_samples(const std::filesystem::path& path);

void save_pseudo_labels(const std::filesystem::path& path, const PseudoLabelSet& set);
PseudoLabelSet load_pseudo_labels(const std::filesystem::path& path);

std::string samples_digest(std::span<const ImageSample> samples);

struct DomainData {
  std::vector<ImageSample> source;        // labeled few-shot set
  std::vector<ImageSample> target_train;  // labels removed
  std::vector<ImageSample> target_test;   // labeled, never used for training
};

// Reads data.source_dir / target_dir / test_dir when set; otherwise renders
// the synthetic two-domain preset seeded from config.seed.
DomainData load_domains(const RunConfig& config);

// Beta search on the labeled source set and unlabeled target set: a plain
// model per fold, briefly fine-tuned on data stylized with each proposed beta
// and scored by validation Dice on the stylized held-out source fold.
SearchResult run_beta_search(const Dataset& source, std::span<const ImageSample> target, const RunConfig& config);

// Source images stylized toward the target (stage-1 n, k).
std::vector<ImageSample> stylize_source_to_target(std::span<const ImageSample> source,
                                                  std::span<const ImageSample> target, std::span<const double> betas,
                                                  const RunConfig& config);
// Target images stylized toward the source (stage-2 n, k). Only source pixels are read.
std::vector<ImageSample> stylize_target_to_source(std::span<const ImageSample> target,
                                                  std::span<const ImageSample> source, std::span<const double> betas,
                                                  const RunConfig& config);

enum class StepStatus { kComputed, kReused };

struct ExperimentManifest {
  std::string config_yaml;
  std::uint64_t seed = 0;
  std::string code_version = kVersion;
  std::map<std::string, std::string> dataset_digests;   // name -> content hash
  std::string policy_digest;
  std::vector<double> betas;
  std::vector<double> t2s_betas;
  std::map<std::string, std::string> checkpoints;       // stage -> file name
  std::vector<std::pair<std::string, StepStatus>> steps;
  std::optional<EvalResult> source_model_eval;          // stage-1 model on the test set
  std::optional<EvalResult> final_eval;
  std::string failed_step;
  std::string error;

  std::string to_json() const;
};

using Logger = std::function<void(const std::string&)>;

struct PipelineOptions {
  std::filesystem::path run_dir;
  Logger log;
  // Stop after this step ("search", "stylize-s2t", "stage1", "stylize-t2s",
  // "pseudo-label", "stage2"); empty runs to the end.
  std::string stop_after;
};

// search -> stylize s->t -> stage 1 -> stylize t->s -> pseudo-label -> stage 2
// -> evaluate. Every artifact is written to the run directory under a name
// derived from the content of its inputs; an existing artifact is reused.
// The manifest is written even when a step fails, and the error rethrown.
ExperimentManifest run_pipeline(const RunConfig& config, const PipelineOptions& options);

struct AblationRow {
  std::string name;
  EvalResult result;
};

// source-only, +adversarial, +SMSI, +CPC, +plain pseudo label, +CSSL.
std::vector<AblationRow> run_ablation(const RunConfig& config, const PipelineOptions& options);

struct GammaRow {
  double gamma = 0;
  EvalResult result;
};

// Stage 2 re-run for every gamma from the stage-1 checkpoint of `config`.
std::vector<GammaRow> gamma_sweep(const RunConfig& config, const std::vector<double>& gammas,
                                  const PipelineOptions& options);

std::string format_gamma_table(const std::vector<GammaRow>& rows);
// Two-panel line plot (Dice and ASD against gamma) as standalone SVG.
std::string gamma_plot_svg(const std::vector<GammaRow>& rows);

std::string eval_to_json(const EvalResult& result, bool per_image = false);

}  // namespace fsuda
