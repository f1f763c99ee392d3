#pragma once

#include "fsuda/core/config.hpp"
#include "fsuda/core/dataset.hpp"
#include "fsuda/metrics/metrics.hpp"
#include "fsuda/nn/model.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fsuda {

// Loss components of one optimization step. Terms that a run does not use
// stay zero. total = seg_source + seg_synth + lambda * (adv_d1 + adv_d2) + con_weight * con.
struct StepRecord {
  int epoch = 0;
  int step = 0;
  double seg_source = 0;
  double seg_synth = 0;
  double adv_d1 = 0;
  double adv_d2 = 0;
  double con = 0;
  double total = 0;
  double disc1 = 0;  // discriminator losses after the generator update
  double disc2 = 0;
};

struct EpochRecord {
  int epoch = 0;
  StepRecord mean;  // per-component mean over the epoch's steps
  std::optional<EvalResult> validation;
  double wall_seconds = 0;
};

struct StageReport {
  std::string stage;
  double lambda_adv = 0;
  double con_weight = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::optional<EvalResult> validation;
  std::vector<std::string> warnings;
  double wall_seconds = 0;
};

// Evaluation threshold and boundary connectivity taken from the config.
EvalOptions eval_options_for(const RunConfig& config);

// Weighted sum as logged in StepRecord::total.
double weighted_total(const StepRecord& r, double lambda_adv, double con_weight);

// One JSON object per step and per epoch, followed by a summary object.
void write_report_jsonl(const std::filesystem::path& path, const StageReport& report);
std::string format_report_summary(const StageReport& report);

struct Stage1Result {
  SegModel model;
  DiscModel d1, d2;
  StageReport report;
};

// Stage-1 training on labeled source images, their synthesized counterparts
// and unlabeled target images. `synth` samples must carry labels and a style
// tag whose origin_id names a source image. The synthesized set may be empty
// only when stage1.use_synthesis is off. `validation`, when given, must be
// labeled.
Stage1Result train_stage1(const Dataset& source, const Dataset& synth, const Dataset& target,
                          const RunConfig& config, const Dataset* validation = nullptr);

// Plain supervised training of `model` on every labeled image of `data`, one
// pass per epoch in seeded order.
void train_supervised(SegModel& model, const Dataset& data, int epochs, double lr, int batch_size,
                      std::uint64_t seed);

struct PseudoLabelSet {
  std::vector<std::array<Mask, 2>> masks;  // [cup, disc] per image
  std::vector<std::string> ids;
  std::string source_model_tag;
  double gamma = 0.75;

  std::size_t size() const { return masks.size(); }
  std::size_t foreground_pixels() const;
};

// mask = 1 exactly where prob >= gamma, per channel.
std::array<Mask, 2> threshold_probabilities(const std::array<Plane, 2>& prob, double gamma);

PseudoLabelSet generate_pseudo_labels(const SegModel& model, std::span<const ImageSample> images, double gamma,
                                      std::string source_model_tag = "", int batch_size = 8);

// Pseudo labels of each stylized image copied from its origin's entry in `origin`.
PseudoLabelSet copy_pseudo_labels(std::span<const ImageSample> stylized, const PseudoLabelSet& origin);

struct Stage2Result {
  SegModel model;
  StageReport report;
};

// Re-trains a copy of theta1 on target images and, unless `t2s` is null, on
// their source-styled versions, supervised densely by the pseudo labels.
// Without t2s this is plain pseudo-label learning on the target set.
Stage2Result train_stage2(const SegModel& theta1, const Dataset& target, const PseudoLabelSet& target_labels,
                          const Dataset* t2s, const PseudoLabelSet* t2s_labels, const RunConfig& config,
                          const Dataset* validation = nullptr);

}  // namespace fsuda
