#pragma once

#include "fsuda/core/config.hpp"
#include "fsuda/pipeline/pipeline.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fsuda::criteria {

struct Outcome {
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

Outcome fourier_suite(std::uint64_t seed = 1);
Outcome metric_suite(std::uint64_t seed = 2);
Outcome gradient_suite(std::uint64_t seed = 3);
Outcome prototype_suite(std::uint64_t seed = 4);

struct TpeStudy {
  double optimum = 0;
  int within_window = 0;  // seeds whose best of 30 lies within 0.05 of the optimum
  int seeds = 0;
  double tpe_median_trials = 0;
  double uniform_median_trials = 0;
};
// Unimodal objective peaking at 0.3, 30 trials per seed; trials-to-optimum is
// the first trial within 0.05 of the grid optimum (31 when never reached).
TpeStudy tpe_study(const TpeConfig& config, int seeds);
Outcome tpe_suite(const TpeConfig& config);

Outcome pseudo_label_suite(std::uint64_t seed = 6);

struct LadderMeans {
  std::vector<std::string> names;
  std::vector<double> dice;  // mean over seeds, per rung
  double seconds = 0;
};
// Ablation ladder for seeds 0..seeds-1, each in <root>/seed-<s>.
LadderMeans run_ladder(const RunConfig& base, int seeds, const std::filesystem::path& root);
Outcome trend_check(const LadderMeans& ladder);

struct GammaCurve {
  std::vector<double> gammas;
  std::vector<double> dice;
  std::vector<double> fit;
  double max_deviation = 0;
};
GammaCurve gamma_curve(const RunConfig& base, const std::vector<double>& gammas, const std::filesystem::path& run_dir);
Outcome gamma_check(const GammaCurve& curve);

}  // namespace fsuda::criteria
