#pragma once

#include "fsuda/search/tpe.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fsuda {

struct Fold {
  std::vector<std::size_t> source_train, source_val;
  std::vector<std::size_t> target_train, target_val;
};

// Seeded K-fold partition of both sets. Fold sizes differ by at most one; the
// first (n mod K) folds hold the extra item.
std::vector<Fold> split_folds(std::size_t source_count, std::size_t target_count, int folds, std::uint64_t seed);
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t count, int folds, std::uint64_t seed);

struct StylePolicy {
  std::vector<double> betas;
  std::vector<std::size_t> provenance;  // indices into SearchResult::history
};

struct SearchResult {
  StylePolicy policy;
  std::vector<TrialRecord> history;  // every trial, fold after fold
  std::vector<std::string> fold_errors;
  std::vector<std::string> warnings;
};

// Fine-tunes the fold's warm model on data synthesized with `beta`.
using TrainerHook = std::function<void(int fold_index, double beta)>;
// Validation Dice in [0,1] of the trained model on the fold's X_{s->t}.
using EvaluatorHook = std::function<double(int fold_index, double beta)>;

struct SearchOptions {
  int trials_per_fold = 20;
  int n_betas = 3;
  std::uint64_t seed = 0;
  TpeConfig tpe;
};

// Runs an independent TPE history per fold, keeps each fold's best beta, then
// trims or pads to n betas by global score ranking.
SearchResult search_beta(const TrainerHook& trainer, const EvaluatorHook& evaluator, int fold_count,
                         const SearchOptions& options);

// One beta per line; '#' lines carry provenance and are ignored on read.
void write_policy_file(const std::filesystem::path& path, const SearchResult& result);
void write_policy_file(const std::filesystem::path& path, const std::vector<double>& betas);
std::vector<double> read_policy_file(const std::filesystem::path& path);
std::vector<double> parse_beta_list(const std::string& text);

}  // namespace fsuda
