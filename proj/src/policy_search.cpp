#include "fsuda/search/policy_search.hpp"

#include "fsuda/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace fsuda {

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t count, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error("split_folds: need K >= 2");
  if (count < static_cast<std::size_t>(folds)) {
    throw Error("split_folds: K=" + std::to_string(folds) + " exceeds dataset size " + std::to_string(count));
  }
  Rng rng(seed);
  const auto order = permutation(count, rng);
  const std::size_t k = static_cast<std::size_t>(folds);
  std::vector<std::vector<std::size_t>> parts(k);
  std::size_t cursor = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = count / k + (f < count % k ? 1 : 0);
    parts[f].assign(order.begin() + cursor, order.begin() + cursor + size);
    std::sort(parts[f].begin(), parts[f].end());
    cursor += size;
  }
  return parts;
}

std::vector<Fold> split_folds(std::size_t source_count, std::size_t target_count, int folds, std::uint64_t seed) {
  const auto source_parts = kfold_partition(source_count, folds, derive_seed(seed, 0));
  const auto target_parts = kfold_partition(target_count, folds, derive_seed(seed, 1));
  auto complement = [](const std::vector<std::vector<std::size_t>>& parts, std::size_t skip) {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < parts.size(); ++f) {
      if (f != skip) out.insert(out.end(), parts[f].begin(), parts[f].end());
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  std::vector<Fold> result(static_cast<std::size_t>(folds));
  for (std::size_t f = 0; f < result.size(); ++f) {
    result[f].source_val = source_parts[f];
    result[f].source_train = complement(source_parts, f);
    result[f].target_val = target_parts[f];
    result[f].target_train = complement(target_parts, f);
  }
  return result;
}

SearchResult search_beta(const TrainerHook& trainer, const EvaluatorHook& evaluator, int fold_count,
                         const SearchOptions& options) {
  if (fold_count < 1) throw Error("search_beta: no folds");
  if (options.trials_per_fold < 1) throw Error("search_beta: trials_per_fold must be >= 1");
  const TpeSampler sampler(options.tpe);
  SearchResult result;
  std::vector<std::size_t> fold_best;

  for (int fold = 0; fold < fold_count; ++fold) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(fold)));
    std::vector<TrialRecord> history;
    try {
      for (int trial = 0; trial < options.trials_per_fold; ++trial) {
        const double beta = sampler.suggest(history, rng);
        if (trainer) trainer(fold, beta);
        const double score = evaluator(fold, beta);
        if (!std::isfinite(score)) throw Error("evaluator returned a non-finite score");
        history.push_back(TrialRecord{beta, score, fold});
      }
    } catch (const std::exception& e) {
      result.fold_errors.push_back("fold " + std::to_string(fold) + ": " + e.what());
      continue;
    }
    const std::size_t offset = result.history.size();
    std::size_t best = offset;
    for (std::size_t i = 0; i < history.size(); ++i) {
      if (history[i].score > history[best - offset].score) best = offset + i;
    }
    result.history.insert(result.history.end(), history.begin(), history.end());
    fold_best.push_back(best);
  }
  if (fold_best.empty()) {
    std::string message = "search_beta: every fold failed";
    for (const auto& e : result.fold_errors) message += "; " + e;
    throw Error(message);
  }

  auto by_score = [&](std::size_t a, std::size_t b) {
    if (result.history[a].score != result.history[b].score) return result.history[a].score > result.history[b].score;
    return a < b;
  };
  std::sort(fold_best.begin(), fold_best.end(), by_score);
  std::vector<std::size_t> chosen(fold_best.begin(),
                                  fold_best.begin() + std::min<std::size_t>(fold_best.size(), options.n_betas));
  if (chosen.size() < static_cast<std::size_t>(options.n_betas)) {
    std::vector<std::size_t> rest(result.history.size());
    std::iota(rest.begin(), rest.end(), 0);
    std::sort(rest.begin(), rest.end(), by_score);
    for (auto index : rest) {
      if (chosen.size() >= static_cast<std::size_t>(options.n_betas)) break;
      if (std::find(chosen.begin(), chosen.end(), index) == chosen.end()) chosen.push_back(index);
    }
  }
  for (auto index : chosen) {
    const double beta = result.history[index].beta;
    if (std::find(result.policy.betas.begin(), result.policy.betas.end(), beta) != result.policy.betas.end()) {
      result.warnings.push_back("duplicate beta " + std::to_string(beta) + " collapsed");
      continue;
    }
    result.policy.betas.push_back(beta);
    result.policy.provenance.push_back(index);
  }
  return result;
}

void write_policy_file(const std::filesystem::path& path, const SearchResult& result) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write policy file " + path.string());
  out << "# style policy: one beta per line\n";
  for (const auto& e : result.fold_errors) out << "# fold error: " << e << "\n";
  for (const auto& w : result.warnings) out << "# warning: " << w << "\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < result.policy.betas.size(); ++i) {
    const auto& trial = result.history.at(result.policy.provenance.at(i));
    out << "# trial " << result.policy.provenance[i] << " fold " << trial.fold_index << " score " << trial.score
        << "\n";
    out << result.policy.betas[i] << "\n";
  }
}

void write_policy_file(const std::filesystem::path& path, const std::vector<double>& betas) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write policy file " + path.string());
  out << "# style policy: one beta per line\n" << std::setprecision(17);
  for (double b : betas) out << b << "\n";
}

std::vector<double> parse_beta_list(const std::string& text) {
  std::vector<double> betas;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    double beta = 0.0;
    try {
      beta = std::stod(item, &used);
    } catch (const std::exception&) {
      throw Error("cannot parse beta '" + item + "'");
    }
    if (!(beta > 0.0 && beta < 1.0)) throw Error("beta " + item + " outside (0,1)");
    betas.push_back(beta);
  }
  return betas;
}

std::vector<double> read_policy_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read policy file " + path.string());
  std::vector<double> betas;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto parsed = parse_beta_list(line.substr(first));
    betas.insert(betas.end(), parsed.begin(), parsed.end());
  }
  if (betas.empty()) throw Error("policy file " + path.string() + " contains no betas");
  return betas;
}

}  // namespace fsuda
