#pragma once

#include "fsuda/core/config.hpp"
#include "fsuda/core/random.hpp"

#include <span>
#include <vector>

namespace fsuda {

struct TrialRecord {
  double beta = 0.5;
  double score = 0.0;  // validation Dice in [0,1]; higher is better
  int fold_index = 0;
};

// Parzen mixture over (lo, hi): one truncated Gaussian per observation plus an
// optional flat prior component. Each bandwidth is the distance to the nearest
// neighbor among the sorted points and the interval ends.
class ParzenDensity {
 public:
  // prior_weight: weight of the flat component relative to one kernel.
  ParzenDensity(std::span<const double> points, double lo, double hi, double prior_weight = 1.0);

  double pdf(double x) const;
  double sample(Rng& rng) const;
  bool degenerate() const { return degenerate_; }

 private:
  std::vector<double> mu_, sigma_, weight_, mass_;
  double lo_, hi_;
  double prior_weight_ = 0.0;
  bool degenerate_ = false;
};

// Tree-structured Parzen estimator over a single scalar in (lo, hi),
// maximizing the trial score.
class TpeSampler {
 public:
  explicit TpeSampler(TpeConfig config = {}, double lo = 0.0, double hi = 1.0);

  double suggest(std::span<const TrialRecord> history, Rng& rng) const;

  const TpeConfig& config() const { return config_; }

 private:
  double uniform_draw(Rng& rng) const;

  TpeConfig config_;
  double lo_, hi_;
};

}  // namespace fsuda
