#include "fsuda/search/tpe.hpp"

#include "fsuda/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace fsuda {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

ParzenDensity::ParzenDensity(std::span<const double> points, double lo, double hi, double prior_weight)
    : lo_(lo), hi_(hi) {
  if (points.empty() || !(hi > lo)) {
    degenerate_ = true;
    return;
  }
  std::vector<double> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end());
  const double width = hi - lo;
  const std::size_t n = sorted.size();
  const double min_sigma = width / std::min(100.0, static_cast<double>(n) + 1.0);
  const double component_weight = 1.0 / (static_cast<double>(n) + prior_weight);
  prior_weight_ = prior_weight * component_weight;
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i == 0 ? lo : sorted[i - 1];
    const double right = i + 1 == n ? hi : sorted[i + 1];
    const double sigma = std::clamp(std::min(sorted[i] - left, right - sorted[i]), min_sigma, width);
    const double mass = normal_cdf((hi - sorted[i]) / sigma) - normal_cdf((lo - sorted[i]) / sigma);
    if (!std::isfinite(sigma) || !(mass > 0.0)) continue;
    mu_.push_back(sorted[i]);
    sigma_.push_back(sigma);
    mass_.push_back(mass);
    weight_.push_back(component_weight);
  }
  degenerate_ = mu_.empty();
}

double ParzenDensity::pdf(double x) const {
  if (x <= lo_ || x >= hi_) return 0.0;
  double density = prior_weight_ / (hi_ - lo_);
  for (std::size_t i = 0; i < mu_.size(); ++i) {
    const double z = (x - mu_[i]) / sigma_[i];
    density += weight_[i] * std::exp(-0.5 * z * z) / (sigma_[i] * std::sqrt(2.0 * std::numbers::pi) * mass_[i]);
  }
  return density;
}

double ParzenDensity::sample(Rng& rng) const {
  const double kernel_total = std::accumulate(weight_.begin(), weight_.end(), 0.0);
  double pick = uniform01(rng) * (prior_weight_ + kernel_total);
  std::size_t index = 0;
  while (index < mu_.size() && pick >= weight_[index]) pick -= weight_[index++];
  if (index >= mu_.size()) {
    double x = lo_;
    while (x <= lo_ || x >= hi_) x = uniform(rng, lo_, hi_);
    return x;
  }
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double x = mu_[index] + sigma_[index] * normal(rng);
    if (x > lo_ && x < hi_) return x;
  }
  return std::clamp(mu_[index], std::nextafter(lo_, hi_), std::nextafter(hi_, lo_));
}

TpeSampler::TpeSampler(TpeConfig config, double lo, double hi) : config_(config), lo_(lo), hi_(hi) {
  if (!(hi > lo)) throw Error("TpeSampler: empty search interval");
}

double TpeSampler::uniform_draw(Rng& rng) const {
  double x = lo_;
  while (x <= lo_ || x >= hi_) x = uniform(rng, lo_, hi_);
  return x;
}

double TpeSampler::suggest(std::span<const TrialRecord> history, Rng& rng) const {
  if (static_cast<int>(history.size()) < std::max(config_.n_startup, 1)) return uniform_draw(rng);

  std::vector<TrialRecord> ranked(history.begin(), history.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const TrialRecord& a, const TrialRecord& b) { return a.score > b.score; });
  const auto n_good = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(config_.good_quantile * static_cast<double>(ranked.size()))), 1,
      ranked.size());
  if (n_good == ranked.size()) return uniform_draw(rng);

  std::vector<double> good, bad;
  for (std::size_t i = 0; i < ranked.size(); ++i) (i < n_good ? good : bad).push_back(ranked[i].beta);
  const ParzenDensity good_density(good, lo_, hi_, config_.prior_weight);
  const ParzenDensity bad_density(bad, lo_, hi_, config_.prior_weight);
  if (good_density.degenerate() || bad_density.degenerate()) return uniform_draw(rng);

  double best = uniform_draw(rng);
  double best_ratio = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < config_.n_ei_candidates; ++i) {
    const double candidate = good_density.sample(rng);
    const double ratio = std::log(good_density.pdf(candidate)) - std::log(bad_density.pdf(candidate));
    if (std::isfinite(ratio) && ratio > best_ratio) {
      best_ratio = ratio;
      best = candidate;
    }
  }
  return best;
}

}  // namespace fsuda
