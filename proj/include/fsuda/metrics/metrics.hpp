#pragma once

#include "fsuda/core/dataset.hpp"
#include "fsuda/core/types.hpp"
#include "fsuda/nn/model.hpp"

#include <array>
#include <string>
#include <vector>

namespace fsuda {

enum class Connectivity { kFour = 4, kEight = 8 };

// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
double dice(const Mask& pred, const Mask& gt);

// Mask pixels with at least one background neighbor; outside the image counts
// as background.
Mask boundary(const Mask& mask, Connectivity connectivity = Connectivity::kFour);

// Exact squared Euclidean distance from every pixel to the nearest nonzero
// pixel of `seeds` (separable lower-envelope transform). Infinite when empty.
PlaneD squared_distance_transform(const Mask& seeds);

struct AsdOptions {
  Connectivity connectivity = Connectivity::kFour;
  // Returned when either mask is empty; <= 0 selects the image diagonal.
  double empty_penalty = -1.0;
};

// Symmetric mean of nearest boundary-to-boundary distances in pixels.
double asd(const Mask& pred, const Mask& gt, const AsdOptions& options = {});
bool asd_is_penalty(const Mask& pred, const Mask& gt);

struct ImageEval {
  std::string id;
  double dice_cup = 0, dice_disc = 0;
  double asd_cup = 0, asd_disc = 0;
  bool cup_both_empty = false, disc_both_empty = false;
  bool cup_asd_penalty = false, disc_asd_penalty = false;
};

// Dice in percent, ASD in pixels.
struct EvalResult {
  double dice_cup = 0, dice_disc = 0, dice_avg = 0;
  double asd_cup = 0, asd_disc = 0, asd_avg = 0;
  int n_images = 0;
  std::vector<ImageEval> per_image;
};

struct EvalOptions {
  double threshold = 0.5;
  AsdOptions asd;
};

// prob >= threshold per channel; cup on channel 0, disc on channel 1.
ImageEval evaluate_prediction(const std::array<Plane, 2>& prob, const LabelMap& label, const EvalOptions& options = {});
EvalResult aggregate(std::vector<ImageEval> per_image);

EvalResult evaluate(const SegModel& model, const Dataset& dataset, const EvalOptions& options = {});

// Human-readable table with Cup / Disc / Average x Dice / ASD columns.
std::string format_eval_table(const std::vector<std::pair<std::string, EvalResult>>& rows);

}  // namespace fsuda
