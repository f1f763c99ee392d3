#pragma once

#include "fsuda/core/types.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace fsuda {

// Appearance of one synthetic "camera". Intensities are in [0,1] before the
// per-channel color cast is applied.
struct StyleParams {
  std::string name = "source";
  double base_intensity = 0.35;          // background level
  double contrast = 0.35;                // disc level above background
  double cup_contrast = 0.2;             // cup level above disc
  std::array<double, 3> color_cast = {1.0, 0.6, 0.4};
  double texture = 0.06;                 // amplitude of smooth background texture
  double noise = 0.02;                   // per-pixel gaussian noise sigma
  double vignette = 0.15;                // radial darkening toward the border
  double blur = 1.2;                     // soft edge width of disc/cup in pixels

  static StyleParams source_default();
  static StyleParams target_default();
};

struct SyntheticOptions {
  int resolution = 64;
  Domain domain = Domain::kSource;
  std::string id_prefix = "img";
};

// Renders a textured background with an elliptical disc and a smaller
// elliptical cup nested inside it. Deterministic in `seed`.
std::vector<ImageSample> gen_synthetic_domain(const StyleParams& style, int count, std::uint64_t seed,
                                              const SyntheticOptions& options = {});

double mean_intensity(const std::vector<ImageSample>& samples);

}  // namespace fsuda
