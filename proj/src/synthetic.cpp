#include "fsuda/core/synthetic.hpp"

#include "fsuda/core/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fsuda {

StyleParams StyleParams::source_default() { return StyleParams{}; }

StyleParams StyleParams::target_default() {
  StyleParams style;
  style.name = "target";
  style.base_intensity = 0.45;
  style.contrast = 0.28;
  style.cup_contrast = 0.16;
  style.color_cast = {0.85, 0.8, 0.75};
  style.texture = 0.07;
  style.noise = 0.025;
  style.vignette = 0.22;
  style.blur = 1.4;
  return style;
}

namespace {

struct Ellipse {
  double cy, cx, ry, rx, angle;

  // Normalized radius; <= 1 inside.
  double radius(double y, double x) const {
    const double dy = y - cy;
    const double dx = x - cx;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    return std::sqrt(u * u + v * v);
  }
};

struct Wave {
  double fy, fx, phase, weight;
};

double soft_inside(double r, double mean_radius, double blur) {
  return 1.0 / (1.0 + std::exp(-(1.0 - r) * mean_radius / std::max(blur, 1e-3)));
}

ImageSample render_one(const StyleParams& style, const SyntheticOptions& options, Rng& rng,
                       int index) {
  const int n = options.resolution;
  Ellipse disc{}, cup{};
  Mask disc_mask, cup_mask;
  for (;;) {
    const double r = uniform(rng, 0.2, 0.3) * n;
    const double ecc = uniform(rng, 0.85, 1.15);
    disc = Ellipse{uniform(rng, 0.4, 0.6) * n, uniform(rng, 0.4, 0.6) * n, r * ecc, r / ecc,
                   uniform(rng, 0.0, std::numbers::pi)};
    const double ratio = uniform(rng, 0.35, 0.65);
    const double offset = 0.15 * r;
    cup = Ellipse{disc.cy + uniform(rng, -offset, offset), disc.cx + uniform(rng, -offset, offset),
                  disc.ry * ratio * uniform(rng, 0.9, 1.1), disc.rx * ratio * uniform(rng, 0.9, 1.1),
                  disc.angle};
    if (std::max(cup.ry, cup.rx) >= std::min(disc.ry, disc.rx)) continue;
    disc_mask = Mask::Zero(n, n);
    cup_mask = Mask::Zero(n, n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const bool in_disc = disc.radius(y + 0.5, x + 0.5) <= 1.0;
        disc_mask(y, x) = in_disc;
        cup_mask(y, x) = in_disc && cup.radius(y + 0.5, x + 0.5) <= 1.0;
      }
    }
    if (cup_mask.any() && disc_mask.any()) break;
  }

  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    w = Wave{uniform(rng, 0.5, 3.0) / n, uniform(rng, 0.5, 3.0) / n, uniform(rng, 0.0, 2 * std::numbers::pi),
             uniform(rng, 0.5, 1.0)};
  }
  const double disc_mean_r = 0.5 * (disc.ry + disc.rx);
  const double cup_mean_r = 0.5 * (cup.ry + cup.rx);
  const double brightness = uniform(rng, 0.9, 1.1);

  ImageSample sample = blank_sample(n, n, options.id_prefix + "_" + std::to_string(index), options.domain);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double texture = 0.0;
      for (const auto& w : waves) {
        texture += w.weight * std::sin(2 * std::numbers::pi * (w.fy * y + w.fx * x) + w.phase);
      }
      texture *= style.texture / 2.0;
      const double dy = (y + 0.5) / n - 0.5;
      const double dx = (x + 0.5) / n - 0.5;
      const double vignette = 1.0 - style.vignette * 2.0 * (dy * dy + dx * dx);
      const double disc_w = soft_inside(disc.radius(y + 0.5, x + 0.5), disc_mean_r, style.blur);
      const double cup_w = soft_inside(cup.radius(y + 0.5, x + 0.5), cup_mean_r, style.blur);
      const double level =
          (style.base_intensity * brightness + texture + style.contrast * disc_w + style.cup_contrast * cup_w) *
          vignette;
      for (int c = 0; c < 3; ++c) {
        const double v = level * style.color_cast[c] + style.noise * normal(rng);
        sample.pixels[c](y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  sample.label = LabelMap::from_masks(cup_mask, disc_mask);
  return sample;
}

}  // namespace

std::vector<ImageSample> gen_synthetic_domain(const StyleParams& style, int count, std::uint64_t seed,
                                              const SyntheticOptions& options) {
  if (count < 1) throw Error("synthetic dataset needs count >= 1");
  if (options.resolution < 8) throw Error("synthetic resolution must be >= 8");
  Rng rng(seed);
  std::vector<ImageSample> samples;
  samples.reserve(count);
  for (int i = 0; i < count; ++i) samples.push_back(render_one(style, options, rng, i));
  return samples;
}

double mean_intensity(const std::vector<ImageSample>& samples) {
  double sum = 0.0;
  double count = 0.0;
  for (const auto& s : samples) {
    for (const auto& c : s.pixels) {
      sum += c.cast<double>().sum();
      count += static_cast<double>(c.size());
    }
  }
  return count > 0 ? sum / count : 0.0;
}

}  // namespace fsuda
