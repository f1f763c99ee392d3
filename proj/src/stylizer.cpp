#include "fsuda/fourier/stylizer.hpp"

#include "fsuda/core/random.hpp"

#include <algorithm>
#include <cmath>

namespace fsuda {

FrequencyDecomposition forward_dft(const ImageSample& image) {
  return forward_dft<double, float>(std::span<const Plane>(image.pixels.data(), image.pixels.size()));
}

BandMask build_band_mask(double beta, int rows, int cols, const BandOptions& options) {
  if (!(beta > 0.0 && beta < 1.0)) throw Error("build_band_mask: beta must lie in (0,1)");
  if (rows < 1 || cols < 1) throw Error("build_band_mask: empty shape");
  BandMask band;
  band.beta = beta;
  // At least one bin on each side of the center, at most the whole spectrum.
  band.half_rows = std::max(1, std::min(static_cast<int>(std::lround(beta * rows)), rows / 2));
  band.half_cols = std::max(1, std::min(static_cast<int>(std::lround(beta * cols)), cols / 2));
  band.mask = Mask::Zero(rows, cols);
  const int cy = rows / 2;
  const int cx = cols / 2;
  const int y0 = std::max(0, cy - band.half_rows);
  const int y1 = std::min(rows - 1, cy + band.half_rows);
  const int x0 = std::max(0, cx - band.half_cols);
  const int x1 = std::min(cols - 1, cx + band.half_cols);
  band.mask.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1).setOnes();
  if (!options.swap_dc) band.mask(cy, cx) = 0;
  return band;
}

std::vector<AmplitudeGroup> average_amplitude(std::span<const ImageSample> images, int k, std::uint64_t seed) {
  if (images.empty()) throw Error("average_amplitude: empty input");
  if (k < 1 || static_cast<std::size_t>(k) > images.size()) {
    throw Error("average_amplitude: need 1 <= k <= number of images");
  }
  const int rows = images[0].height();
  const int cols = images[0].width();
  for (const auto& image : images) {
    if (image.height() != rows || image.width() != cols) {
      throw Error("average_amplitude: images must share one resolution");
    }
  }
  Rng rng(seed);
  const auto order = permutation(images.size(), rng);
  std::vector<AmplitudeGroup> groups(k);
  for (int g = 0; g < k; ++g) {
    groups[g].group_index = g;
    groups[g].mean_amplitude.assign(3, PlaneD::Zero(rows, cols));
  }
  // Round-robin over the shuffled order gives sizes differing by at most one.
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& group = groups[i % k];
    const auto& image = images[order[i]];
    const auto freq = forward_dft(image);
    for (int c = 0; c < 3; ++c) group.mean_amplitude[c] += freq.amplitude[c];
    group.member_ids.push_back(image.id);
  }
  for (auto& group : groups) {
    for (auto& plane : group.mean_amplitude) plane /= static_cast<double>(group.member_ids.size());
  }
  return groups;
}

std::vector<PlaneD> synthesize_planes(const ImageSample& src, const AmplitudeGroup& amp, double beta,
                                      const BandOptions& options) {
  if (amp.mean_amplitude.size() != 3 || amp.mean_amplitude[0].rows() != src.height() ||
      amp.mean_amplitude[0].cols() != src.width()) {
    throw Error("stylize: amplitude group resolution does not match image '" + src.id + "'");
  }
  FrequencyDecomposition freq = forward_dft(src);
  const BandMask band = build_band_mask(beta, src.height(), src.width(), options);
  const PlaneD m = band.mask.cast<double>();
  for (int c = 0; c < 3; ++c) {
    freq.amplitude[c] = m * amp.mean_amplitude[c] + (1.0 - m) * freq.amplitude[c];
  }
  return inverse_dft(freq);
}

ImageSample stylize(const ImageSample& src, const AmplitudeGroup& amp, double beta, const BandOptions& options) {
  const auto planes = synthesize_planes(src, amp, beta, options);
  ImageSample out = src;
  for (int c = 0; c < 3; ++c) out.pixels[c] = planes[c].max(0.0).min(1.0).cast<float>();
  out.domain = src.domain == Domain::kTarget ? Domain::kSynthTargetToSource : Domain::kSynthSourceToTarget;
  out.style = StyleTag{src.id, beta, amp.group_index};
  return out;
}

std::vector<ImageSample> expand_dataset(std::span<const ImageSample> samples, std::span<const double> betas,
                                        std::span<const AmplitudeGroup> groups, const BandOptions& options) {
  std::vector<ImageSample> out;
  out.reserve(samples.size() * betas.size() * groups.size());
  for (const auto& sample : samples) {
    for (std::size_t b = 0; b < betas.size(); ++b) {
      for (const auto& group : groups) {
        ImageSample synth = stylize(sample, group, betas[b], options);
        synth.id = sample.id + "_b" + std::to_string(b) + "_g" + std::to_string(group.group_index);
        out.push_back(std::move(synth));
      }
    }
  }
  return out;
}

}  // namespace fsuda
