#pragma once

#include "fsuda/core/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace fsuda {

// Immutable collection of samples. Labels are kept apart from the images and
// every label read is counted, so callers can prove a code path never touched
// ground truth.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<ImageSample> samples);

  std::size_t size() const { return images_.size(); }
  bool empty() const { return images_.empty(); }

  // Image, id, domain and style tag; the label field is always empty.
  const ImageSample& image(std::size_t index) const { return images_.at(index); }
  std::span<const ImageSample> images() const { return images_; }

  bool has_label(std::size_t index) const { return labels_.at(index).has_value(); }
  bool fully_labeled() const;
  // Counted access.
  const LabelMap& label(std::size_t index) const;
  ImageSample labeled_sample(std::size_t index) const;
  std::vector<ImageSample> labeled_samples() const;

  std::uint64_t label_reads() const { return *label_reads_; }

 private:
  std::vector<ImageSample> images_;
  std::vector<std::optional<LabelMap>> labels_;
  std::shared_ptr<std::uint64_t> label_reads_ = std::make_shared<std::uint64_t>(0);
};

Plane resize_bilinear(const Plane& plane, int rows, int cols);
Mask resize_nearest(const Mask& mask, int rows, int cols);
ImageSample resize_sample(const ImageSample& sample, int resolution);

enum class Split { kSource, kTarget, kTest };

struct LoadOptions {
  int resolution = 64;
  // Source split only: 0 keeps every image.
  int few_shot = 10;
  std::uint64_t seed = 0;
  bool center_crop = false;
  bool normalize = false;
};

// Reads <root>/images/*.{png,jpg,jpeg} and <root>/masks/<basename>.png.
// Mask gray levels 0/128/255 map to labels 0/1/2.
std::vector<ImageSample> load_dataset(const std::filesystem::path& root, Split split,
                                      const LoadOptions& options);

// Writes a dataset directory in the layout read by load_dataset.
void save_dataset(const std::filesystem::path& root, std::span<const ImageSample> samples);

// Seeded choice of `count` indices out of `population`, independent of any
// filesystem ordering once the listing is sorted.
std::vector<std::size_t> few_shot_indices(std::size_t population, std::size_t count,
                                          std::uint64_t seed);

}  // namespace fsuda
