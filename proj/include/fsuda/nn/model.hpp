#pragma once

#include "fsuda/core/config.hpp"
#include "fsuda/core/types.hpp"
#include "fsuda/nn/discriminator.hpp"
#include "fsuda/nn/segnet.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fsuda {

using SegModel = nn::SegNet<float>;
using DiscModel = nn::Discriminator<float>;

struct SegmentationOutput {
  std::array<Plane, 2> prob;  // [cup, disc]
  nn::Matrix<float> feature;  // C_f x (h*w), encoder tap
  int feature_h = 0;
  int feature_w = 0;
};

// Inference in fixed-size batches; no parameter is touched.
std::vector<SegmentationOutput> predict(const SegModel& model, std::span<const ImageSample> images,
                                        int batch_size = 8);

// Mean BCE over pixels and both classes, probabilities clamped into [1e-7, 1-1e-7].
double seg_loss(const SegmentationOutput& output, const LabelMap& label);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string stage_tag;    // "stage1", "stage2", "warm", ...
  std::string config_yaml;  // echo of the RunConfig that produced it
  SegModel model;
  std::optional<DiscModel> d1, d2;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Stable content id of a checkpoint file (hex FNV-1a of its bytes).
std::string file_digest(const std::filesystem::path& path);
std::string bytes_digest(std::string_view bytes);

}  // namespace fsuda
