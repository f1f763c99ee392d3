#include "fsuda/core/types.hpp"

#include <cmath>

namespace fsuda {

std::string_view to_string(Domain domain) {
  switch (domain) {
    case Domain::kSource: return "source";
    case Domain::kTarget: return "target";
    case Domain::kSynthSourceToTarget: return "synth_s_to_t";
    case Domain::kSynthTargetToSource: return "synth_t_to_s";
  }
  return "unknown";
}

Domain domain_from_string(std::string_view name) {
  if (name == "source") return Domain::kSource;
  if (name == "target") return Domain::kTarget;
  if (name == "synth_s_to_t") return Domain::kSynthSourceToTarget;
  if (name == "synth_t_to_s") return Domain::kSynthTargetToSource;
  throw Error("unknown domain '" + std::string(name) + "'");
}

std::string_view to_string(ClassId id) { return id == ClassId::kCup ? "cup" : "disc"; }

LabelMap LabelMap::from_masks(const Mask& cup, const Mask& disc) {
  if (cup.rows() != disc.rows() || cup.cols() != disc.cols()) {
    throw Error("cup and disc masks differ in shape");
  }
  LabelMap map;
  map.labels = Mask::Zero(disc.rows(), disc.cols());
  for (Eigen::Index i = 0; i < disc.size(); ++i) {
    if (cup.data()[i]) {
      map.labels.data()[i] = 2;
    } else if (disc.data()[i]) {
      map.labels.data()[i] = 1;
    }
  }
  return map;
}

ImageSample blank_sample(int height, int width, std::string id, Domain domain) {
  ImageSample sample;
  for (auto& channel : sample.pixels) channel = Plane::Zero(height, width);
  sample.id = std::move(id);
  sample.domain = domain;
  return sample;
}

void validate(const ImageSample& sample) {
  const int h = sample.height();
  const int w = sample.width();
  if (h < 8 || w < 8) {
    throw Error("sample '" + sample.id + "' is smaller than 8x8");
  }
  for (const auto& channel : sample.pixels) {
    if (channel.rows() != h || channel.cols() != w) {
      throw Error("sample '" + sample.id + "' has channels of different shape");
    }
    if (!channel.isFinite().all() || (channel < 0.0f).any() || (channel > 1.0f).any()) {
      throw Error("sample '" + sample.id + "' has pixels outside [0,1]");
    }
  }
  if (sample.label) {
    if (sample.label->rows() != h || sample.label->cols() != w) {
      throw Error("sample '" + sample.id + "' label shape differs from image");
    }
    if ((sample.label->labels > 2).any()) {
      throw Error("sample '" + sample.id + "' label contains values outside {0,1,2}");
    }
  }
}

}  // namespace fsuda
