#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fsuda {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using PlaneT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Plane = PlaneT<float>;
using PlaneD = PlaneT<double>;

// Binary (0/1) or small-integer masks.
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Domain { kSource, kTarget, kSynthSourceToTarget, kSynthTargetToSource };

std::string_view to_string(Domain domain);
Domain domain_from_string(std::string_view name);

// Output channel order of the segmentation network: 0 = cup, 1 = disc.
enum class ClassId : int { kCup = 0, kDisc = 1 };
inline constexpr std::array<ClassId, 2> kClasses = {ClassId::kCup, ClassId::kDisc};
std::string_view to_string(ClassId id);

// 0 = background, 1 = disc rim, 2 = cup. The disc is everything >= 1.
struct LabelMap {
  Mask labels;

  int rows() const { return static_cast<int>(labels.rows()); }
  int cols() const { return static_cast<int>(labels.cols()); }

  Mask disc_mask() const { return (labels >= 1).cast<std::uint8_t>(); }
  Mask cup_mask() const { return (labels == 2).cast<std::uint8_t>(); }
  Mask class_mask(ClassId id) const { return id == ClassId::kCup ? cup_mask() : disc_mask(); }

  // Rebuilds the label map from (possibly inconsistent) cup and disc masks;
  // cup pixels outside the disc are counted as disc.
  static LabelMap from_masks(const Mask& cup, const Mask& disc);
};

// Provenance of a Fourier-synthesized sample.
struct StyleTag {
  std::string origin_id;
  double beta = 0.0;
  int group_index = 0;
};

struct ImageSample {
  std::array<Plane, 3> pixels;
  std::optional<LabelMap> label;
  Domain domain = Domain::kSource;
  std::string id;
  std::optional<StyleTag> style;

  int height() const { return static_cast<int>(pixels[0].rows()); }
  int width() const { return static_cast<int>(pixels[0].cols()); }
};

ImageSample blank_sample(int height, int width, std::string id, Domain domain = Domain::kSource);

// Throws Error when a sample violates the pixel range, size or label-shape invariants.
void validate(const ImageSample& sample);

}  // namespace fsuda
