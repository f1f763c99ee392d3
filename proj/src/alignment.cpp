#include "fsuda/align/adversarial.hpp"
#include "fsuda/align/prototype.hpp"

#include <algorithm>

namespace fsuda::align {

SelfInfoMap self_information(const std::array<Plane, 2>& prob) {
  SelfInfoMap map;
  for (std::size_t c = 0; c < 2; ++c) {
    const Plane p = prob[c].max(0.0f).min(1.0f);
    map.values[c] = (p > 0.0f).select(-p * p.max(std::numeric_limits<float>::min()).log(), 0.0f);
  }
  return map;
}

Mask downsample_class_mask(const LabelMap& label, ClassId class_id, int rows, int cols) {
  if (rows < 1 || cols < 1 || rows > label.rows() || cols > label.cols()) {
    throw Error("downsample_class_mask: target size must lie within the label size");
  }
  const Mask full = label.class_mask(class_id);
  if (rows == label.rows() && cols == label.cols()) return full;
  const double sy = static_cast<double>(label.rows()) / rows;
  const double sx = static_cast<double>(label.cols()) / cols;
  Mask out = Mask::Zero(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const double y0 = i * sy;
    const double y1 = (i + 1) * sy;
    for (int j = 0; j < cols; ++j) {
      const double x0 = j * sx;
      const double x1 = (j + 1) * sx;
      double covered = 0.0;
      for (int y = static_cast<int>(y0); y < std::min<int>(label.rows(), static_cast<int>(std::ceil(y1))); ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        if (wy <= 0) continue;
        for (int x = static_cast<int>(x0); x < std::min<int>(label.cols(), static_cast<int>(std::ceil(x1))); ++x) {
          const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          if (wx > 0 && full(y, x)) covered += wy * wx;
        }
      }
      out(i, j) = covered / (sy * sx) >= 0.5 - 1e-12;
    }
  }
  return out;
}

}  // namespace fsuda::align
