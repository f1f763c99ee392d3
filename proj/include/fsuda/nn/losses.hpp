#pragma once

#include "fsuda/nn/tensor.hpp"

#include <cmath>
#include <vector>

namespace fsuda::nn {

inline constexpr double kProbClamp = 1e-7;

// Mean binary cross-entropy on logits, computed in the overflow-free form
// max(z,0) - z*t + log(1 + exp(-|z|)). Writes (sigmoid(z) - t) * scale / N
// into `grad` when given.
template <typename Scalar>
Scalar bce_with_logits(const Matrix<Scalar>& logits, const Matrix<Scalar>& targets, Matrix<Scalar>* grad = nullptr,
                       Scalar scale = Scalar(1)) {
  const auto z = logits.array();
  const auto t = targets.array();
  const Scalar n = static_cast<Scalar>(logits.size());
  const Scalar loss = (z.max(Scalar(0)) - z * t + (Scalar(1) + (-z.abs()).exp()).log()).sum() / n;
  if (grad) *grad = ((sigmoid(logits).array() - t) * (scale / n)).matrix();
  return loss;
}

// Mean binary cross-entropy on probabilities clamped into [1e-7, 1 - 1e-7].
template <typename Scalar>
Scalar bce_on_prob(const Matrix<Scalar>& prob, const Matrix<Scalar>& targets) {
  const Scalar lo = static_cast<Scalar>(kProbClamp);
  const auto p = prob.array().max(lo).min(Scalar(1) - lo);
  const auto t = targets.array();
  return -(t * p.log() + (Scalar(1) - t) * (Scalar(1) - p).log()).sum() / static_cast<Scalar>(prob.size());
}

// (n, 2, H, W) binary targets: channel 0 = cup, channel 1 = disc.
template <typename Scalar>
Tensor<Scalar> label_targets(const std::vector<const LabelMap*>& labels) {
  if (labels.empty()) throw Error("label_targets: empty batch");
  const int h = labels[0]->rows();
  const int w = labels[0]->cols();
  Tensor<Scalar> t(static_cast<int>(labels.size()), 2, h, w);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b]->rows() != h || labels[b]->cols() != w) throw Error("label_targets: shape mismatch");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto v = labels[b]->labels(y, x);
        t.at(static_cast<int>(b), 0, y, x) = v == 2 ? Scalar(1) : Scalar(0);
        t.at(static_cast<int>(b), 1, y, x) = v >= 1 ? Scalar(1) : Scalar(0);
      }
    }
  }
  return t;
}

}  // namespace fsuda::nn
