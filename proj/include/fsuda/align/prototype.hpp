#pragma once

#include "fsuda/core/types.hpp"
#include "fsuda/nn/tensor.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace fsuda::align {

enum class PrototypeNorm { kTotal, kArea };
enum class PrototypeSource { kOriginal, kSynthesized };

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct ClassPrototype {
  Vec<Scalar> vector;
  ClassId class_id = ClassId::kDisc;
  PrototypeSource source_kind = PrototypeSource::kOriginal;
};

// Class mask downsampled by area averaging and thresholded at 0.5 (ties count
// as foreground).
Mask downsample_class_mask(const LabelMap& label, ClassId class_id, int rows, int cols);

// Masked global average pooling. `feature` is C_f x (h*w), `mask` is h x w.
// kTotal divides by h*w; kArea divides by the mask area.
template <typename Scalar>
Vec<Scalar> class_prototype(const nn::Matrix<Scalar>& feature, const Mask& mask,
                            PrototypeNorm norm = PrototypeNorm::kTotal) {
  if (feature.cols() != mask.size()) throw Error("class_prototype: feature and mask sizes differ");
  const Eigen::Map<const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>> m(mask.data(), mask.size());
  const Vec<Scalar> weights = m.cast<Scalar>();
  Vec<Scalar> sum = feature * weights;
  const Scalar denom = norm == PrototypeNorm::kTotal ? static_cast<Scalar>(mask.size()) : weights.sum();
  if (denom > Scalar(0)) sum /= denom;
  return sum;
}

template <typename Scalar>
ClassPrototype<Scalar> class_prototype(const nn::Matrix<Scalar>& feature, const Mask& mask, ClassId class_id,
                                       PrototypeSource source, PrototypeNorm norm = PrototypeNorm::kTotal) {
  return ClassPrototype<Scalar>{class_prototype(feature, mask, norm), class_id, source};
}

// 1 - a.b / max(|a||b|, eps), with gradients with respect to a and b.
template <typename Scalar>
Scalar cosine_term(const Vec<Scalar>& a, const Vec<Scalar>& b, Scalar epsilon, Vec<Scalar>* da = nullptr,
                   Vec<Scalar>* db = nullptr) {
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  const Scalar dot = a.dot(b);
  const Scalar denom = std::max(na * nb, epsilon);
  if (da || db) {
    const bool guarded = na * nb <= epsilon;
    if (da) {
      *da = -b / denom;
      if (!guarded && na > Scalar(0)) *da += dot * a / (denom * na * na);
    }
    if (db) {
      *db = -a / denom;
      if (!guarded && nb > Scalar(0)) *db += dot * b / (denom * nb * nb);
    }
  }
  return Scalar(1) - dot / denom;
}

// Per-class prototypes; a missing entry marks a class absent from the batch.
template <typename Scalar>
using PrototypeSet = std::array<std::optional<Vec<Scalar>>, 2>;

// Sum over classes present in both sets of the cosine term; value in [0, 4].
template <typename Scalar>
Scalar consistency_loss(const PrototypeSet<Scalar>& original, const PrototypeSet<Scalar>& synthesized,
                        Scalar epsilon = Scalar(1e-8), std::array<Vec<Scalar>, 2>* d_original = nullptr,
                        std::array<Vec<Scalar>, 2>* d_synthesized = nullptr) {
  Scalar loss = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    if (!original[c] || !synthesized[c]) {
      if (d_original && original[c]) (*d_original)[c] = Vec<Scalar>::Zero(original[c]->size());
      if (d_synthesized && synthesized[c]) (*d_synthesized)[c] = Vec<Scalar>::Zero(synthesized[c]->size());
      continue;
    }
    if (original[c]->size() != synthesized[c]->size()) throw Error("consistency_loss: prototype sizes differ");
    loss += cosine_term(*original[c], *synthesized[c], epsilon, d_original ? &(*d_original)[c] : nullptr,
                        d_synthesized ? &(*d_synthesized)[c] : nullptr);
  }
  return loss;
}

// Batch-level prototypes: masked features of every image in the batch pooled
// together. `masks[b][c]` is the feature-resolution mask of class c in image b.
template <typename Scalar>
struct BatchPooling {
  nn::Matrix<Scalar> weights;  // (n*h*w) x 2, already divided by the normalizer
  std::array<bool, 2> present{};
};

template <typename Scalar>
BatchPooling<Scalar> batch_pooling(const std::vector<std::array<Mask, 2>>& masks, int h, int w,
                                   PrototypeNorm norm = PrototypeNorm::kTotal) {
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  BatchPooling<Scalar> pool;
  pool.weights = nn::Matrix<Scalar>::Zero(static_cast<Eigen::Index>(masks.size()) * plane, 2);
  for (std::size_t b = 0; b < masks.size(); ++b) {
    for (int c = 0; c < 2; ++c) {
      const Mask& m = masks[b][static_cast<std::size_t>(c)];
      if (m.rows() != h || m.cols() != w) throw Error("batch_pooling: mask does not match feature size");
      for (Eigen::Index i = 0; i < plane; ++i) {
        pool.weights(static_cast<Eigen::Index>(b) * plane + i, c) = m.data()[i] ? Scalar(1) : Scalar(0);
      }
    }
  }
  for (int c = 0; c < 2; ++c) {
    const Scalar area = pool.weights.col(c).sum();
    pool.present[static_cast<std::size_t>(c)] = area > Scalar(0);
    const Scalar denom = norm == PrototypeNorm::kTotal ? static_cast<Scalar>(pool.weights.rows()) : area;
    if (denom > Scalar(0)) pool.weights.col(c) /= denom;
  }
  return pool;
}

template <typename Scalar>
PrototypeSet<Scalar> pooled_prototypes(const nn::Matrix<Scalar>& feature, const BatchPooling<Scalar>& pool) {
  PrototypeSet<Scalar> set;
  for (std::size_t c = 0; c < 2; ++c) {
    if (pool.present[c]) set[c] = feature * pool.weights.col(static_cast<Eigen::Index>(c));
  }
  return set;
}

// dL/dfeature from dL/dprototype.
template <typename Scalar>
nn::Matrix<Scalar> pooled_prototypes_backward(const BatchPooling<Scalar>& pool, const std::array<Vec<Scalar>, 2>& dproto,
                                              Eigen::Index channels) {
  nn::Matrix<Scalar> d = nn::Matrix<Scalar>::Zero(channels, pool.weights.rows());
  for (std::size_t c = 0; c < 2; ++c) {
    if (pool.present[c] && dproto[c].size() == channels) {
      d.noalias() += dproto[c] * pool.weights.col(static_cast<Eigen::Index>(c)).transpose();
    }
  }
  return d;
}

}  // namespace fsuda::align
