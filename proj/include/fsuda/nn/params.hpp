#pragma once

#include "fsuda/core/random.hpp"
#include "fsuda/nn/tensor.hpp"

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace fsuda::nn {

// Named parameter tensors grouped by role (encoder, context, decoder, ...).
template <typename Scalar>
struct ParamStore {
  struct Entry {
    std::string name;
    std::string group;
    Matrix<Scalar> value;
  };
  std::vector<Entry> entries;

  int add(std::string name, std::string group, Matrix<Scalar> value) {
    entries.push_back(Entry{std::move(name), std::move(group), std::move(value)});
    return static_cast<int>(entries.size()) - 1;
  }

  std::size_t size() const { return entries.size(); }
  Matrix<Scalar>& operator[](int i) { return entries[static_cast<std::size_t>(i)].value; }
  const Matrix<Scalar>& operator[](int i) const { return entries[static_cast<std::size_t>(i)].value; }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& e : entries) total += static_cast<std::size_t>(e.value.size());
    return total;
  }

  std::vector<Matrix<Scalar>> zeros_like() const {
    std::vector<Matrix<Scalar>> grads;
    grads.reserve(entries.size());
    for (const auto& e : entries) grads.push_back(Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
    return grads;
  }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& e : entries) out.add(e.name, e.group, e.value.template cast<Other>());
    return out;
  }

  // FNV-1a over the raw bytes; equal checksums mean bitwise-equal parameters.
  std::uint64_t checksum() const {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const auto& e : entries) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(e.value.data());
      for (std::size_t i = 0; i < static_cast<std::size_t>(e.value.size()) * sizeof(Scalar); ++i) {
        hash = (hash ^ bytes[i]) * 0x100000001b3ULL;
      }
    }
    return hash;
  }
};

template <typename Scalar>
using Gradients = std::vector<Matrix<Scalar>>;

template <typename Scalar>
void zero(Gradients<Scalar>& grads) {
  for (auto& g : grads) g.setZero();
}

template <typename Scalar>
bool all_finite(const Gradients<Scalar>& grads) {
  for (const auto& g : grads) {
    if (!g.allFinite()) return false;
  }
  return true;
}

// Convolution layer: indices of its weight and bias in a ParamStore.
struct ConvLayer {
  int weight = -1;
  int bias = -1;
  ConvSpec spec;
};

template <typename Scalar>
ConvLayer add_conv(ParamStore<Scalar>& store, const std::string& name, const std::string& group, int in_channels,
                   int out_channels, ConvSpec spec, Rng& rng, double gain = 2.0) {
  const int fan_in = in_channels * spec.kernel * spec.kernel;
  const double stddev = std::sqrt(gain / fan_in);
  Matrix<Scalar> weight(out_channels, fan_in);
  for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = static_cast<Scalar>(stddev * normal(rng));
  ConvLayer layer;
  layer.weight = store.add(name + ".weight", group, std::move(weight));
  layer.bias = store.add(name + ".bias", group, Matrix<Scalar>::Zero(out_channels, 1));
  layer.spec = spec;
  return layer;
}

template <typename Scalar>
Tensor<Scalar> apply(const ParamStore<Scalar>& store, const ConvLayer& layer, const Tensor<Scalar>& x) {
  return conv2d(x, store[layer.weight], store[layer.bias], layer.spec);
}

template <typename Scalar>
Tensor<Scalar> apply_backward(const ParamStore<Scalar>& store, const ConvLayer& layer, const Tensor<Scalar>& x,
                              const Tensor<Scalar>& dy, Gradients<Scalar>& grads, bool need_input_grad = true) {
  return conv2d_backward(x, store[layer.weight], layer.spec, dy, grads[static_cast<std::size_t>(layer.weight)],
                         grads[static_cast<std::size_t>(layer.bias)], need_input_grad);
}

}  // namespace fsuda::nn
