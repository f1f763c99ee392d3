#pragma once

#include "fsuda/nn/params.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace fsuda::nn {

// Fully convolutional patch classifier: four 4x4 stride-2 convolutions with
// leaky ReLU between them; one logit per (H/16 x W/16) patch.
template <typename Scalar>
class Discriminator {
 public:
  static constexpr double kSlope = 0.2;

  struct Cache {
    Tensor<Scalar> input;
    std::array<Tensor<Scalar>, 3> hidden;
    Tensor<Scalar> logits;
  };

  Discriminator() = default;
  Discriminator(const std::string& name, int in_channels, int width, std::uint64_t seed) {
    Rng rng(seed);
    const ConvSpec spec{4, 2, 1, 1};
    layers_[0] = add_conv(params_, name + ".conv1", name, in_channels, width, spec, rng);
    layers_[1] = add_conv(params_, name + ".conv2", name, width, 2 * width, spec, rng);
    layers_[2] = add_conv(params_, name + ".conv3", name, 2 * width, 4 * width, spec, rng);
    layers_[3] = add_conv(params_, name + ".classifier", name, 4 * width, 1, spec, rng, 1.0);
  }

  Cache forward(const Tensor<Scalar>& input) const {
    if (input.h % 16 != 0 || input.w % 16 != 0) throw Error("Discriminator: input size must be divisible by 16");
    Cache k;
    k.input = input;
    const Tensor<Scalar>* x = &k.input;
    for (int i = 0; i < 3; ++i) {
      k.hidden[i] = apply(params_, layers_[i], *x);
      leaky_relu_inplace(k.hidden[i], Scalar(kSlope));
      x = &k.hidden[i];
    }
    k.logits = apply(params_, layers_[3], *x);
    return k;
  }

  // Accumulates into `grads` (sized like params()); returns dL/dinput.
  Tensor<Scalar> backward(const Cache& k, const Tensor<Scalar>& dlogits, Gradients<Scalar>& grads,
                          bool need_input_grad = true) const {
    Tensor<Scalar> d = apply_backward(params_, layers_[3], k.hidden[2], dlogits, grads);
    for (int i = 2; i >= 0; --i) {
      leaky_relu_backward_inplace(k.hidden[i], d, Scalar(kSlope));
      const Tensor<Scalar>& in = i == 0 ? k.input : k.hidden[i - 1];
      d = apply_backward(params_, layers_[i], in, d, grads, i > 0 || need_input_grad);
    }
    return d;
  }

  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }

  template <typename Other>
  Discriminator<Other> cast() const {
    Discriminator<Other> out;
    out.params_ = params_.template cast<Other>();
    out.layers_ = layers_;
    return out;
  }

 private:
  template <typename>
  friend class Discriminator;

  ParamStore<Scalar> params_;
  std::array<ConvLayer, 4> layers_{};
};

}  // namespace fsuda::nn
