#pragma once

#include "fsuda/core/config.hpp"
#include "fsuda/nn/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fsuda::nn {

// Encoder-decoder segmenter with a multi-rate dilated context block.
//
//   input 3xHxW
//   enc1  3x3/2  -> C     @ H/2
//   enc2  3x3/2  -> 2C    @ H/4
//   enc3  3x3/2  -> 3C    @ H/8
//   enc4  3x3/1  -> 3C    @ H/8
//   context: 1x1 branch + one dilated 3x3 branch per rate, concatenated,
//            projected by 1x1 -> F                       (feature tap)
//   dec1: up x2, concat enc2, 3x3 -> 2C @ H/4
//   dec2: up x2, concat enc1, 3x3 -> C  @ H/2
//   head: 1x1 -> 2 logits, bilinear up x2, sigmoid      (cup, disc)
template <typename Scalar>
class SegNet {
 public:
  static constexpr int kOutputChannels = 2;

  struct Cache {
    Tensor<Scalar> input, e1, e2, e3, e4;
    std::vector<Tensor<Scalar>> branches;
    Tensor<Scalar> branch_cat, feature;
    Tensor<Scalar> up1, cat1, d1, up2, cat2, d2, logits_low, logits, prob;
  };

  SegNet() = default;
  SegNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    if (config.base_channels < 1 || config.context_channels < 1 || config.atrous_rates.empty()) {
      throw Error("SegNet: invalid model config");
    }
    Rng rng(seed);
    const int c = config.base_channels;
    const int branch = 2 * c;
    enc1_ = add_conv(params_, "enc1", "encoder", 3, c, {3, 2, 1, 1}, rng);
    enc2_ = add_conv(params_, "enc2", "encoder", c, 2 * c, {3, 2, 1, 1}, rng);
    enc3_ = add_conv(params_, "enc3", "encoder", 2 * c, 3 * c, {3, 2, 1, 1}, rng);
    enc4_ = add_conv(params_, "enc4", "encoder", 3 * c, 3 * c, {3, 1, 1, 1}, rng);
    branches_.push_back(add_conv(params_, "context.b0", "context", 3 * c, branch, {1, 1, 0, 1}, rng));
    for (std::size_t i = 0; i < config.atrous_rates.size(); ++i) {
      const int r = config.atrous_rates[i];
      branches_.push_back(add_conv(params_, "context.b" + std::to_string(i + 1), "context", 3 * c, branch,
                                   {3, 1, r, r}, rng));
    }
    project_ = add_conv(params_, "context.project", "context", branch * static_cast<int>(branches_.size()),
                        config.context_channels, {1, 1, 0, 1}, rng);
    dec1_ = add_conv(params_, "dec1", "decoder", config.context_channels + 2 * c, 2 * c, {3, 1, 1, 1}, rng);
    dec2_ = add_conv(params_, "dec2", "decoder", 3 * c, c, {3, 1, 1, 1}, rng);
    head_ = add_conv(params_, "head", "decoder", c, kOutputChannels, {1, 1, 0, 1}, rng, 1.0);
  }

  SegNet(const ModelConfig& config, int resolution, std::uint64_t seed) : SegNet(config, seed) {
    check_resolution(resolution, resolution);
  }

  static void check_resolution(int h, int w) {
    if (h < 8 || w < 8 || h % 8 != 0 || w % 8 != 0) {
      throw Error("SegNet: resolution " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by 8");
    }
  }

  Cache forward(const Tensor<Scalar>& input) const {
    if (input.c != 3) throw Error("SegNet: expected 3 input channels");
    check_resolution(input.h, input.w);
    Cache k;
    k.input = input;
    k.e1 = apply(params_, enc1_, input);
    relu_inplace(k.e1);
    k.e2 = apply(params_, enc2_, k.e1);
    relu_inplace(k.e2);
    k.e3 = apply(params_, enc3_, k.e2);
    relu_inplace(k.e3);
    k.e4 = apply(params_, enc4_, k.e3);
    relu_inplace(k.e4);
    for (const auto& layer : branches_) {
      Tensor<Scalar> b = apply(params_, layer, k.e4);
      relu_inplace(b);
      k.branches.push_back(std::move(b));
    }
    k.branch_cat = k.branches[0];
    for (std::size_t i = 1; i < k.branches.size(); ++i) k.branch_cat = concat_channels(k.branch_cat, k.branches[i]);
    k.feature = apply(params_, project_, k.branch_cat);
    relu_inplace(k.feature);

    k.up1 = resize_bilinear(k.feature, k.e2.h, k.e2.w);
    k.cat1 = concat_channels(k.up1, k.e2);
    k.d1 = apply(params_, dec1_, k.cat1);
    relu_inplace(k.d1);
    k.up2 = resize_bilinear(k.d1, k.e1.h, k.e1.w);
    k.cat2 = concat_channels(k.up2, k.e1);
    k.d2 = apply(params_, dec2_, k.cat2);
    relu_inplace(k.d2);
    k.logits_low = apply(params_, head_, k.d2);
    k.logits = resize_bilinear(k.logits_low, input.h, input.w);
    k.prob.n = k.logits.n;
    k.prob.c = k.logits.c;
    k.prob.h = k.logits.h;
    k.prob.w = k.logits.w;
    k.prob.data = sigmoid(k.logits.data);
    return k;
  }

  // Accumulates parameter gradients for upstream gradients on the logits
  // and/or the feature tap (either may be null). Returns dL/dinput when asked.
  Tensor<Scalar> backward(const Cache& k, const Tensor<Scalar>* dlogits, const Tensor<Scalar>* dfeature,
                          Gradients<Scalar>& grads, bool need_input_grad = false) const {
    Tensor<Scalar> dfeat(k.feature.n, k.feature.c, k.feature.h, k.feature.w);
    Tensor<Scalar> de2(k.e2.n, k.e2.c, k.e2.h, k.e2.w);
    Tensor<Scalar> de1(k.e1.n, k.e1.c, k.e1.h, k.e1.w);
    if (dlogits) {
      Tensor<Scalar> dlow = resize_bilinear_backward(*dlogits, k.logits_low.h, k.logits_low.w);
      Tensor<Scalar> dd2 = apply_backward(params_, head_, k.d2, dlow, grads);
      relu_backward_inplace(k.d2, dd2);
      Tensor<Scalar> dcat2 = apply_backward(params_, dec2_, k.cat2, dd2, grads);
      de1.data += dcat2.data.bottomRows(k.e1.c);
      Tensor<Scalar> dup2 = channel_slice(dcat2, 0, k.up2.c);
      Tensor<Scalar> dd1 = resize_bilinear_backward(dup2, k.d1.h, k.d1.w);
      relu_backward_inplace(k.d1, dd1);
      Tensor<Scalar> dcat1 = apply_backward(params_, dec1_, k.cat1, dd1, grads);
      de2.data += dcat1.data.bottomRows(k.e2.c);
      Tensor<Scalar> dup1 = channel_slice(dcat1, 0, k.up1.c);
      dfeat.data += resize_bilinear_backward(dup1, k.feature.h, k.feature.w).data;
    }
    if (dfeature) dfeat.data += dfeature->data;
    relu_backward_inplace(k.feature, dfeat);
    Tensor<Scalar> dbranch_cat = apply_backward(params_, project_, k.branch_cat, dfeat, grads);
    Tensor<Scalar> de4(k.e4.n, k.e4.c, k.e4.h, k.e4.w);
    int offset = 0;
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      Tensor<Scalar> db = channel_slice(dbranch_cat, offset, k.branches[i].c);
      offset += k.branches[i].c;
      relu_backward_inplace(k.branches[i], db);
      de4.data += apply_backward(params_, branches_[i], k.e4, db, grads).data;
    }
    relu_backward_inplace(k.e4, de4);
    Tensor<Scalar> de3 = apply_backward(params_, enc4_, k.e3, de4, grads);
    relu_backward_inplace(k.e3, de3);
    de2.data += apply_backward(params_, enc3_, k.e2, de3, grads).data;
    relu_backward_inplace(k.e2, de2);
    de1.data += apply_backward(params_, enc2_, k.e1, de2, grads).data;
    relu_backward_inplace(k.e1, de1);
    return apply_backward(params_, enc1_, k.input, de1, grads, need_input_grad);
  }

  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }
  const ModelConfig& config() const { return config_; }
  std::size_t parameter_count() const { return params_.parameter_count(); }

  template <typename Other>
  SegNet<Other> cast() const {
    SegNet<Other> out;
    out.config_ = config_;
    out.params_ = params_.template cast<Other>();
    out.enc1_ = enc1_;
    out.enc2_ = enc2_;
    out.enc3_ = enc3_;
    out.enc4_ = enc4_;
    out.branches_ = branches_;
    out.project_ = project_;
    out.dec1_ = dec1_;
    out.dec2_ = dec2_;
    out.head_ = head_;
    return out;
  }

 private:
  template <typename>
  friend class SegNet;

  ModelConfig config_;
  ParamStore<Scalar> params_;
  ConvLayer enc1_, enc2_, enc3_, enc4_, project_, dec1_, dec2_, head_;
  std::vector<ConvLayer> branches_;
};

// Packs samples into a 3-channel batch.
template <typename Scalar>
Tensor<Scalar> to_batch(const std::vector<const ImageSample*>& samples) {
  if (samples.empty()) throw Error("to_batch: empty batch");
  const int h = samples[0]->height();
  const int w = samples[0]->width();
  Tensor<Scalar> batch(static_cast<int>(samples.size()), 3, h, w);
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    if (samples[b]->height() != h || samples[b]->width() != w) throw Error("to_batch: batch mixes resolutions");
    for (int c = 0; c < 3; ++c) {
      const Plane& p = samples[b]->pixels[static_cast<std::size_t>(c)];
      batch.data.row(c).segment(static_cast<Eigen::Index>(b) * plane, plane) =
          Eigen::Map<const Eigen::Matrix<float, 1, Eigen::Dynamic>>(p.data(), plane).template cast<Scalar>();
    }
  }
  return batch;
}

}  // namespace fsuda::nn
