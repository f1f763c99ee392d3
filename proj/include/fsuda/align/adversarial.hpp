#pragma once

#include "fsuda/nn/discriminator.hpp"
#include "fsuda/nn/losses.hpp"
#include "fsuda/nn/optim.hpp"

#include <array>
#include <cmath>
#include <span>

namespace fsuda::align {

// Weighted self-information -p * ln(p), with 0 * ln(0) = 0.
template <typename Scalar>
nn::Tensor<Scalar> self_information(const nn::Tensor<Scalar>& prob) {
  nn::Tensor<Scalar> info = prob;
  const auto p = prob.data.array().max(Scalar(0)).min(Scalar(1));
  info.data = (p > Scalar(0)).select(-p * p.max(std::numeric_limits<Scalar>::min()).log(), Scalar(0)).matrix();
  return info;
}

// Chain rule through the map and the sigmoid: maps dL/dI to dL/dlogits.
// d(-p ln p)/dp = -(ln p + 1), with p floored at 1e-7; dp/dz = p (1 - p).
template <typename Scalar>
nn::Tensor<Scalar> self_information_logit_grad(const nn::Tensor<Scalar>& prob, const nn::Tensor<Scalar>& dinfo) {
  nn::Tensor<Scalar> d = dinfo;
  const auto p = prob.data.array().max(Scalar(nn::kProbClamp)).min(Scalar(1));
  d.data = (dinfo.data.array() * -(p.log() + Scalar(1)) * p * (Scalar(1) - p)).matrix();
  return d;
}

struct SelfInfoMap {
  std::array<Plane, 2> values;
};

SelfInfoMap self_information(const std::array<Plane, 2>& prob);

template <typename Scalar>
struct DiscStepResult {
  Scalar loss = 0;
  Scalar loss_real = 0;
  Scalar loss_fake = 0;
};

// One update of D: BCE toward 1 on `real_maps` (synthesized or source) plus
// BCE toward 0 on `fake_maps` (target), each averaged over its batch and
// patches. Throws without updating when the loss is not finite.
template <typename Scalar, typename Optimizer>
DiscStepResult<Scalar> discriminator_step(nn::Discriminator<Scalar>& disc, Optimizer& optimizer,
                                          const nn::Tensor<Scalar>& real_maps, const nn::Tensor<Scalar>& fake_maps) {
  if (real_maps.n == 0 || fake_maps.n == 0) throw Error("discriminator_step: empty batch");
  auto grads = disc.params().zeros_like();
  DiscStepResult<Scalar> result;

  const auto real = disc.forward(real_maps);
  nn::Tensor<Scalar> dreal = real.logits;
  result.loss_real = nn::bce_with_logits(real.logits.data, nn::Matrix<Scalar>::Ones(1, real.logits.data.cols()).eval(),
                                         &dreal.data);
  const auto fake = disc.forward(fake_maps);
  nn::Tensor<Scalar> dfake = fake.logits;
  result.loss_fake = nn::bce_with_logits(fake.logits.data, nn::Matrix<Scalar>::Zero(1, fake.logits.data.cols()).eval(),
                                         &dfake.data);
  result.loss = result.loss_real + result.loss_fake;
  if (!std::isfinite(static_cast<double>(result.loss))) throw Error("discriminator_step: non-finite loss");

  disc.backward(real, dreal, grads, false);
  disc.backward(fake, dfake, grads, false);
  optimizer.step(disc.params(), grads);
  return result;
}

// Sum over discriminators of BCE toward 1 on the target maps. Discriminator
// parameters are read only; when `dmaps` is given it receives dL/dmaps.
template <typename Scalar>
Scalar generator_adv_loss(std::span<const nn::Discriminator<Scalar>* const> discriminators,
                          const nn::Tensor<Scalar>& target_maps, nn::Tensor<Scalar>* dmaps = nullptr,
                          std::vector<Scalar>* per_discriminator = nullptr) {
  Scalar total = 0;
  if (dmaps) *dmaps = nn::Tensor<Scalar>(target_maps.n, target_maps.c, target_maps.h, target_maps.w);
  for (const auto* disc : discriminators) {
    const auto cache = disc->forward(target_maps);
    nn::Tensor<Scalar> dlogits = cache.logits;
    const Scalar loss = nn::bce_with_logits(
        cache.logits.data, nn::Matrix<Scalar>::Ones(1, cache.logits.data.cols()).eval(), dmaps ? &dlogits.data : nullptr);
    if (per_discriminator) per_discriminator->push_back(loss);
    total += loss;
    if (dmaps) {
      auto scratch = disc->params().zeros_like();
      dmaps->data += disc->backward(cache, dlogits, scratch, true).data;
    }
  }
  return total;
}

}  // namespace fsuda::align
