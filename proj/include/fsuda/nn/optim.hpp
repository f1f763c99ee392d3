#pragma once

#include "fsuda/nn/params.hpp"

#include <cmath>

namespace fsuda::nn {

template <typename Scalar>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore<Scalar>& params, const Gradients<Scalar>& grads) {
    if (m_.empty()) {
      m_ = params.zeros_like();
      v_ = params.zeros_like();
    }
    ++t_;
    const Scalar b1 = static_cast<Scalar>(beta1_);
    const Scalar b2 = static_cast<Scalar>(beta2_);
    const Scalar correction1 = static_cast<Scalar>(1.0 - std::pow(beta1_, t_));
    const Scalar correction2 = static_cast<Scalar>(1.0 - std::pow(beta2_, t_));
    const Scalar lr = static_cast<Scalar>(lr_);
    const Scalar eps = static_cast<Scalar>(eps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1 - b1) * grads[i];
      v_[i] = b2 * v_[i] + (1 - b2) * grads[i].cwiseAbs2();
      params.entries[i].value.array() -=
          lr * (m_[i].array() / correction1) / ((v_[i].array() / correction2).sqrt() + eps);
    }
  }

  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  Gradients<Scalar> m_, v_;
};

// Plain stochastic gradient descent without momentum.
template <typename Scalar>
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}

  void step(ParamStore<Scalar>& params, const Gradients<Scalar>& grads) {
    const Scalar lr = static_cast<Scalar>(lr_);
    for (std::size_t i = 0; i < params.size(); ++i) params.entries[i].value -= lr * grads[i];
  }

  double learning_rate() const { return lr_; }

 private:
  double lr_;
};

}  // namespace fsuda::nn
