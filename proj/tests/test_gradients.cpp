#include "criteria.hpp"

#include "fsuda/align/adversarial.hpp"
#include "fsuda/nn/model.hpp"

#include <gtest/gtest.h>

using namespace fsuda;

TEST(Gradients, Suite) {
  const auto o = criteria::gradient_suite();
  EXPECT_TRUE(o.pass) << o.detail;
}

TEST(SelfInformation, AnalyticValues) {
  std::array<Plane, 2> prob = {Plane::Constant(2, 2, 1.0f), Plane::Constant(2, 2, 0.5f)};
  prob[0](0, 0) = 0.0f;
  const auto info = align::self_information(prob);
  EXPECT_TRUE((info.values[0] == 0.0f).all());
  EXPECT_NEAR(info.values[1](1, 1), 0.5 * std::log(2.0), 1e-7);
}

TEST(Discriminator, ConstantZeroLogitsGiveLnTwoPerTerm) {
  nn::Discriminator<double> d("d", 2, 4, 1);
  for (auto& e : d.params().entries) e.value.setZero();
  const nn::Tensor<double> maps(2, 2, 16, 16);
  const std::array<const nn::Discriminator<double>*, 2> two = {&d, &d};
  EXPECT_NEAR(align::generator_adv_loss<double>(two, maps), 2 * std::log(2.0), 1e-12);

  nn::Sgd<double> sgd(0.0);
  const auto step = align::discriminator_step(d, sgd, maps, maps);
  EXPECT_NEAR(step.loss_real, std::log(2.0), 1e-12);
  EXPECT_NEAR(step.loss_fake, std::log(2.0), 1e-12);
}

TEST(Discriminator, SaturatedSeparationHasTinyLoss) {
  nn::Discriminator<double> d("d", 2, 4, 1);
  for (auto& e : d.params().entries) e.value.setZero();
  d.params().entries.back().value.setConstant(20.0);  // classifier bias
  nn::Tensor<double> real(1, 2, 16, 16);
  const std::array<const nn::Discriminator<double>*, 1> one = {&d};
  EXPECT_LE(align::generator_adv_loss<double>(one, real), 1e-3);
}

TEST(Discriminator, StepTouchesOnlyDiscriminatorParameters) {
  const SegModel seg(ModelConfig{}, 32, 3);
  DiscModel d("D", 2, 8, 4);
  const auto seg_before = seg.params().checksum();
  const auto d_before = d.params().checksum();
  nn::Tensor<float> real(2, 2, 32, 32), fake(2, 2, 32, 32);
  real.data.setConstant(0.3f);
  fake.data.setConstant(0.1f);
  nn::Adam<float> opt(1e-3);
  align::discriminator_step(d, opt, real, fake);
  EXPECT_EQ(seg.params().checksum(), seg_before);
  EXPECT_NE(d.params().checksum(), d_before);

  const auto d_after = d.params().checksum();
  const std::array<const DiscModel*, 1> ds = {&d};
  nn::Tensor<float> dmaps;
  align::generator_adv_loss<float>(ds, fake, &dmaps);
  EXPECT_EQ(d.params().checksum(), d_after);
}

TEST(Discriminator, NonFiniteLossThrowsWithoutUpdate) {
  DiscModel d("D", 2, 8, 4);
  const auto before = d.params().checksum();
  nn::Tensor<float> real(1, 2, 16, 16), fake(1, 2, 16, 16);
  real.data(0, 0) = std::numeric_limits<float>::infinity();
  nn::Adam<float> opt(1e-3);
  EXPECT_THROW(align::discriminator_step(d, opt, real, fake), Error);
  EXPECT_EQ(d.params().checksum(), before);
}
