#include "temp_dir.hpp"

#include "fsuda/core/config.hpp"
#include "fsuda/core/dataset.hpp"
#include "fsuda/core/random.hpp"
#include "fsuda/core/synthetic.hpp"
#include "fsuda/nn/model.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace fsuda;
namespace fs = std::filesystem;

namespace {

std::vector<ImageSample> synth(const StyleParams& style, int count, std::uint64_t seed, int res = 32,
                               const std::string& prefix = "img") {
  SyntheticOptions o;
  o.resolution = res;
  o.id_prefix = prefix;
  return gen_synthetic_domain(style, count, seed, o);
}

bool same_pixels(const ImageSample& a, const ImageSample& b) {
  for (int c = 0; c < 3; ++c) {
    if (!(a.pixels[c] == b.pixels[c]).all()) return false;
  }
  return true;
}

}  // namespace

TEST(Random, DerivedStreamsAreDeterministicAndDistinct) {
  EXPECT_EQ(derive_seed(5, 1), derive_seed(5, 1));
  EXPECT_NE(derive_seed(5, 1), derive_seed(5, 2));
  EXPECT_NE(derive_seed(5, 1), derive_seed(6, 1));
  Rng a(3), b(3);
  EXPECT_EQ(permutation(20, a), permutation(20, b));
}

TEST(Synthetic, SeededRunsAreBitwiseIdentical) {
  const auto a = synth(StyleParams::source_default(), 10, 1);
  const auto b = synth(StyleParams::source_default(), 10, 1);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(same_pixels(a[i], b[i]));
    EXPECT_TRUE((a[i].label->labels == b[i].label->labels).all());
    EXPECT_EQ(a[i].id, b[i].id);
  }
}

TEST(Synthetic, CupLiesInsideDiscAndPixelsInRange) {
  for (const auto& s : synth(StyleParams::target_default(), 20, 9, 64)) {
    EXPECT_NO_THROW(validate(s));
    const Mask cup = s.label->cup_mask(), disc = s.label->disc_mask();
    EXPECT_FALSE(((cup != 0) && (disc == 0)).any());
    EXPECT_GT((cup != 0).count(), 0);
    EXPECT_GT((disc != 0).count(), (cup != 0).count());
  }
}

TEST(Synthetic, TargetStyleIsBrighterThanSource) {
  const double src = mean_intensity(synth(StyleParams::source_default(), 10, 1));
  const double tgt = mean_intensity(synth(StyleParams::target_default(), 60, 2));
  EXPECT_GT(tgt - src, 0.05);
}

TEST(LabelMap, FromMasksPutsStrayCupIntoDisc) {
  Mask cup = Mask::Zero(2, 2), disc = Mask::Zero(2, 2);
  cup(0, 0) = 1;
  disc(0, 1) = 1;
  const auto label = LabelMap::from_masks(cup, disc);
  EXPECT_EQ(label.labels(0, 0), 2);
  EXPECT_EQ(label.labels(0, 1), 1);
  EXPECT_EQ(label.labels(1, 1), 0);
}

TEST(Dataset, CountsEveryLabelRead) {
  Dataset data(synth(StyleParams::source_default(), 4, 1));
  EXPECT_EQ(data.label_reads(), 0u);
  EXPECT_FALSE(data.image(0).label.has_value());
  (void)data.label(1);
  (void)data.labeled_sample(2);
  EXPECT_EQ(data.label_reads(), 2u);
  Dataset copy = data;
  (void)copy.label(0);
  EXPECT_EQ(data.label_reads(), 3u);
}

TEST(Dataset, UnlabeledAccessThrows) {
  auto samples = synth(StyleParams::source_default(), 2, 1);
  samples[1].label.reset();
  Dataset data(samples);
  EXPECT_FALSE(data.fully_labeled());
  EXPECT_THROW((void)data.label(1), Error);
}

TEST(Dataset, SaveLoadRoundTrip) {
  fsuda::testing::TempDir dir("dataset");
  const auto samples = synth(StyleParams::source_default(), 5, 4, 32, "s");
  save_dataset(dir.path(), samples);
  LoadOptions lo;
  lo.resolution = 32;
  lo.few_shot = 0;
  const auto loaded = load_dataset(dir.path(), Split::kSource, lo);
  ASSERT_EQ(loaded.size(), samples.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].id, samples[i].id);
    ASSERT_TRUE(loaded[i].label.has_value());
    EXPECT_TRUE((loaded[i].label->labels == samples[i].label->labels).all());
    for (int c = 0; c < 3; ++c) EXPECT_LE((loaded[i].pixels[c] - samples[i].pixels[c]).abs().maxCoeff(), 1.0f / 255);
  }
}

TEST(Dataset, FewShotSelectionIsSeededAndSized) {
  fsuda::testing::TempDir dir("fewshot");
  save_dataset(dir.path(), synth(StyleParams::source_default(), 40, 2, 16));
  LoadOptions lo;
  lo.resolution = 16;
  lo.few_shot = 10;
  lo.seed = 7;
  const auto a = load_dataset(dir.path(), Split::kSource, lo);
  const auto b = load_dataset(dir.path(), Split::kSource, lo);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].id, b[i].id);
  EXPECT_EQ(few_shot_indices(400, 10, 7).size(), 10u);
  EXPECT_EQ(few_shot_indices(400, 10, 7), few_shot_indices(400, 10, 7));
}

TEST(Dataset, EmptyDirectoryIsAnError) {
  fsuda::testing::TempDir dir("empty");
  fs::create_directories(dir.path() / "images");
  try {
    load_dataset(dir.path(), Split::kTarget, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no images found"), std::string::npos);
  }
}

TEST(Dataset, TargetWithoutMasksIsUnlabeled) {
  fsuda::testing::TempDir dir("nomask");
  save_dataset(dir.path(), synth(StyleParams::target_default(), 3, 2, 16));
  fs::remove_all(dir.path() / "masks");
  LoadOptions lo;
  lo.resolution = 16;
  for (const auto& s : load_dataset(dir.path(), Split::kTarget, lo)) EXPECT_FALSE(s.label.has_value());
}

TEST(Dataset, ResizeKeepsLabelAlphabet) {
  const auto s = synth(StyleParams::source_default(), 1, 3, 64)[0];
  const auto r = resize_sample(s, 24);
  EXPECT_EQ(r.height(), 24);
  EXPECT_TRUE(((r.label->labels == 0) || (r.label->labels == 1) || (r.label->labels == 2)).all());
}

TEST(Config, PresetsValidateAndDiffer) {
  EXPECT_NO_THROW(RunConfig::paper().validate());
  EXPECT_NO_THROW(RunConfig::desk().validate());
  EXPECT_EQ(RunConfig::paper().stage1.lambda_adv, 0.5);
  EXPECT_EQ(RunConfig::paper().stage1.epochs, 200);
  EXPECT_EQ(RunConfig::paper().stage1.n_betas, 3);
  EXPECT_EQ(RunConfig::paper().stage1.k_groups, 5);
  EXPECT_EQ(RunConfig::paper().stage2.k_groups, 1);
  EXPECT_EQ(RunConfig::desk().working_resolution, 64);
  EXPECT_THROW(RunConfig::from_preset("nope"), Error);
}

TEST(Config, FieldsRoundTripThroughYaml) {
  RunConfig c = RunConfig::desk();
  set_field(c, "stage1.lambda_adv", "0.25");
  set_field(c, "model.atrous_rates", "1,2,3");
  set_field(c, "stage2.cross_style", "false");
  set_field(c, "seed", "42");
  EXPECT_EQ(get_field(c, "stage1.lambda_adv"), get_field(c, "stage1.lambda_adv"));
  RunConfig back = RunConfig::paper();
  merge_config_text(back, dump_config(c));
  for (auto& field : config_fields(c)) EXPECT_EQ(get_field(back, field.key), get_field(c, field.key)) << field.key;
  EXPECT_EQ(back.model.atrous_rates, (std::vector<int>{1, 2, 3}));
  EXPECT_FALSE(back.stage2.cross_style);
}

TEST(Config, PartialFileKeepsOtherValues) {
  fsuda::testing::TempDir dir("config");
  std::ofstream(dir.path() / "c.yaml") << "stage1:\n  epochs: 3\nstage2:\n  gamma: 0.8\n";
  RunConfig c = RunConfig::desk();
  load_config_file(c, dir.path() / "c.yaml");
  EXPECT_EQ(c.stage1.epochs, 3);
  EXPECT_EQ(c.stage2.gamma, 0.8);
  EXPECT_EQ(c.stage1.k_groups, RunConfig::desk().stage1.k_groups);
}

TEST(Config, RejectsBadInput) {
  RunConfig c;
  EXPECT_THROW(set_field(c, "no.such.key", "1"), Error);
  EXPECT_THROW(set_field(c, "stage1.epochs", "ten"), Error);
  EXPECT_THROW(set_field(c, "stage2.cross_style", "maybe"), Error);
  c.stage2.gamma = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig();
  c.stage1.disc_optimizer = "rmsprop";
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(merge_config_text(c, "- a\n- b\n"), Error);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  fsuda::testing::TempDir dir("ckpt");
  Checkpoint ck;
  ck.stage_tag = "stage1";
  ck.config_yaml = dump_config(RunConfig::desk());
  ck.model = SegModel(RunConfig::desk().model, 64, 11);
  ck.d1 = DiscModel("D1", 2, 8, 12);
  save_checkpoint(dir.path() / "m.ckpt", ck);
  const auto back = load_checkpoint(dir.path() / "m.ckpt");
  EXPECT_EQ(back.stage_tag, "stage1");
  EXPECT_EQ(back.config_yaml, ck.config_yaml);
  EXPECT_EQ(back.model.params().checksum(), ck.model.params().checksum());
  ASSERT_TRUE(back.d1.has_value());
  EXPECT_EQ(back.d1->params().checksum(), ck.d1->params().checksum());
  EXPECT_FALSE(back.d2.has_value());
  EXPECT_EQ(file_digest(dir.path() / "m.ckpt"), file_digest(dir.path() / "m.ckpt"));

  std::ofstream(dir.path() / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir.path() / "junk.ckpt"), Error);
}

TEST(SegNet, OutputShapeRangeAndBatchIndependence) {
  const SegModel model(RunConfig::desk().model, 32, 5);
  auto images = synth(StyleParams::source_default(), 2, 5);
  images[1] = images[0];
  const auto out = predict(model, images);
  ASSERT_EQ(out.size(), 2u);
  for (const auto& o : out) {
    for (const auto& p : o.prob) {
      EXPECT_EQ(p.rows(), 32);
      EXPECT_GE(p.minCoeff(), 0.0f);
      EXPECT_LE(p.maxCoeff(), 1.0f);
    }
  }
  EXPECT_TRUE((out[0].prob[0] == out[1].prob[0]).all());
  EXPECT_THROW(SegModel(RunConfig::desk().model, 36, 5), Error);
}

TEST(SegLoss, AnalyticValuesAndLoopOracle) {
  const auto s = synth(StyleParams::source_default(), 1, 8)[0];
  SegmentationOutput out;
  out.prob = {s.label->cup_mask().cast<float>(), s.label->disc_mask().cast<float>()};
  EXPECT_LE(seg_loss(out, *s.label), 1e-6 + 1e-7);
  out.prob = {Plane::Constant(32, 32, 0.5f), Plane::Constant(32, 32, 0.5f)};
  EXPECT_NEAR(seg_loss(out, *s.label), std::log(2.0), 1e-6);

  Rng rng(4);
  for (auto& p : out.prob) {
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<float>(uniform01(rng));
  }
  double sum = 0;
  for (int c = 0; c < 2; ++c) {
    const Mask t = c == 0 ? s.label->cup_mask() : s.label->disc_mask();
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double p = std::clamp<double>(out.prob[c].data()[i], 1e-7, 1 - 1e-7);
      sum += t.data()[i] ? -std::log(p) : -std::log(1 - p);
    }
  }
  EXPECT_NEAR(seg_loss(out, *s.label), sum / (2.0 * 32 * 32), 1e-6);
}
