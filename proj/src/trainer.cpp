#include "fsuda/train/trainer.hpp"

#include "fsuda/align/adversarial.hpp"
#include "fsuda/align/prototype.hpp"
#include "fsuda/core/random.hpp"
#include "fsuda/nn/losses.hpp"
#include "fsuda/nn/optim.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <variant>

namespace fsuda {

namespace {

using Clock = std::chrono::steady_clock;
using Tensor = nn::Tensor<float>;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Endless sequence of indices drawn from successive shuffled permutations.
class IndexStream {
 public:
  IndexStream(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed) {}

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    while (out.size() < count) {
      if (pos_ == order_.size()) {
        order_ = permutation(n_, rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng) {
  const auto order = permutation(n, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
  }
  return batches;
}

Tensor image_batch(const Dataset& data, const std::vector<std::size_t>& indices) {
  std::vector<const ImageSample*> samples;
  for (auto i : indices) samples.push_back(&data.image(i));
  return nn::to_batch<float>(samples);
}

std::vector<const LabelMap*> label_batch(const Dataset& data, const std::vector<std::size_t>& indices) {
  std::vector<const LabelMap*> labels;
  for (auto i : indices) labels.push_back(&data.label(i));
  return labels;
}

Tensor mask_targets(const PseudoLabelSet& set, const std::vector<std::size_t>& indices) {
  const auto& first = set.masks.at(indices.at(0))[0];
  const int h = static_cast<int>(first.rows());
  const int w = static_cast<int>(first.cols());
  Tensor t(static_cast<int>(indices.size()), 2, h, w);
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    for (int c = 0; c < 2; ++c) {
      const Mask& m = set.masks.at(indices[b])[static_cast<std::size_t>(c)];
      t.data.row(c).segment(static_cast<Eigen::Index>(b) * plane, plane) =
          Eigen::Map<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>(m.data(), plane).cast<float>();
    }
  }
  return t;
}

std::unordered_map<std::string, std::size_t> index_by_id(const Dataset& data) {
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < data.size(); ++i) ids.emplace(data.image(i).id, i);
  return ids;
}

std::vector<std::size_t> origin_indices(const Dataset& stylized, const std::vector<std::size_t>& indices,
                                        const std::unordered_map<std::string, std::size_t>& origins) {
  std::vector<std::size_t> out;
  for (auto i : indices) {
    const auto& sample = stylized.image(i);
    if (!sample.style) throw Error("stylized sample '" + sample.id + "' has no style tag");
    const auto it = origins.find(sample.style->origin_id);
    if (it == origins.end()) throw Error("stylized sample '" + sample.id + "' has no origin in the paired set");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::array<Mask, 2>> feature_masks(const std::vector<const LabelMap*>& labels, int h, int w) {
  std::vector<std::array<Mask, 2>> masks;
  for (const auto* label : labels) {
    masks.push_back({align::downsample_class_mask(*label, ClassId::kCup, h, w),
                     align::downsample_class_mask(*label, ClassId::kDisc, h, w)});
  }
  return masks;
}

class DiscOptimizer {
 public:
  DiscOptimizer(const std::string& kind, double lr) {
    if (kind == "adam") {
      impl_.emplace<nn::Adam<float>>(lr);
    } else {
      impl_.emplace<nn::Sgd<float>>(lr);
    }
  }
  void step(nn::ParamStore<float>& params, const nn::Gradients<float>& grads) {
    std::visit([&](auto& opt) { opt.step(params, grads); }, impl_);
  }

 private:
  std::variant<nn::Sgd<float>, nn::Adam<float>> impl_{std::in_place_index<0>, 0.0};
};

Tensor scaled(Tensor t, float s) {
  t.data *= s;
  return t;
}

std::string describe(const StepRecord& r) {
  std::ostringstream out;
  out << "epoch " << r.epoch << " step " << r.step << ": seg_source=" << r.seg_source << " seg_synth=" << r.seg_synth
      << " adv_d1=" << r.adv_d1 << " adv_d2=" << r.adv_d2 << " con=" << r.con << " total=" << r.total;
  return out.str();
}

void add_to(StepRecord& acc, const StepRecord& r) {
  acc.seg_source += r.seg_source;
  acc.seg_synth += r.seg_synth;
  acc.adv_d1 += r.adv_d1;
  acc.adv_d2 += r.adv_d2;
  acc.con += r.con;
  acc.total += r.total;
  acc.disc1 += r.disc1;
  acc.disc2 += r.disc2;
}

StepRecord mean_of(std::span<const StepRecord> steps, int epoch) {
  StepRecord m;
  for (const auto& r : steps) add_to(m, r);
  const double n = steps.empty() ? 1.0 : static_cast<double>(steps.size());
  m.seg_source /= n;
  m.seg_synth /= n;
  m.adv_d1 /= n;
  m.adv_d2 /= n;
  m.con /= n;
  m.total /= n;
  m.disc1 /= n;
  m.disc2 /= n;
  m.epoch = epoch;
  m.step = static_cast<int>(steps.size());
  return m;
}

bool validate_now(int epoch, int epochs, int eval_every) {
  return epoch + 1 == epochs || (eval_every > 0 && (epoch + 1) % eval_every == 0);
}

nlohmann::json to_json(const StepRecord& r) {
  return {{"epoch", r.epoch},   {"step", r.step},     {"seg_source", r.seg_source}, {"seg_synth", r.seg_synth},
          {"adv_d1", r.adv_d1}, {"adv_d2", r.adv_d2}, {"con", r.con},               {"total", r.total},
          {"disc1", r.disc1},   {"disc2", r.disc2}};
}

nlohmann::json to_json(const EvalResult& e) {
  return {{"dice_cup", e.dice_cup}, {"dice_disc", e.dice_disc}, {"dice_avg", e.dice_avg}, {"asd_cup", e.asd_cup},
          {"asd_disc", e.asd_disc}, {"asd_avg", e.asd_avg},     {"n_images", e.n_images}};
}

}  // namespace

EvalOptions eval_options_for(const RunConfig& config) {
  EvalOptions options;
  options.threshold = config.eval_threshold;
  options.asd.connectivity = config.boundary_connectivity == "8" ? Connectivity::kEight : Connectivity::kFour;
  return options;
}

double weighted_total(const StepRecord& r, double lambda_adv, double con_weight) {
  return r.seg_source + r.seg_synth + lambda_adv * (r.adv_d1 + r.adv_d2) + con_weight * r.con;
}

void write_report_jsonl(const std::filesystem::path& path, const StageReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : report.steps) {
    auto j = to_json(s);
    j["kind"] = "step";
    out << j.dump() << "\n";
  }
  for (const auto& e : report.epochs) {
    auto j = to_json(e.mean);
    j["kind"] = "epoch";
    j["wall_seconds"] = e.wall_seconds;
    if (e.validation) j["validation"] = to_json(*e.validation);
    out << j.dump() << "\n";
  }
  nlohmann::json summary = {{"kind", "summary"},
                            {"stage", report.stage},
                            {"lambda_adv", report.lambda_adv},
                            {"con_weight", report.con_weight},
                            {"epochs", report.epochs.size()},
                            {"steps", report.steps.size()},
                            {"wall_seconds", report.wall_seconds},
                            {"warnings", report.warnings}};
  if (report.validation) summary["validation"] = to_json(*report.validation);
  out << summary.dump() << "\n";
}

std::string format_report_summary(const StageReport& report) {
  std::ostringstream out;
  char line[200];
  out << report.stage << ": " << report.epochs.size() << " epochs, " << report.steps.size() << " steps, ";
  std::snprintf(line, sizeof line, "%.1f s\n", report.wall_seconds);
  out << line;
  std::snprintf(line, sizeof line, "%6s %10s %10s %9s %9s %9s %10s %9s\n", "epoch", "seg_src", "seg_synth", "adv_d1",
                "adv_d2", "con", "total", "val_dice");
  out << line;
  for (const auto& e : report.epochs) {
    const auto& m = e.mean;
    std::snprintf(line, sizeof line, "%6d %10.5f %10.5f %9.5f %9.5f %9.5f %10.5f", e.epoch + 1, m.seg_source,
                  m.seg_synth, m.adv_d1, m.adv_d2, m.con, m.total);
    out << line;
    if (e.validation) {
      std::snprintf(line, sizeof line, " %9.2f", e.validation->dice_avg);
      out << line;
    }
    out << "\n";
  }
  for (const auto& w : report.warnings) out << "warning: " << w << "\n";
  return out.str();
}

Stage1Result train_stage1(const Dataset& source, const Dataset& synth, const Dataset& target,
                          const RunConfig& config, const Dataset* validation) {
  config.validate();
  const auto& s1 = config.stage1;
  const bool use_synth = s1.use_synthesis;
  const bool use_adv = s1.use_adversarial && s1.lambda_adv != 0.0;
  const bool use_proto = use_synth && s1.use_prototype && s1.con_weight != 0.0;
  if (source.empty()) throw Error("train_stage1: empty source set");
  if (use_synth && synth.empty()) throw Error("train_stage1: synthesis enabled but no synthesized images");
  if (use_adv && target.empty()) throw Error("train_stage1: adversarial alignment needs target images");

  const auto start = Clock::now();
  Stage1Result result;
  result.model = SegModel(config.model, config.working_resolution, derive_seed(config.seed, 1));
  result.d1 = DiscModel("D1", 2, config.model.disc_channels, derive_seed(config.seed, 2));
  result.d2 = DiscModel("D2", 2, config.model.disc_channels, derive_seed(config.seed, 3));
  StageReport& report = result.report;
  report.stage = "stage1";
  report.lambda_adv = s1.lambda_adv;
  report.con_weight = s1.con_weight;

  SegModel& net = result.model;
  nn::Adam<float> seg_opt(s1.seg_lr);
  DiscOptimizer d1_opt(s1.disc_optimizer, s1.disc_lr), d2_opt(s1.disc_optimizer, s1.disc_lr);
  const auto norm = s1.prototype_norm == "area" ? align::PrototypeNorm::kArea : align::PrototypeNorm::kTotal;
  const auto lambda = static_cast<float>(s1.lambda_adv);
  const auto con_weight = static_cast<float>(s1.con_weight);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t expanded = source.size() * static_cast<std::size_t>(s1.n_betas * s1.k_groups);
  const std::size_t iterations = (expanded + batch - 1) / batch;

  Rng order_rng(derive_seed(config.seed, 11));
  IndexStream source_stream(source.size(), derive_seed(config.seed, 12));
  IndexStream target_stream(std::max<std::size_t>(target.size(), 1), derive_seed(config.seed, 13));
  const auto origins = index_by_id(source);

  for (int epoch = 0; epoch < s1.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const std::size_t first_step = report.steps.size();
    std::vector<std::vector<std::size_t>> synth_batches;
    if (use_synth) synth_batches = epoch_batches(synth.size(), batch, order_rng);
    const std::size_t steps = use_synth ? synth_batches.size() : iterations;

    for (std::size_t it = 0; it < steps; ++it) {
      StepRecord rec;
      rec.epoch = epoch;
      rec.step = static_cast<int>(it);
      auto grads = net.params().zeros_like();

      const auto src_idx = use_synth ? origin_indices(synth, synth_batches[it], origins) : source_stream.next(batch);
      const auto src_labels = label_batch(source, src_idx);
      const auto src_cache = net.forward(image_batch(source, src_idx));
      Tensor dlogits_src = src_cache.logits;
      rec.seg_source =
          nn::bce_with_logits(src_cache.logits.data, nn::label_targets<float>(src_labels).data, &dlogits_src.data);

      std::optional<SegModel::Cache> syn_cache;
      Tensor dlogits_syn;
      Tensor dfeat_src, dfeat_syn;
      if (use_synth) {
        const auto syn_labels = label_batch(synth, synth_batches[it]);
        syn_cache = net.forward(image_batch(synth, synth_batches[it]));
        dlogits_syn = syn_cache->logits;
        rec.seg_synth = nn::bce_with_logits(syn_cache->logits.data, nn::label_targets<float>(syn_labels).data,
                                            &dlogits_syn.data);
        if (use_proto) {
          const int fh = src_cache.feature.h;
          const int fw = src_cache.feature.w;
          const auto pool_src = align::batch_pooling<float>(feature_masks(src_labels, fh, fw), fh, fw, norm);
          const auto pool_syn = align::batch_pooling<float>(feature_masks(syn_labels, fh, fw), fh, fw, norm);
          const auto protos_src = align::pooled_prototypes(src_cache.feature.data, pool_src);
          const auto protos_syn = align::pooled_prototypes(syn_cache->feature.data, pool_syn);
          std::array<align::Vec<float>, 2> dsrc, dsyn;
          rec.con = align::consistency_loss(protos_src, protos_syn, static_cast<float>(s1.prototype_epsilon), &dsrc,
                                            &dsyn);
          for (auto& d : dsrc) d *= con_weight;
          for (auto& d : dsyn) d *= con_weight;
          const Eigen::Index channels = src_cache.feature.c;
          dfeat_src = src_cache.feature;
          dfeat_src.data = align::pooled_prototypes_backward(pool_src, dsrc, channels);
          dfeat_syn = syn_cache->feature;
          dfeat_syn.data = align::pooled_prototypes_backward(pool_syn, dsyn, channels);
        }
      }

      std::optional<SegModel::Cache> tgt_cache;
      Tensor tgt_maps;
      if (use_adv) {
        tgt_cache = net.forward(image_batch(target, target_stream.next(batch)));
        tgt_maps = align::self_information(tgt_cache->prob);
        std::vector<const DiscModel*> discs;
        if (use_synth) discs.push_back(&result.d1);
        discs.push_back(&result.d2);
        Tensor dmaps;
        std::vector<float> per_disc;
        align::generator_adv_loss<float>(discs, tgt_maps, &dmaps, &per_disc);
        if (use_synth) {
          rec.adv_d1 = per_disc[0];
          rec.adv_d2 = per_disc[1];
        } else {
          rec.adv_d2 = per_disc[0];
        }
        const Tensor dlogits_tgt = scaled(align::self_information_logit_grad(tgt_cache->prob, dmaps), lambda);
        net.backward(*tgt_cache, &dlogits_tgt, nullptr, grads);
      }

      rec.total = weighted_total(rec, s1.lambda_adv, s1.con_weight);
      net.backward(src_cache, &dlogits_src, use_proto ? &dfeat_src : nullptr, grads);
      if (syn_cache) net.backward(*syn_cache, &dlogits_syn, use_proto ? &dfeat_syn : nullptr, grads);
      if (!std::isfinite(rec.total) || !nn::all_finite(grads)) {
        throw Error("train_stage1: non-finite loss or gradient at " + describe(rec));
      }
      seg_opt.step(net.params(), grads);

      if (use_adv) {
        if (use_synth) {
          rec.disc1 = align::discriminator_step(result.d1, d1_opt, align::self_information(syn_cache->prob), tgt_maps)
                          .loss;
        }
        rec.disc2 =
            align::discriminator_step(result.d2, d2_opt, align::self_information(src_cache.prob), tgt_maps).loss;
      }
      report.steps.push_back(rec);
    }

    EpochRecord er;
    er.epoch = epoch;
    er.mean = mean_of(std::span(report.steps).subspan(first_step), epoch);
    if (validation && validate_now(epoch, s1.epochs, s1.eval_every)) {
      er.validation = evaluate(net, *validation, eval_options_for(config));
    }
    er.wall_seconds = seconds_since(epoch_start);
    report.epochs.push_back(std::move(er));
  }
  if (!report.epochs.empty()) report.validation = report.epochs.back().validation;
  if (!report.validation && validation) report.validation = evaluate(net, *validation, eval_options_for(config));
  report.wall_seconds = seconds_since(start);
  return result;
}

void train_supervised(SegModel& model, const Dataset& data, int epochs, double lr, int batch_size,
                      std::uint64_t seed) {
  if (data.empty()) throw Error("train_supervised: empty dataset");
  nn::Adam<float> opt(lr);
  Rng rng(seed);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& idx : epoch_batches(data.size(), static_cast<std::size_t>(batch_size), rng)) {
      auto grads = model.params().zeros_like();
      const auto cache = model.forward(image_batch(data, idx));
      Tensor dlogits = cache.logits;
      const float loss =
          nn::bce_with_logits(cache.logits.data, nn::label_targets<float>(label_batch(data, idx)).data, &dlogits.data);
      model.backward(cache, &dlogits, nullptr, grads);
      if (!std::isfinite(loss) || !nn::all_finite(grads)) throw Error("train_supervised: non-finite loss");
      opt.step(model.params(), grads);
    }
  }
}

std::size_t PseudoLabelSet::foreground_pixels() const {
  std::size_t total = 0;
  for (const auto& m : masks) total += static_cast<std::size_t>((m[0] != 0).count() + (m[1] != 0).count());
  return total;
}

std::array<Mask, 2> threshold_probabilities(const std::array<Plane, 2>& prob, double gamma) {
  const float g = static_cast<float>(gamma);
  return {(prob[0] >= g).cast<std::uint8_t>(), (prob[1] >= g).cast<std::uint8_t>()};
}

PseudoLabelSet generate_pseudo_labels(const SegModel& model, std::span<const ImageSample> images, double gamma,
                                      std::string source_model_tag, int batch_size) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error("generate_pseudo_labels: gamma must lie in (0, 1)");
  PseudoLabelSet set;
  set.gamma = gamma;
  set.source_model_tag = std::move(source_model_tag);
  const auto outputs = predict(model, images, batch_size);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    set.masks.push_back(threshold_probabilities(outputs[i].prob, gamma));
    set.ids.push_back(images[i].id);
  }
  return set;
}

PseudoLabelSet copy_pseudo_labels(std::span<const ImageSample> stylized, const PseudoLabelSet& origin) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < origin.ids.size(); ++i) by_id.emplace(origin.ids[i], i);
  PseudoLabelSet set;
  set.gamma = origin.gamma;
  set.source_model_tag = origin.source_model_tag;
  for (const auto& sample : stylized) {
    if (!sample.style) throw Error("copy_pseudo_labels: sample '" + sample.id + "' has no style tag");
    const auto it = by_id.find(sample.style->origin_id);
    if (it == by_id.end()) throw Error("copy_pseudo_labels: no pseudo label for origin '" + sample.style->origin_id + "'");
    set.masks.push_back(origin.masks[it->second]);
    set.ids.push_back(sample.id);
  }
  return set;
}

Stage2Result train_stage2(const SegModel& theta1, const Dataset& target, const PseudoLabelSet& target_labels,
                          const Dataset* t2s, const PseudoLabelSet* t2s_labels, const RunConfig& config,
                          const Dataset* validation) {
  config.validate();
  const auto& s2 = config.stage2;
  if (target.empty()) throw Error("train_stage2: empty target set");
  if (target_labels.size() != target.size()) throw Error("train_stage2: pseudo labels do not match the target set");
  if (t2s && (!t2s_labels || t2s_labels->size() != t2s->size())) {
    throw Error("train_stage2: pseudo labels do not match the stylized set");
  }
  const bool cross = t2s != nullptr && !t2s->empty();

  const auto start = Clock::now();
  Stage2Result result{theta1, {}};
  StageReport& report = result.report;
  report.stage = cross ? "stage2" : "stage2-plain";
  if (target_labels.foreground_pixels() == 0 && (!cross || t2s_labels->foreground_pixels() == 0)) {
    report.warnings.push_back("pseudo labels contain no foreground pixel; training toward all-background");
  }

  SegModel& net = result.model;
  nn::Adam<float> opt(s2.lr);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t expanded =
      cross ? t2s->size() : target.size() * static_cast<std::size_t>(s2.n_betas * s2.k_groups);
  const std::size_t iterations = (expanded + batch - 1) / batch;
  Rng order_rng(derive_seed(config.seed, 21));
  IndexStream target_stream(target.size(), derive_seed(config.seed, 22));
  const auto origins = index_by_id(target);

  for (int epoch = 0; epoch < s2.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const std::size_t first_step = report.steps.size();
    std::vector<std::vector<std::size_t>> style_batches;
    if (cross) style_batches = epoch_batches(t2s->size(), batch, order_rng);
    const std::size_t steps = cross ? style_batches.size() : iterations;
    for (std::size_t it = 0; it < steps; ++it) {
      StepRecord rec;
      rec.epoch = epoch;
      rec.step = static_cast<int>(it);
      auto grads = net.params().zeros_like();

      const auto tgt_idx = cross ? origin_indices(*t2s, style_batches[it], origins) : target_stream.next(batch);
      const auto tgt_cache = net.forward(image_batch(target, tgt_idx));
      Tensor dtgt = tgt_cache.logits;
      rec.seg_source =
          nn::bce_with_logits(tgt_cache.logits.data, mask_targets(target_labels, tgt_idx).data, &dtgt.data);
      net.backward(tgt_cache, &dtgt, nullptr, grads);
      if (cross) {
        const auto sty_cache = net.forward(image_batch(*t2s, style_batches[it]));
        Tensor dsty = sty_cache.logits;
        rec.seg_synth = nn::bce_with_logits(sty_cache.logits.data, mask_targets(*t2s_labels, style_batches[it]).data,
                                            &dsty.data);
        net.backward(sty_cache, &dsty, nullptr, grads);
      }
      rec.total = rec.seg_source + rec.seg_synth;
      if (!std::isfinite(rec.total) || !nn::all_finite(grads)) {
        throw Error("train_stage2: non-finite loss or gradient at " + describe(rec));
      }
      opt.step(net.params(), grads);
      report.steps.push_back(rec);
    }
    EpochRecord er;
    er.epoch = epoch;
    er.mean = mean_of(std::span(report.steps).subspan(first_step), epoch);
    if (validation && validate_now(epoch, s2.epochs, 0)) {
      er.validation = evaluate(net, *validation, eval_options_for(config));
    }
    er.wall_seconds = seconds_since(epoch_start);
    report.epochs.push_back(std::move(er));
  }
  if (!report.epochs.empty()) report.validation = report.epochs.back().validation;
  report.wall_seconds = seconds_since(start);
  return result;
}

}  // namespace fsuda
