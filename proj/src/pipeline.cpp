#include "fsuda/pipeline/pipeline.hpp"

#include "fsuda/core/random.hpp"
#include "fsuda/core/synthetic.hpp"
#include "fsuda/fourier/stylizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fsuda {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kSampleMagic[8] = {'F', 'S', 'U', 'D', 'A', 'S', 'M', 'P'};
constexpr char kPseudoMagic[8] = {'F', 'S', 'U', 'D', 'A', 'P', 'S', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("artifact truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  std::string s(get<std::uint32_t>(in), '\0');
  in.read(s.data(), static_cast<std::streamsize>(s.size()));
  if (!in) throw Error("artifact truncated");
  return s;
}

void put_mask(std::ostream& out, const Mask& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size()));
}

Mask get_mask(std::istream& in, int h, int w) {
  Mask m(h, w);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size()));
  if (!in) throw Error("artifact truncated");
  return m;
}

void check_magic(std::istream& in, const char (&magic)[8], const fs::path& path) {
  char buf[8];
  in.read(buf, sizeof buf);
  if (!in || !std::equal(buf, buf + 8, magic)) throw Error(path.string() + " has the wrong file type");
  const auto version = get<std::uint32_t>(in);
  if (version != kFormatVersion) throw Error(path.string() + ": unsupported version " + std::to_string(version));
}

void write_samples(std::ostream& out, std::span<const ImageSample> samples) {
  out.write(kSampleMagic, sizeof kSampleMagic);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    put_string(out, s.id);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.domain));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.height()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.width()));
    for (const auto& p : s.pixels) {
      out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(float)));
    }
    put<std::uint8_t>(out, s.label ? 1 : 0);
    if (s.label) put_mask(out, s.label->labels);
    put<std::uint8_t>(out, s.style ? 1 : 0);
    if (s.style) {
      put_string(out, s.style->origin_id);
      put<double>(out, s.style->beta);
      put<std::int32_t>(out, s.style->group_index);
    }
  }
}

void write_atomically(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << bytes;
    if (!out) throw Error("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

std::string short_hash(const std::string& text) { return bytes_digest(text).substr(0, 12); }

// "key=value;" for every config field under one of the prefixes.
std::string key_text(const RunConfig& config, std::initializer_list<std::string_view> prefixes) {
  RunConfig copy = config;
  std::string out;
  for (const auto& field : config_fields(copy)) {
    for (auto p : prefixes) {
      if (field.key.starts_with(p)) {
        out += field.key + "=" + get_field(config, field.key) + ";";
        break;
      }
    }
  }
  return out;
}

std::string betas_text(std::span<const double> betas) {
  std::ostringstream out;
  out.precision(17);
  for (double b : betas) out << b << ",";
  return out.str();
}

std::vector<ImageSample> strip_labels(std::vector<ImageSample> samples) {
  for (auto& s : samples) s.label.reset();
  return samples;
}

json eval_json(const EvalResult& e, bool per_image) {
  json j = {{"dice_cup", e.dice_cup}, {"dice_disc", e.dice_disc}, {"dice_avg", e.dice_avg},
            {"asd_cup", e.asd_cup},   {"asd_disc", e.asd_disc},   {"asd_avg", e.asd_avg},
            {"n_images", e.n_images}};
  if (per_image) {
    json rows = json::array();
    for (const auto& p : e.per_image) {
      rows.push_back({{"id", p.id},
                      {"dice_cup", p.dice_cup},
                      {"dice_disc", p.dice_disc},
                      {"asd_cup", p.asd_cup},
                      {"asd_disc", p.asd_disc},
                      {"cup_both_empty", p.cup_both_empty},
                      {"disc_both_empty", p.disc_both_empty},
                      {"cup_asd_penalty", p.cup_asd_penalty},
                      {"disc_asd_penalty", p.disc_asd_penalty}});
    }
    j["per_image"] = rows;
  }
  return j;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void save_samples(const fs::path& path, std::span<const ImageSample> samples) {
  std::ostringstream out(std::ios::binary);
  write_samples(out, samples);
  write_atomically(path, out.str());
}

std::vector<ImageSample> load_samples(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  check_magic(in, kSampleMagic, path);
  const auto count = get<std::uint32_t>(in);
  std::vector<ImageSample> samples;
  samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ImageSample s;
    s.id = get_string(in);
    s.domain = static_cast<Domain>(get<std::uint32_t>(in));
    const int h = static_cast<int>(get<std::uint32_t>(in));
    const int w = static_cast<int>(get<std::uint32_t>(in));
    for (auto& p : s.pixels) {
      p.resize(h, w);
      in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(float)));
    }
    if (get<std::uint8_t>(in)) s.label = LabelMap{get_mask(in, h, w)};
    if (get<std::uint8_t>(in)) {
      StyleTag tag;
      tag.origin_id = get_string(in);
      tag.beta = get<double>(in);
      tag.group_index = get<std::int32_t>(in);
      s.style = tag;
    }
    if (!in) throw Error("artifact truncated: " + path.string());
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_pseudo_labels(const fs::path& path, const PseudoLabelSet& set) {
  std::ostringstream out(std::ios::binary);
  out.write(kPseudoMagic, sizeof kPseudoMagic);
  put<std::uint32_t>(out, kFormatVersion);
  put<double>(out, set.gamma);
  put_string(out, set.source_model_tag);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    put_string(out, set.ids[i]);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(set.masks[i][0].rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(set.masks[i][0].cols()));
    put_mask(out, set.masks[i][0]);
    put_mask(out, set.masks[i][1]);
  }
  write_atomically(path, out.str());
}

PseudoLabelSet load_pseudo_labels(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  check_magic(in, kPseudoMagic, path);
  PseudoLabelSet set;
  set.gamma = get<double>(in);
  set.source_model_tag = get_string(in);
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    set.ids.push_back(get_string(in));
    const int h = static_cast<int>(get<std::uint32_t>(in));
    const int w = static_cast<int>(get<std::uint32_t>(in));
    Mask cup = get_mask(in, h, w);
    Mask disc = get_mask(in, h, w);
    set.masks.push_back({std::move(cup), std::move(disc)});
  }
  return set;
}

std::string samples_digest(std::span<const ImageSample> samples) {
  std::ostringstream out(std::ios::binary);
  write_samples(out, samples);
  return bytes_digest(out.str());
}

DomainData load_domains(const RunConfig& config) {
  DomainData data;
  const auto& d = config.data;
  if (!d.source_dir.empty() || !d.target_dir.empty()) {
    if (d.source_dir.empty() || d.target_dir.empty()) {
      throw Error("data.source_dir and data.target_dir must be given together");
    }
    LoadOptions options;
    options.resolution = config.working_resolution;
    options.few_shot = d.few_shot;
    options.seed = config.seed;
    options.center_crop = d.center_crop;
    options.normalize = d.normalize;
    data.source = load_dataset(d.source_dir, Split::kSource, options);
    data.target_train = strip_labels(load_dataset(d.target_dir, Split::kTarget, options));
    data.target_test = load_dataset(d.test_dir.empty() ? d.target_dir : d.test_dir, Split::kTest, options);
    return data;
  }
  SyntheticOptions options;
  options.resolution = config.working_resolution;
  options.domain = Domain::kSource;
  options.id_prefix = "src";
  data.source = gen_synthetic_domain(StyleParams::source_default(), d.few_shot, derive_seed(config.seed, 100), options);
  options.domain = Domain::kTarget;
  options.id_prefix = "tgt";
  data.target_train = strip_labels(
      gen_synthetic_domain(StyleParams::target_default(), d.target_train, derive_seed(config.seed, 101), options));
  options.id_prefix = "test";
  data.target_test =
      gen_synthetic_domain(StyleParams::target_default(), d.target_test, derive_seed(config.seed, 102), options);
  return data;
}

std::vector<ImageSample> stylize_source_to_target(std::span<const ImageSample> source,
                                                  std::span<const ImageSample> target, std::span<const double> betas,
                                                  const RunConfig& config) {
  const int k = std::min<int>(config.stage1.k_groups, static_cast<int>(target.size()));
  const auto groups = average_amplitude(target, k, derive_seed(config.seed, 50));
  return expand_dataset(source, betas, groups, BandOptions{config.swap_dc});
}

std::vector<ImageSample> stylize_target_to_source(std::span<const ImageSample> target,
                                                  std::span<const ImageSample> source, std::span<const double> betas,
                                                  const RunConfig& config) {
  const int k = std::min<int>(config.stage2.k_groups, static_cast<int>(source.size()));
  const auto groups = average_amplitude(source, k, derive_seed(config.seed, 51));
  return expand_dataset(target, betas, groups, BandOptions{config.swap_dc});
}

SearchResult run_beta_search(const Dataset& source, std::span<const ImageSample> target, const RunConfig& config) {
  const auto& sc = config.search;
  const auto folds = split_folds(source.size(), target.size(), sc.folds, derive_seed(config.seed, 31));
  const auto source_samples = source.labeled_samples();
  auto pick = [](std::span<const ImageSample> all, const std::vector<std::size_t>& idx) {
    std::vector<ImageSample> out;
    for (auto i : idx) out.push_back(all[i]);
    return out;
  };

  struct FoldState {
    std::vector<ImageSample> train, val;
    std::vector<AmplitudeGroup> train_groups, val_groups;
    SegModel warm, current;
  };
  std::vector<FoldState> state(folds.size());
  const BandOptions band{config.swap_dc};
  for (std::size_t f = 0; f < folds.size(); ++f) {
    auto& s = state[f];
    s.train = pick(source_samples, folds[f].source_train);
    s.val = pick(source_samples, folds[f].source_val);
    const auto tgt_train = pick(target, folds[f].target_train);
    const auto tgt_val = pick(target, folds[f].target_val);
    s.train_groups = average_amplitude(tgt_train, std::min<int>(sc.k_groups, static_cast<int>(tgt_train.size())),
                                       derive_seed(config.seed, 40 + f));
    s.val_groups = average_amplitude(tgt_val, std::min<int>(sc.k_groups, static_cast<int>(tgt_val.size())),
                                     derive_seed(config.seed, 60 + f));
    s.warm = SegModel(config.model, config.working_resolution, derive_seed(config.seed, 200 + f));
    train_supervised(s.warm, Dataset(s.train), sc.warm_epochs, sc.lr, config.batch_size,
                     derive_seed(config.seed, 300 + f));
  }

  const auto eval = eval_options_for(config);
  TrainerHook trainer = [&](int fold, double beta) {
    auto& s = state[static_cast<std::size_t>(fold)];
    const double betas[] = {beta};
    s.current = s.warm;
    train_supervised(s.current, Dataset(expand_dataset(s.train, betas, s.train_groups, band)), sc.finetune_epochs,
                     sc.lr, config.batch_size, derive_seed(config.seed, 400 + static_cast<std::uint64_t>(fold)));
  };
  EvaluatorHook evaluator = [&](int fold, double beta) {
    auto& s = state[static_cast<std::size_t>(fold)];
    const double betas[] = {beta};
    const Dataset val(expand_dataset(s.val, betas, s.val_groups, band));
    return evaluate(s.current, val, eval).dice_avg / 100.0;
  };
  SearchOptions options;
  options.trials_per_fold = sc.trials_per_fold;
  options.n_betas = config.stage1.n_betas;
  options.seed = derive_seed(config.seed, 30);
  options.tpe = sc.tpe;
  return search_beta(trainer, evaluator, static_cast<int>(folds.size()), options);
}

std::string ExperimentManifest::to_json() const {
  json j;
  j["code_version"] = code_version;
  j["seed"] = seed;
  j["config"] = config_yaml;
  j["datasets"] = dataset_digests;
  j["policy_digest"] = policy_digest;
  j["betas"] = betas;
  j["t2s_betas"] = t2s_betas;
  j["checkpoints"] = checkpoints;
  json steps_json = json::array();
  for (const auto& [name, status] : steps) {
    steps_json.push_back({{"step", name}, {"status", status == StepStatus::kComputed ? "computed" : "reused"}});
  }
  j["steps"] = steps_json;
  if (source_model_eval) j["stage1_eval"] = eval_json(*source_model_eval, false);
  if (final_eval) j["final_eval"] = eval_json(*final_eval, true);
  if (!failed_step.empty()) {
    j["failed_step"] = failed_step;
    j["error"] = error;
  }
  return j.dump(2);
}

std::string eval_to_json(const EvalResult& result, bool per_image) { return eval_json(result, per_image).dump(2); }

namespace {

class PipelineRun {
 public:
  PipelineRun(const RunConfig& config, const PipelineOptions& options, std::string manifest_name)
      : config_(config), options_(options), manifest_name_(std::move(manifest_name)) {
    if (options_.run_dir.empty()) throw Error("run_pipeline: no run directory");
    fs::create_directories(options_.run_dir);
    manifest_.config_yaml = dump_config(config_);
    manifest_.seed = config_.seed;
  }

  ExperimentManifest run() {
    config_.validate();
    const char* order[] = {"data", "search", "stylize-s2t", "stage1", "stylize-t2s", "pseudo-label", "stage2",
                           "evaluate"};
    if (!options_.stop_after.empty() &&
        std::find_if(std::begin(order), std::end(order), [&](const char* s) { return options_.stop_after == s; }) ==
            std::end(order)) {
      throw Error("unknown pipeline step '" + options_.stop_after + "'");
    }
    for (const char* step : order) {
      try {
        run_step(step);
      } catch (const std::exception& e) {
        manifest_.failed_step = step;
        manifest_.error = e.what();
        write_manifest();
        throw;
      }
      if (options_.stop_after == step) break;
    }
    write_manifest();
    return manifest_;
  }

 private:
  void log(const std::string& message) const {
    if (options_.log) options_.log(message);
  }

  fs::path path(const std::string& name) const { return options_.run_dir / name; }

  void record(const std::string& step, StepStatus status, const std::string& detail,
              std::chrono::steady_clock::time_point start) {
    manifest_.steps.emplace_back(step, status);
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.1f s)", seconds_since(start));
    log("[" + step + "] " + (status == StepStatus::kComputed ? "computed " : "reused ") + detail + buf);
  }

  void write_manifest() const { write_atomically(path(manifest_name_), manifest_.to_json() + "\n"); }

  void run_step(const std::string& step) {
    const auto start = std::chrono::steady_clock::now();
    if (step == "data") return step_data(start);
    if (step == "search") return step_search(start);
    if (step == "stylize-s2t") return step_s2t(start);
    if (step == "stage1") return step_stage1(start);
    if (step == "stylize-t2s") return step_t2s(start);
    if (step == "pseudo-label") return step_pseudo(start);
    if (step == "stage2") return step_stage2(start);
    step_evaluate(start);
  }

  void persist_samples(const std::string& name, const std::vector<ImageSample>& samples, std::string& digest) {
    digest = samples_digest(samples);
    const auto file = path("data/" + name + "-" + digest.substr(0, 12) + ".bin");
    if (!fs::exists(file)) save_samples(file, samples);
    manifest_.dataset_digests[name] = digest;
  }

  void step_data(std::chrono::steady_clock::time_point start) {
    auto data = load_domains(config_);
    if (data.source.empty() || data.target_train.empty() || data.target_test.empty()) {
      throw Error("source, target and test sets must all be nonempty");
    }
    persist_samples("source", data.source, source_digest_);
    persist_samples("target", data.target_train, target_digest_);
    persist_samples("test", data.target_test, test_digest_);
    source_ = Dataset(std::move(data.source));
    target_ = Dataset(std::move(data.target_train));
    test_ = Dataset(std::move(data.target_test));
    record("data", StepStatus::kComputed,
           std::to_string(source_.size()) + " source, " + std::to_string(target_.size()) + " target, " +
               std::to_string(test_.size()) + " test images",
           start);
  }

  void step_search(std::chrono::steady_clock::time_point start) {
    const auto key = source_digest_ + target_digest_ +
                     key_text(config_, {"seed", "working_resolution", "batch_size", "swap_dc", "model.", "search.",
                                        "stage1.n_betas"});
    const auto file = path("policy-" + short_hash(key) + ".txt");
    StepStatus status = StepStatus::kReused;
    if (fs::exists(file)) {
      betas_ = read_policy_file(file);
    } else {
      const auto result = run_beta_search(source_, target_.images(), config_);
      for (const auto& w : result.warnings) log("[search] warning: " + w);
      for (const auto& e : result.fold_errors) log("[search] fold failed: " + e);
      write_policy_file(file, result);
      betas_ = result.policy.betas;
      status = StepStatus::kComputed;
    }
    manifest_.policy_digest = file_digest(file);
    manifest_.betas = betas_;
    manifest_.checkpoints["policy"] = file.filename().string();
    record("search", status, file.filename().string() + " betas " + betas_text(betas_), start);
  }

  void step_s2t(std::chrono::steady_clock::time_point start) {
    const auto key = manifest_.policy_digest + source_digest_ + target_digest_ +
                     key_text(config_, {"seed", "swap_dc", "stage1.k_groups"});
    const auto file = path("s2t-" + short_hash(key) + ".bin");
    StepStatus status = StepStatus::kReused;
    std::vector<ImageSample> synth;
    if (fs::exists(file)) {
      synth = load_samples(file);
    } else {
      synth = stylize_source_to_target(source_.labeled_samples(), target_.images(), betas_, config_);
      save_samples(file, synth);
      status = StepStatus::kComputed;
    }
    s2t_digest_ = file_digest(file);
    manifest_.dataset_digests["s2t"] = s2t_digest_;
    s2t_ = Dataset(std::move(synth));
    record("stylize-s2t", status, file.filename().string() + ", " + std::to_string(s2t_.size()) + " images", start);
  }

  void step_stage1(std::chrono::steady_clock::time_point start) {
    const auto key = s2t_digest_ + source_digest_ + target_digest_ + test_digest_ +
                     key_text(config_, {"seed", "working_resolution", "batch_size", "eval_threshold",
                                        "boundary_connectivity", "model.", "stage1."});
    const auto stem = "stage1-" + short_hash(key);
    const auto file = path(stem + ".ckpt");
    StepStatus status = StepStatus::kReused;
    if (fs::exists(file)) {
      stage1_ = load_checkpoint(file).model;
    } else {
      const Dataset empty;
      auto result = train_stage1(source_, config_.stage1.use_synthesis ? s2t_ : empty, target_, config_, &test_);
      write_report_jsonl(path(stem + ".jsonl"), result.report);
      save_checkpoint(file, Checkpoint{"stage1", dump_config(config_), result.model, result.d1, result.d2});
      stage1_ = std::move(result.model);
      status = StepStatus::kComputed;
    }
    stage1_digest_ = file_digest(file);
    manifest_.checkpoints["stage1"] = file.filename().string();
    manifest_.source_model_eval = evaluate(stage1_, test_, eval_options_for(config_));
    record("stage1", status, file.filename().string(), start);
  }

  void step_t2s(std::chrono::steady_clock::time_point start) {
    t2s_betas_ = config_.stage2.policy.empty() ? betas_ : parse_beta_list(config_.stage2.policy);
    if (config_.stage2.policy.empty() && t2s_betas_.size() > static_cast<std::size_t>(config_.stage2.n_betas)) {
      t2s_betas_.resize(static_cast<std::size_t>(config_.stage2.n_betas));
    }
    manifest_.t2s_betas = t2s_betas_;
    const auto key = source_digest_ + target_digest_ + betas_text(t2s_betas_) +
                     key_text(config_, {"seed", "swap_dc", "stage2.k_groups"});
    const auto file = path("t2s-" + short_hash(key) + ".bin");
    StepStatus status = StepStatus::kReused;
    std::vector<ImageSample> styled;
    if (fs::exists(file)) {
      styled = load_samples(file);
    } else {
      styled = stylize_target_to_source(target_.images(), source_.images(), t2s_betas_, config_);
      save_samples(file, styled);
      status = StepStatus::kComputed;
    }
    t2s_digest_ = file_digest(file);
    manifest_.dataset_digests["t2s"] = t2s_digest_;
    t2s_ = Dataset(std::move(styled));
    record("stylize-t2s", status, file.filename().string() + ", " + std::to_string(t2s_.size()) + " images", start);
  }

  void step_pseudo(std::chrono::steady_clock::time_point start) {
    const auto key = stage1_digest_ + target_digest_ + t2s_digest_ +
                     key_text(config_, {"stage2.gamma", "stage2.copy_labels"});
    const auto hash = short_hash(key);
    const auto file_t = path("pseudo-target-" + hash + ".bin");
    const auto file_s = path("pseudo-t2s-" + hash + ".bin");
    StepStatus status = StepStatus::kReused;
    if (fs::exists(file_t) && fs::exists(file_s)) {
      pseudo_target_ = load_pseudo_labels(file_t);
      pseudo_t2s_ = load_pseudo_labels(file_s);
    } else {
      const auto tag = manifest_.checkpoints["stage1"];
      pseudo_target_ = generate_pseudo_labels(stage1_, target_.images(), config_.stage2.gamma, tag);
      pseudo_t2s_ = config_.stage2.copy_labels
                        ? copy_pseudo_labels(t2s_.images(), pseudo_target_)
                        : generate_pseudo_labels(stage1_, t2s_.images(), config_.stage2.gamma, tag);
      save_pseudo_labels(file_t, pseudo_target_);
      save_pseudo_labels(file_s, pseudo_t2s_);
      status = StepStatus::kComputed;
    }
    pseudo_digest_ = file_digest(file_t) + file_digest(file_s);
    record("pseudo-label", status, "gamma " + get_field(config_, "stage2.gamma"), start);
  }

  void step_stage2(std::chrono::steady_clock::time_point start) {
    const auto key = stage1_digest_ + pseudo_digest_ + t2s_digest_ + test_digest_ +
                     key_text(config_, {"seed", "batch_size", "eval_threshold", "boundary_connectivity", "stage2."});
    const auto stem = "stage2-" + short_hash(key);
    const auto file = path(stem + ".ckpt");
    StepStatus status = StepStatus::kReused;
    if (fs::exists(file)) {
      stage2_ = load_checkpoint(file).model;
    } else {
      const bool cross = config_.stage2.cross_style;
      auto result = train_stage2(stage1_, target_, pseudo_target_, cross ? &t2s_ : nullptr,
                                 cross ? &pseudo_t2s_ : nullptr, config_, &test_);
      for (const auto& w : result.report.warnings) log("[stage2] warning: " + w);
      write_report_jsonl(path(stem + ".jsonl"), result.report);
      save_checkpoint(file, Checkpoint{"stage2", dump_config(config_), result.model, std::nullopt, std::nullopt});
      stage2_ = std::move(result.model);
      status = StepStatus::kComputed;
    }
    manifest_.checkpoints["stage2"] = file.filename().string();
    record("stage2", status, file.filename().string(), start);
  }

  void step_evaluate(std::chrono::steady_clock::time_point start) {
    manifest_.final_eval = evaluate(stage2_, test_, eval_options_for(config_));
    char buf[96];
    std::snprintf(buf, sizeof buf, "dice %.2f asd %.2f", manifest_.final_eval->dice_avg, manifest_.final_eval->asd_avg);
    record("evaluate", StepStatus::kComputed, buf, start);
  }

  RunConfig config_;
  PipelineOptions options_;
  std::string manifest_name_;
  ExperimentManifest manifest_;
  Dataset source_, target_, test_, s2t_, t2s_;
  std::string source_digest_, target_digest_, test_digest_, s2t_digest_, t2s_digest_, stage1_digest_, pseudo_digest_;
  std::vector<double> betas_, t2s_betas_;
  SegModel stage1_, stage2_;
  PseudoLabelSet pseudo_target_, pseudo_t2s_;
};

std::string slug(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

}  // namespace

ExperimentManifest run_pipeline(const RunConfig& config, const PipelineOptions& options) {
  return PipelineRun(config, options, "manifest.json").run();
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const PipelineOptions& options) {
  struct Rung {
    std::string name;
    bool synth, adv, proto;
    std::optional<bool> cross_style;  // unset: stage 1 only
  };
  const std::vector<Rung> rungs = {
      {"Source only", false, false, false, std::nullopt},
      {"+ Adversarial (Xs, Xt)", false, true, false, std::nullopt},
      {"+ SMSI", true, true, false, std::nullopt},
      {"+ CPC", true, true, true, std::nullopt},
      {"+ Plain pseudo label (Xt)", true, true, true, false},
      {"+ CSSL", true, true, true, true},
  };
  std::vector<AblationRow> rows;
  for (const auto& rung : rungs) {
    RunConfig c = config;
    c.stage1.use_synthesis = rung.synth;
    c.stage1.use_adversarial = rung.adv;
    c.stage1.use_prototype = rung.proto;
    PipelineOptions o = options;
    o.stop_after = rung.cross_style ? "" : "stage1";
    if (rung.cross_style) c.stage2.cross_style = *rung.cross_style;
    if (options.log) options.log("== " + rung.name);
    const auto manifest = PipelineRun(c, o, "manifest-" + slug(rung.name) + ".json").run();
    rows.push_back({rung.name, rung.cross_style ? *manifest.final_eval : *manifest.source_model_eval});
  }
  std::vector<std::pair<std::string, EvalResult>> table;
  json j = json::array();
  for (const auto& r : rows) {
    table.emplace_back(r.name, r.result);
    j.push_back({{"setting", r.name}, {"result", eval_json(r.result, false)}});
  }
  write_atomically(options.run_dir / "ablation.txt", format_eval_table(table));
  write_atomically(options.run_dir / "ablation.json", j.dump(2) + "\n");
  return rows;
}

std::vector<GammaRow> gamma_sweep(const RunConfig& config, const std::vector<double>& gammas,
                                  const PipelineOptions& options) {
  if (gammas.empty()) throw Error("no gammas");
  std::vector<GammaRow> rows;
  for (double gamma : gammas) {
    RunConfig c = config;
    c.stage2.gamma = gamma;
    char name[48];
    std::snprintf(name, sizeof name, "manifest-gamma-%.4f.json", gamma);
    if (options.log) options.log("== gamma " + std::to_string(gamma));
    const auto manifest = PipelineRun(c, options, name).run();
    rows.push_back({gamma, *manifest.final_eval});
  }
  json j = json::array();
  for (const auto& r : rows) j.push_back({{"gamma", r.gamma}, {"result", eval_json(r.result, false)}});
  write_atomically(options.run_dir / "gamma_sweep.txt", format_gamma_table(rows));
  write_atomically(options.run_dir / "gamma_sweep.json", j.dump(2) + "\n");
  write_atomically(options.run_dir / "gamma_sweep.svg", gamma_plot_svg(rows));
  return rows;
}

std::string format_gamma_table(const std::vector<GammaRow>& rows) {
  std::vector<std::pair<std::string, EvalResult>> table;
  for (const auto& r : rows) {
    char name[32];
    std::snprintf(name, sizeof name, "gamma = %.2f", r.gamma);
    table.emplace_back(name, r.result);
  }
  return format_eval_table(table);
}

std::string gamma_plot_svg(const std::vector<GammaRow>& rows) {
  constexpr double kPanelW = 320, kPanelH = 240, kLeft = 50, kTop = 30, kPlotW = 250, kPlotH = 170;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * kPanelW << "\" height=\"" << kPanelH
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (rows.empty()) {
    svg << "</svg>\n";
    return svg.str();
  }
  double g_lo = rows.front().gamma, g_hi = rows.front().gamma;
  for (const auto& r : rows) {
    g_lo = std::min(g_lo, r.gamma);
    g_hi = std::max(g_hi, r.gamma);
  }
  if (g_hi - g_lo < 1e-9) {
    g_lo -= 0.05;
    g_hi += 0.05;
  }
  struct Series {
    const char* color;
    const char* label;
    double EvalResult::*field;
  };
  auto panel = [&](int index, const char* title, std::initializer_list<Series> series) {
    const double x0 = index * kPanelW + kLeft;
    double lo = 1e300, hi = -1e300;
    for (const auto& s : series) {
      for (const auto& r : rows) {
        lo = std::min(lo, r.result.*s.field);
        hi = std::max(hi, r.result.*s.field);
      }
    }
    const double pad = std::max(1.0, 0.1 * (hi - lo));
    lo -= pad;
    hi += pad;
    auto px = [&](double g) { return x0 + (g - g_lo) / (g_hi - g_lo) * kPlotW; };
    auto py = [&](double v) { return kTop + (hi - v) / (hi - lo) * kPlotH; };
    svg << "<text x=\"" << x0 + kPlotW / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title
        << "</text>\n";
    svg << "<rect x=\"" << x0 << "\" y=\"" << kTop << "\" width=\"" << kPlotW << "\" height=\"" << kPlotH
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double v = lo + (hi - lo) * t / 4.0;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.1f", v);
      svg << "<text x=\"" << x0 - 5 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << buf << "</text>\n";
    }
    for (const auto& r : rows) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", r.gamma);
      svg << "<text x=\"" << px(r.gamma) << "\" y=\"" << kTop + kPlotH + 15 << "\" text-anchor=\"middle\">" << buf
          << "</text>\n";
    }
    svg << "<text x=\"" << x0 + kPlotW / 2 << "\" y=\"" << kTop + kPlotH + 32 << "\" text-anchor=\"middle\">gamma</text>\n";
    int legend = 0;
    for (const auto& s : series) {
      svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
      for (const auto& r : rows) svg << px(r.gamma) << "," << py(r.result.*s.field) << " ";
      svg << "\"/>\n";
      for (const auto& r : rows) {
        svg << "<circle cx=\"" << px(r.gamma) << "\" cy=\"" << py(r.result.*s.field) << "\" r=\"3\" fill=\"" << s.color
            << "\"/>\n";
      }
      svg << "<text x=\"" << x0 + 8 << "\" y=\"" << kTop + 14 + 13 * legend++ << "\" fill=\"" << s.color << "\">"
          << s.label << "</text>\n";
    }
  };
  panel(0, "Dice [%]",
        {{"#1f77b4", "cup", &EvalResult::dice_cup},
         {"#d62728", "disc", &EvalResult::dice_disc},
         {"#2ca02c", "average", &EvalResult::dice_avg}});
  panel(1, "ASD [pixel]",
        {{"#1f77b4", "cup", &EvalResult::asd_cup},
         {"#d62728", "disc", &EvalResult::asd_disc},
         {"#2ca02c", "average", &EvalResult::asd_avg}});
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace fsuda
