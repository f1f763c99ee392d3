#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace fsuda {

struct TpeConfig {
  int n_startup = 8;
  double good_quantile = 0.25;
  int n_ei_candidates = 24;
  double prior_weight = 1.0;  // flat component, relative to one kernel
};

struct SearchConfig {
  int folds = 3;
  int trials_per_fold = 20;
  int warm_epochs = 20;      // step (i): plain source model per fold
  int finetune_epochs = 5;   // per-trial fine-tuning from the warm model
  double lr = 1e-3;
  int k_groups = 1;          // amplitude groups used while searching
  TpeConfig tpe;
};

struct Stage1Config {
  int epochs = 200;
  double seg_lr = 1e-3;
  double disc_lr = 2.5e-5;
  std::string disc_optimizer = "sgd";  // sgd | adam
  double lambda_adv = 0.5;
  double con_weight = 1.0;
  int n_betas = 3;
  int k_groups = 5;
  bool use_synthesis = true;
  bool use_adversarial = true;
  bool use_prototype = true;
  std::string prototype_norm = "total";  // total | area
  double prototype_epsilon = 1e-8;
  int eval_every = 0;  // 0: validate only after the last epoch
};

struct Stage2Config {
  int epochs = 20;
  double lr = 2e-3;
  double gamma = 0.75;
  int n_betas = 3;
  int k_groups = 1;
  bool cross_style = true;
  bool copy_labels = false;
  std::string policy = "";  // comma-separated betas; empty reuses the searched policy
};

struct ModelConfig {
  int base_channels = 8;
  int context_channels = 32;
  std::vector<int> atrous_rates = {2, 4, 6};
  int disc_channels = 8;
};

struct DataConfig {
  int few_shot = 10;
  int target_train = 60;
  int target_test = 40;
  bool center_crop = false;
  bool normalize = false;
  std::string source_dir;
  std::string target_dir;
  std::string test_dir;
};

struct RunConfig {
  std::string preset = "desk";
  int working_resolution = 64;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double eval_threshold = 0.5;
  bool swap_dc = true;
  std::string boundary_connectivity = "4";  // 4 | 8
  DataConfig data;
  ModelConfig model;
  SearchConfig search;
  Stage1Config stage1;
  Stage2Config stage2;

  // Full-scale schedule: 512 px, 200/20 epochs.
  static RunConfig paper();
  // Desk-scale defaults: 64 px synthetic data, shortened schedules.
  static RunConfig desk();
  static RunConfig from_preset(const std::string& name);

  void validate() const;
};

// Flat dotted-key view over every RunConfig field ("stage1.epochs", ...).
using FieldRef = std::variant<int*, double*, bool*, std::string*, std::uint64_t*, std::vector<int>*>;
struct ConfigField {
  std::string key;
  FieldRef ref;
};
std::vector<ConfigField> config_fields(RunConfig& config);

void set_field(RunConfig& config, const std::string& key, const std::string& value);
std::string get_field(const RunConfig& config, const std::string& key);

// Hierarchical YAML text; keys missing from the file keep their current value.
void load_config_file(RunConfig& config, const std::filesystem::path& path);
void merge_config_text(RunConfig& config, const std::string& yaml_text);
std::string dump_config(const RunConfig& config);

}  // namespace fsuda
