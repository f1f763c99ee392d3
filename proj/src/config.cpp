#include "fsuda/core/config.hpp"

#include "fsuda/core/types.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>

namespace fsuda {

RunConfig RunConfig::paper() {
  RunConfig config;
  config.preset = "paper";
  config.working_resolution = 512;
  config.data.few_shot = 10;
  config.data.target_train = 0;
  config.data.target_test = 0;
  config.model.base_channels = 16;
  config.model.context_channels = 64;
  config.model.atrous_rates = {6, 12, 18};
  config.model.disc_channels = 32;
  return config;
}

RunConfig RunConfig::desk() {
  RunConfig config;
  config.preset = "desk";
  config.working_resolution = 64;
  config.search.folds = 3;
  config.search.trials_per_fold = 8;
  config.search.warm_epochs = 30;
  config.search.finetune_epochs = 5;
  config.search.tpe.n_startup = 3;
  config.search.tpe.n_ei_candidates = 4;
  config.stage1.epochs = 40;
  config.stage1.lambda_adv = 0.001;
  config.stage1.disc_optimizer = "adam";
  config.stage1.disc_lr = 1e-4;
  config.stage2.epochs = 5;
  config.stage2.lr = 2e-4;
  return config;
}

RunConfig RunConfig::from_preset(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw Error("unknown preset '" + name + "' (expected paper or desk)");
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error("invalid config: " + what);
  };
  require(working_resolution >= 8 && working_resolution % 8 == 0, "working_resolution must be a positive multiple of 8");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(stage1.n_betas >= 1 && stage1.k_groups >= 1, "stage1 n_betas and k_groups must be >= 1");
  require(stage2.n_betas >= 1 && stage2.k_groups >= 1, "stage2 n_betas and k_groups must be >= 1");
  require(stage2.gamma > 0.0 && stage2.gamma < 1.0, "stage2.gamma must lie in (0,1)");
  require(stage1.epochs >= 0 && stage2.epochs >= 0, "epochs must be >= 0");
  require(stage1.prototype_norm == "total" || stage1.prototype_norm == "area", "stage1.prototype_norm must be total or area");
  require(stage1.disc_optimizer == "sgd" || stage1.disc_optimizer == "adam", "stage1.disc_optimizer must be sgd or adam");
  require(stage1.prototype_epsilon > 0.0, "stage1.prototype_epsilon must be > 0");
  require(search.folds >= 2, "search.folds must be >= 2");
  require(search.trials_per_fold >= 1, "search.trials_per_fold must be >= 1");
  require(search.tpe.good_quantile > 0.0 && search.tpe.good_quantile < 1.0, "search.tpe.good_quantile must lie in (0,1)");
  require(search.tpe.n_ei_candidates >= 1, "search.tpe.n_ei_candidates must be >= 1");
  require(search.tpe.prior_weight >= 0.0, "search.tpe.prior_weight must be >= 0");
  require(!model.atrous_rates.empty(), "model.atrous_rates must not be empty");
  require(boundary_connectivity == "4" || boundary_connectivity == "8", "boundary_connectivity must be 4 or 8");
  require(eval_threshold > 0.0 && eval_threshold < 1.0, "eval_threshold must lie in (0,1)");
}

std::vector<ConfigField> config_fields(RunConfig& c) {
  return {
      {"preset", &c.preset},
      {"working_resolution", &c.working_resolution},
      {"batch_size", &c.batch_size},
      {"seed", &c.seed},
      {"eval_threshold", &c.eval_threshold},
      {"swap_dc", &c.swap_dc},
      {"boundary_connectivity", &c.boundary_connectivity},
      {"data.few_shot", &c.data.few_shot},
      {"data.target_train", &c.data.target_train},
      {"data.target_test", &c.data.target_test},
      {"data.center_crop", &c.data.center_crop},
      {"data.normalize", &c.data.normalize},
      {"data.source_dir", &c.data.source_dir},
      {"data.target_dir", &c.data.target_dir},
      {"data.test_dir", &c.data.test_dir},
      {"model.base_channels", &c.model.base_channels},
      {"model.context_channels", &c.model.context_channels},
      {"model.atrous_rates", &c.model.atrous_rates},
      {"model.disc_channels", &c.model.disc_channels},
      {"search.folds", &c.search.folds},
      {"search.trials_per_fold", &c.search.trials_per_fold},
      {"search.warm_epochs", &c.search.warm_epochs},
      {"search.finetune_epochs", &c.search.finetune_epochs},
      {"search.lr", &c.search.lr},
      {"search.k_groups", &c.search.k_groups},
      {"search.tpe.n_startup", &c.search.tpe.n_startup},
      {"search.tpe.good_quantile", &c.search.tpe.good_quantile},
      {"search.tpe.n_ei_candidates", &c.search.tpe.n_ei_candidates},
      {"search.tpe.prior_weight", &c.search.tpe.prior_weight},
      {"stage1.epochs", &c.stage1.epochs},
      {"stage1.seg_lr", &c.stage1.seg_lr},
      {"stage1.disc_lr", &c.stage1.disc_lr},
      {"stage1.disc_optimizer", &c.stage1.disc_optimizer},
      {"stage1.lambda_adv", &c.stage1.lambda_adv},
      {"stage1.con_weight", &c.stage1.con_weight},
      {"stage1.n_betas", &c.stage1.n_betas},
      {"stage1.k_groups", &c.stage1.k_groups},
      {"stage1.use_synthesis", &c.stage1.use_synthesis},
      {"stage1.use_adversarial", &c.stage1.use_adversarial},
      {"stage1.use_prototype", &c.stage1.use_prototype},
      {"stage1.prototype_norm", &c.stage1.prototype_norm},
      {"stage1.prototype_epsilon", &c.stage1.prototype_epsilon},
      {"stage1.eval_every", &c.stage1.eval_every},
      {"stage2.epochs", &c.stage2.epochs},
      {"stage2.lr", &c.stage2.lr},
      {"stage2.gamma", &c.stage2.gamma},
      {"stage2.n_betas", &c.stage2.n_betas},
      {"stage2.k_groups", &c.stage2.k_groups},
      {"stage2.cross_style", &c.stage2.cross_style},
      {"stage2.copy_labels", &c.stage2.copy_labels},
      {"stage2.policy", &c.stage2.policy},
  };
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw Error("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw Error("config key '" + key + "': expected a boolean, got '" + text + "'");
}

std::vector<int> parse_int_list(const std::string& key, std::string text) {
  std::vector<int> out;
  for (char& ch : text) {
    if (ch == '[' || ch == ']') ch = ' ';
  }
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    const auto last = item.find_last_not_of(' ');
    out.push_back(parse_number<int>(key, item.substr(first, last - first + 1)));
  }
  return out;
}

void assign(const std::string& key, FieldRef ref, const std::string& value) {
  std::visit(
      [&](auto* field) {
        using T = std::remove_pointer_t<decltype(field)>;
        if constexpr (std::is_same_v<T, int>) {
          *field = parse_number<int>(key, value);
        } else if constexpr (std::is_same_v<T, double>) {
          *field = parse_number<double>(key, value);
        } else if constexpr (std::is_same_v<T, bool>) {
          *field = parse_bool(key, value);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          *field = parse_number<std::uint64_t>(key, value);
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
          *field = parse_int_list(key, value);
        } else {
          *field = value;
        }
      },
      ref);
}

std::string render(FieldRef ref) {
  return std::visit(
      [](auto* field) -> std::string {
        using T = std::remove_pointer_t<decltype(field)>;
        if constexpr (std::is_same_v<T, bool>) {
          return *field ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return *field;
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
          std::string out;
          for (std::size_t i = 0; i < field->size(); ++i) out += (i ? "," : "") + std::to_string((*field)[i]);
          return out;
        } else if constexpr (std::is_same_v<T, double>) {
          std::ostringstream os;
          os.precision(17);
          os << *field;
          return os.str();
        } else {
          return std::to_string(*field);
        }
      },
      ref);
}

std::optional<YAML::Node> lookup(const YAML::Node& node, const std::vector<std::string>& parts, std::size_t i = 0) {
  if (!node.IsMap()) return std::nullopt;
  const YAML::Node child = node[parts[i]];
  if (!child.IsDefined() || child.IsNull()) return std::nullopt;
  if (i + 1 == parts.size()) return child;
  return lookup(child, parts, i + 1);
}

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::stringstream stream(key);
  std::string part;
  while (std::getline(stream, part, '.')) parts.push_back(part);
  return parts;
}

}  // namespace

void set_field(RunConfig& config, const std::string& key, const std::string& value) {
  for (auto& field : config_fields(config)) {
    if (field.key == key) {
      assign(key, field.ref, value);
      return;
    }
  }
  throw Error("unknown config key '" + key + "'");
}

std::string get_field(const RunConfig& config, const std::string& key) {
  RunConfig copy = config;
  for (auto& field : config_fields(copy)) {
    if (field.key == key) return render(field.ref);
  }
  throw Error("unknown config key '" + key + "'");
}

void merge_config_text(RunConfig& config, const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw Error(std::string("config parse error: ") + e.what());
  }
  if (!root || root.IsNull()) return;
  if (!root.IsMap()) throw Error("config root must be a mapping");
  // A preset key resets every other field to that preset before merging.
  if (auto preset = root["preset"]; preset && preset.IsScalar()) {
    config = RunConfig::from_preset(preset.as<std::string>());
  }
  for (auto& field : config_fields(config)) {
    const auto found = lookup(root, split_key(field.key));
    if (!found) continue;
    const YAML::Node& node = *found;
    if (node.IsSequence()) {
      std::string joined;
      for (std::size_t i = 0; i < node.size(); ++i) joined += (i ? "," : "") + node[i].as<std::string>();
      assign(field.key, field.ref, joined);
    } else if (node.IsScalar()) {
      assign(field.key, field.ref, node.as<std::string>());
    } else {
      throw Error("config key '" + field.key + "' must be a scalar");
    }
  }
}

void load_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  merge_config_text(config, buffer.str());
}

namespace {

void put_path(YAML::Node node, const std::vector<std::string>& parts, std::size_t i, const YAML::Node& value) {
  if (i + 1 == parts.size()) {
    node[parts[i]] = value;
    return;
  }
  put_path(node[parts[i]], parts, i + 1, value);
}

}  // namespace

std::string dump_config(const RunConfig& config) {
  RunConfig copy = config;
  YAML::Node root(YAML::NodeType::Map);
  for (auto& field : config_fields(copy)) {
    const auto parts = split_key(field.key);
    YAML::Node value;
    if (std::holds_alternative<std::vector<int>*>(field.ref)) {
      value = YAML::Node(YAML::NodeType::Sequence);
      for (int v : *std::get<std::vector<int>*>(field.ref)) value.push_back(v);
      value.SetStyle(YAML::EmitterStyle::Flow);
    } else {
      value = render(field.ref);
    }
    put_path(root, parts, 0, value);
  }
  YAML::Emitter out;
  out << root;
  return std::string(out.c_str()) + "\n";
}

}  // namespace fsuda
