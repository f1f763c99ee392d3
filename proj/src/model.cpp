#include "fsuda/nn/model.hpp"

#include "fsuda/nn/losses.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace fsuda {

std::vector<SegmentationOutput> predict(const SegModel& model, std::span<const ImageSample> images, int batch_size) {
  std::vector<SegmentationOutput> outputs;
  outputs.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<const ImageSample*> batch;
    for (std::size_t i = start; i < std::min(images.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      batch.push_back(&images[i]);
    }
    const auto cache = model.forward(nn::to_batch<float>(batch));
    const Eigen::Index plane = static_cast<Eigen::Index>(cache.prob.h) * cache.prob.w;
    const Eigen::Index fplane = static_cast<Eigen::Index>(cache.feature.h) * cache.feature.w;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      SegmentationOutput out;
      for (int c = 0; c < 2; ++c) {
        out.prob[static_cast<std::size_t>(c)] = Eigen::Map<const Plane>(
            cache.prob.data.row(c).data() + static_cast<Eigen::Index>(b) * plane, cache.prob.h, cache.prob.w);
      }
      out.feature = cache.feature.data.middleCols(static_cast<Eigen::Index>(b) * fplane, fplane);
      out.feature_h = cache.feature.h;
      out.feature_w = cache.feature.w;
      outputs.push_back(std::move(out));
    }
  }
  return outputs;
}

double seg_loss(const SegmentationOutput& output, const LabelMap& label) {
  if (output.prob[0].rows() != label.rows() || output.prob[0].cols() != label.cols()) {
    throw Error("seg_loss: prediction and label shapes differ");
  }
  const auto targets = nn::label_targets<double>({&label});
  nn::Matrix<double> prob(2, targets.data.cols());
  for (int c = 0; c < 2; ++c) {
    prob.row(c) = Eigen::Map<const Eigen::RowVectorXf>(output.prob[static_cast<std::size_t>(c)].data(),
                                                       targets.data.cols())
                      .cast<double>();
  }
  return nn::bce_on_prob(prob, targets.data);
}

namespace {

constexpr char kMagic[8] = {'F', 'S', 'U', 'D', 'A', 'C', 'K', 'P'};

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("checkpoint truncated");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto size = read_u32(in);
  std::string s(size, '\0');
  in.read(s.data(), size);
  if (!in) throw Error("checkpoint truncated");
  return s;
}

void write_store(std::ostream& out, const nn::ParamStore<float>& store) {
  for (const auto& e : store.entries) {
    write_string(out, e.name);
    write_string(out, e.group);
    write_u32(out, static_cast<std::uint32_t>(e.value.rows()));
    write_u32(out, static_cast<std::uint32_t>(e.value.cols()));
    out.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(float)));
  }
}

struct RawEntry {
  std::string group;
  nn::Matrix<float> value;
};

void fill_store(nn::ParamStore<float>& store, std::map<std::string, RawEntry>& raw) {
  for (auto& e : store.entries) {
    auto it = raw.find(e.name);
    if (it == raw.end()) throw Error("checkpoint is missing parameter '" + e.name + "'");
    if (it->second.value.rows() != e.value.rows() || it->second.value.cols() != e.value.cols()) {
      throw Error("checkpoint parameter '" + e.name + "' has the wrong shape");
    }
    e.value = std::move(it->second.value);
    raw.erase(it);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_u32(out, Checkpoint::kVersion);
    write_string(out, checkpoint.stage_tag);
    write_string(out, checkpoint.config_yaml);
    std::uint32_t count = static_cast<std::uint32_t>(checkpoint.model.params().size());
    if (checkpoint.d1) count += static_cast<std::uint32_t>(checkpoint.d1->params().size());
    if (checkpoint.d2) count += static_cast<std::uint32_t>(checkpoint.d2->params().size());
    write_u32(out, count);
    write_store(out, checkpoint.model.params());
    if (checkpoint.d1) write_store(out, checkpoint.d1->params());
    if (checkpoint.d2) write_store(out, checkpoint.d2->params());
    if (!out) throw Error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw Error(path.string() + " is not a checkpoint file");
  const auto version = read_u32(in);
  if (version != Checkpoint::kVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  Checkpoint checkpoint;
  checkpoint.stage_tag = read_string(in);
  checkpoint.config_yaml = read_string(in);
  RunConfig config = RunConfig::desk();
  merge_config_text(config, checkpoint.config_yaml);

  const auto count = read_u32(in);
  std::map<std::string, RawEntry> raw;
  bool has_d1 = false, has_d2 = false;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_string(in);
    RawEntry entry;
    entry.group = read_string(in);
    const auto rows = read_u32(in);
    const auto cols = read_u32(in);
    entry.value.resize(rows, cols);
    in.read(reinterpret_cast<char*>(entry.value.data()), static_cast<std::streamsize>(rows * cols * sizeof(float)));
    if (!in) throw Error("checkpoint truncated: " + path.string());
    has_d1 |= entry.group == "D1";
    has_d2 |= entry.group == "D2";
    raw.emplace(std::move(name), std::move(entry));
  }
  checkpoint.model = SegModel(config.model, 0);
  fill_store(checkpoint.model.params(), raw);
  if (has_d1) {
    checkpoint.d1 = DiscModel("D1", 2, config.model.disc_channels, 0);
    fill_store(checkpoint.d1->params(), raw);
  }
  if (has_d2) {
    checkpoint.d2 = DiscModel("D2", 2, config.model.disc_channels, 0);
    fill_store(checkpoint.d2->params(), raw);
  }
  if (!raw.empty()) throw Error("checkpoint has unexpected parameter '" + raw.begin()->first + "'");
  return checkpoint;
}

std::string bytes_digest(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) hash = (hash ^ c) * 0x100000001b3ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return bytes_digest(buffer.str());
}

}  // namespace fsuda
