#include "fsuda/core/dataset.hpp"

#include "fsuda/core/random.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace fs = std::filesystem;

namespace fsuda {

Dataset::Dataset(std::vector<ImageSample> samples) {
  images_.reserve(samples.size());
  labels_.reserve(samples.size());
  for (auto& sample : samples) {
    labels_.push_back(std::move(sample.label));
    sample.label.reset();
    images_.push_back(std::move(sample));
  }
}

bool Dataset::fully_labeled() const {
  return std::all_of(labels_.begin(), labels_.end(), [](const auto& l) { return l.has_value(); });
}

const LabelMap& Dataset::label(std::size_t index) const {
  const auto& label = labels_.at(index);
  if (!label) throw Error("sample '" + images_[index].id + "' has no label");
  ++*label_reads_;
  return *label;
}

ImageSample Dataset::labeled_sample(std::size_t index) const {
  ImageSample sample = images_.at(index);
  if (labels_[index]) {
    ++*label_reads_;
    sample.label = labels_[index];
  }
  return sample;
}

std::vector<ImageSample> Dataset::labeled_samples() const {
  std::vector<ImageSample> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(labeled_sample(i));
  return out;
}

namespace {

struct AxisMap {
  std::vector<int> lo, hi;
  std::vector<float> frac;
};

AxisMap bilinear_axis(int src, int dst) {
  AxisMap map;
  map.lo.resize(dst);
  map.hi.resize(dst);
  map.frac.resize(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double pos = std::max(0.0, (i + 0.5) * scale - 0.5);
    int lo = std::min(static_cast<int>(pos), src - 1);
    map.lo[i] = lo;
    map.hi[i] = std::min(lo + 1, src - 1);
    map.frac[i] = static_cast<float>(pos - lo);
  }
  return map;
}

}  // namespace

Plane resize_bilinear(const Plane& plane, int rows, int cols) {
  if (plane.rows() == rows && plane.cols() == cols) return plane;
  const AxisMap ry = bilinear_axis(static_cast<int>(plane.rows()), rows);
  const AxisMap rx = bilinear_axis(static_cast<int>(plane.cols()), cols);
  Plane out(rows, cols);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const float top = plane(ry.lo[y], rx.lo[x]) * (1 - rx.frac[x]) + plane(ry.lo[y], rx.hi[x]) * rx.frac[x];
      const float bot = plane(ry.hi[y], rx.lo[x]) * (1 - rx.frac[x]) + plane(ry.hi[y], rx.hi[x]) * rx.frac[x];
      out(y, x) = top * (1 - ry.frac[y]) + bot * ry.frac[y];
    }
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int rows, int cols) {
  if (mask.rows() == rows && mask.cols() == cols) return mask;
  Mask out(rows, cols);
  for (int y = 0; y < rows; ++y) {
    const auto sy = std::min<Eigen::Index>(static_cast<Eigen::Index>((y + 0.5) * mask.rows() / rows), mask.rows() - 1);
    for (int x = 0; x < cols; ++x) {
      const auto sx = std::min<Eigen::Index>(static_cast<Eigen::Index>((x + 0.5) * mask.cols() / cols), mask.cols() - 1);
      out(y, x) = mask(sy, sx);
    }
  }
  return out;
}

ImageSample resize_sample(const ImageSample& sample, int resolution) {
  ImageSample out = sample;
  for (auto& channel : out.pixels) {
    channel = resize_bilinear(channel, resolution, resolution).max(0.0f).min(1.0f);
  }
  if (out.label) out.label->labels = resize_nearest(out.label->labels, resolution, resolution);
  return out;
}

std::vector<std::size_t> few_shot_indices(std::size_t population, std::size_t count,
                                          std::uint64_t seed) {
  Rng rng(seed);
  auto order = permutation(population, rng);
  order.resize(std::min(count, population));
  std::sort(order.begin(), order.end());
  return order;
}

namespace {

bool is_image_file(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

ImageSample read_sample(const fs::path& image_path, const LoadOptions& options) {
  cv::Mat bgr = cv::imread(image_path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("cannot read image file " + image_path.string());
  if (options.center_crop) {
    const int side = std::min(bgr.rows, bgr.cols);
    bgr = bgr(cv::Rect((bgr.cols - side) / 2, (bgr.rows - side) / 2, side, side)).clone();
  }
  ImageSample sample = blank_sample(bgr.rows, bgr.cols, image_path.stem().string());
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) sample.pixels[c](y, x) = row[x][2 - c] / 255.0f;
    }
  }
  if (options.normalize) {
    for (auto& channel : sample.pixels) {
      const float lo = channel.minCoeff();
      const float hi = channel.maxCoeff();
      if (hi > lo) channel = (channel - lo) / (hi - lo);
    }
  }
  return sample;
}

LabelMap read_mask(const fs::path& mask_path, bool center_crop) {
  cv::Mat gray = cv::imread(mask_path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw Error("cannot read mask file " + mask_path.string());
  if (center_crop) {
    const int side = std::min(gray.rows, gray.cols);
    gray = gray(cv::Rect((gray.cols - side) / 2, (gray.rows - side) / 2, side, side)).clone();
  }
  LabelMap map;
  map.labels.resize(gray.rows, gray.cols);
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) {
      // nearest of 0 / 128 / 255
      map.labels(y, x) = row[x] < 64 ? 0 : (row[x] < 192 ? 1 : 2);
    }
  }
  return map;
}

}  // namespace

std::vector<ImageSample> load_dataset(const fs::path& root, Split split, const LoadOptions& options) {
  const fs::path image_dir = root / "images";
  const fs::path mask_dir = root / "masks";
  std::vector<fs::path> files;
  if (fs::is_directory(image_dir)) {
    for (const auto& entry : fs::directory_iterator(image_dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
  }
  if (files.empty()) throw Error("no images found in " + image_dir.string());
  std::sort(files.begin(), files.end());

  if (split == Split::kSource && options.few_shot > 0) {
    std::vector<fs::path> chosen;
    for (auto i : few_shot_indices(files.size(), options.few_shot, options.seed)) chosen.push_back(files[i]);
    files = std::move(chosen);
  }

  const bool has_masks = fs::is_directory(mask_dir);
  std::vector<ImageSample> samples;
  samples.reserve(files.size());
  for (const auto& file : files) {
    ImageSample sample = read_sample(file, options);
    sample.domain = split == Split::kSource ? Domain::kSource : Domain::kTarget;
    const fs::path mask_path = mask_dir / (file.stem().string() + ".png");
    if (has_masks && fs::exists(mask_path)) {
      sample.label = read_mask(mask_path, options.center_crop);
      if (sample.label->rows() != sample.height() || sample.label->cols() != sample.width()) {
        throw Error("mask " + mask_path.string() + " does not match its image size");
      }
    } else if (split != Split::kTarget) {
      throw Error("missing mask for image " + file.string());
    }
    samples.push_back(resize_sample(sample, options.resolution));
  }
  return samples;
}

void save_dataset(const fs::path& root, std::span<const ImageSample> samples) {
  fs::create_directories(root / "images");
  bool any_label = false;
  for (const auto& s : samples) any_label |= s.label.has_value();
  if (any_label) fs::create_directories(root / "masks");
  for (const auto& sample : samples) {
    cv::Mat bgr(sample.height(), sample.width(), CV_8UC3);
    for (int y = 0; y < sample.height(); ++y) {
      auto* row = bgr.ptr<cv::Vec3b>(y);
      for (int x = 0; x < sample.width(); ++x) {
        for (int c = 0; c < 3; ++c) {
          const float v = std::clamp(sample.pixels[c](y, x), 0.0f, 1.0f);
          row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
      }
    }
    const auto image_path = root / "images" / (sample.id + ".png");
    if (!cv::imwrite(image_path.string(), bgr)) throw Error("cannot write " + image_path.string());
    if (sample.label) {
      cv::Mat gray(sample.height(), sample.width(), CV_8UC1);
      static constexpr std::uint8_t kLevels[3] = {0, 128, 255};
      for (int y = 0; y < sample.height(); ++y) {
        auto* row = gray.ptr<std::uint8_t>(y);
        for (int x = 0; x < sample.width(); ++x) row[x] = kLevels[sample.label->labels(y, x)];
      }
      const auto mask_path = root / "masks" / (sample.id + ".png");
      if (!cv::imwrite(mask_path.string(), gray)) throw Error("cannot write " + mask_path.string());
    }
  }
}

}  // namespace fsuda
