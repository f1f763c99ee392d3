#include "fsuda/metrics/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace fsuda {

namespace {

void check_shapes(const Mask& a, const Mask& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(std::string(what) + ": mask shapes differ");
}

constexpr double kFar = 1e20;

// Lower envelope of parabolas for one line (Felzenszwalb & Huttenlocher).
void distance_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = (q - v[k]) * static_cast<double>(q - v[k]) + f[v[k]];
  }
}

}  // namespace

double dice(const Mask& pred, const Mask& gt) {
  check_shapes(pred, gt, "dice");
  const auto a = (pred != 0);
  const auto b = (gt != 0);
  const double sa = static_cast<double>(a.count());
  const double sb = static_cast<double>(b.count());
  if (sa + sb == 0.0) return 1.0;
  return 2.0 * static_cast<double>((a && b).count()) / (sa + sb);
}

Mask boundary(const Mask& mask, Connectivity connectivity) {
  const int rows = static_cast<int>(mask.rows());
  const int cols = static_cast<int>(mask.cols());
  Mask out = Mask::Zero(rows, cols);
  auto background = [&](int y, int x) { return y < 0 || y >= rows || x < 0 || x >= cols || mask(y, x) == 0; };
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      if (!mask(y, x)) continue;
      bool edge = background(y - 1, x) || background(y + 1, x) || background(y, x - 1) || background(y, x + 1);
      if (!edge && connectivity == Connectivity::kEight) {
        edge = background(y - 1, x - 1) || background(y - 1, x + 1) || background(y + 1, x - 1) ||
               background(y + 1, x + 1);
      }
      out(y, x) = edge;
    }
  }
  return out;
}

PlaneD squared_distance_transform(const Mask& seeds) {
  const int rows = static_cast<int>(seeds.rows());
  const int cols = static_cast<int>(seeds.cols());
  PlaneD dist(rows, cols);
  if (!seeds.any()) {
    dist.setConstant(std::numeric_limits<double>::infinity());
    return dist;
  }
  const int n = std::max(rows, cols);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (int x = 0; x < cols; ++x) {
    f.resize(rows);
    d.resize(rows);
    for (int y = 0; y < rows; ++y) f[y] = seeds(y, x) ? 0.0 : kFar;
    distance_1d(f, d, v, z);
    for (int y = 0; y < rows; ++y) dist(y, x) = d[y];
  }
  for (int y = 0; y < rows; ++y) {
    f.resize(cols);
    d.resize(cols);
    for (int x = 0; x < cols; ++x) f[x] = dist(y, x);
    distance_1d(f, d, v, z);
    for (int x = 0; x < cols; ++x) dist(y, x) = d[x];
  }
  return dist;
}

bool asd_is_penalty(const Mask& pred, const Mask& gt) { return !pred.any() || !gt.any(); }

double asd(const Mask& pred, const Mask& gt, const AsdOptions& options) {
  check_shapes(pred, gt, "asd");
  if (asd_is_penalty(pred, gt)) {
    return options.empty_penalty > 0 ? options.empty_penalty
                                     : std::hypot(static_cast<double>(pred.rows()), static_cast<double>(pred.cols()));
  }
  const Mask ba = boundary(pred, options.connectivity);
  const Mask bb = boundary(gt, options.connectivity);
  const PlaneD to_b = squared_distance_transform(bb);
  const PlaneD to_a = squared_distance_transform(ba);
  double total = 0.0;
  for (Eigen::Index i = 0; i < ba.size(); ++i) {
    if (ba.data()[i]) total += std::sqrt(to_b.data()[i]);
    if (bb.data()[i]) total += std::sqrt(to_a.data()[i]);
  }
  return total / static_cast<double>(ba.count() + bb.count());
}

ImageEval evaluate_prediction(const std::array<Plane, 2>& prob, const LabelMap& label, const EvalOptions& options) {
  ImageEval e;
  const float t = static_cast<float>(options.threshold);
  const Mask cup_pred = (prob[0] >= t).cast<std::uint8_t>();
  const Mask disc_pred = (prob[1] >= t).cast<std::uint8_t>();
  const Mask cup_gt = label.cup_mask();
  const Mask disc_gt = label.disc_mask();
  e.dice_cup = 100.0 * dice(cup_pred, cup_gt);
  e.dice_disc = 100.0 * dice(disc_pred, disc_gt);
  e.asd_cup = asd(cup_pred, cup_gt, options.asd);
  e.asd_disc = asd(disc_pred, disc_gt, options.asd);
  e.cup_both_empty = !cup_pred.any() && !cup_gt.any();
  e.disc_both_empty = !disc_pred.any() && !disc_gt.any();
  e.cup_asd_penalty = asd_is_penalty(cup_pred, cup_gt);
  e.disc_asd_penalty = asd_is_penalty(disc_pred, disc_gt);
  return e;
}

EvalResult aggregate(std::vector<ImageEval> per_image) {
  EvalResult r;
  r.n_images = static_cast<int>(per_image.size());
  if (per_image.empty()) return r;
  for (const auto& e : per_image) {
    r.dice_cup += e.dice_cup;
    r.dice_disc += e.dice_disc;
    r.asd_cup += e.asd_cup;
    r.asd_disc += e.asd_disc;
  }
  const double n = static_cast<double>(per_image.size());
  r.dice_cup /= n;
  r.dice_disc /= n;
  r.asd_cup /= n;
  r.asd_disc /= n;
  r.dice_avg = 0.5 * (r.dice_cup + r.dice_disc);
  r.asd_avg = 0.5 * (r.asd_cup + r.asd_disc);
  r.per_image = std::move(per_image);
  return r;
}

EvalResult evaluate(const SegModel& model, const Dataset& dataset, const EvalOptions& options) {
  if (dataset.empty()) throw Error("evaluate: empty dataset");
  if (!dataset.fully_labeled()) throw Error("evaluate: dataset is not labeled");
  const auto outputs = predict(model, dataset.images());
  std::vector<ImageEval> per_image;
  per_image.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    ImageEval e = evaluate_prediction(outputs[i].prob, dataset.label(i), options);
    e.id = dataset.image(i).id;
    per_image.push_back(std::move(e));
  }
  return aggregate(std::move(per_image));
}

std::string format_eval_table(const std::vector<std::pair<std::string, EvalResult>>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s | %8s %8s %8s | %8s %8s %8s\n", "Setting", "Cup", "Disc", "Average", "Cup",
                "Disc", "Average");
  out << std::string(28, ' ') << " | " << "Dice [%]" << std::string(20, ' ') << "| ASD [pixel]\n" << line;
  out << std::string(90, '-') << "\n";
  for (const auto& [name, r] : rows) {
    std::snprintf(line, sizeof line, "%-28s | %8.2f %8.2f %8.2f | %8.2f %8.2f %8.2f\n", name.c_str(), r.dice_cup,
                  r.dice_disc, r.dice_avg, r.asd_cup, r.asd_disc, r.asd_avg);
    out << line;
  }
  return out.str();
}

}  // namespace fsuda
