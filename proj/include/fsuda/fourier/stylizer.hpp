#pragma once

#include "fsuda/core/types.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fsuda {

// Per-channel amplitude and phase of the centered 2-D DFT (zero frequency at
// index (H/2, W/2)).
template <typename Scalar>
struct FrequencyDecompositionT {
  std::vector<PlaneT<Scalar>> amplitude;
  std::vector<PlaneT<Scalar>> phase;  // in [-pi, pi)

  int rows() const { return amplitude.empty() ? 0 : static_cast<int>(amplitude[0].rows()); }
  int cols() const { return amplitude.empty() ? 0 : static_cast<int>(amplitude[0].cols()); }
  int channels() const { return static_cast<int>(amplitude.size()); }
};
using FrequencyDecomposition = FrequencyDecompositionT<double>;

template <typename Scalar>
using ComplexPlane = Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Moves index 0 to index n/2 along both axes.
template <typename Derived>
auto fftshift(const Eigen::ArrayBase<Derived>& in) {
  using Array = Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index rows = in.rows();
  const Eigen::Index cols = in.cols();
  Array out(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) out((y + rows / 2) % rows, (x + cols / 2) % cols) = in(y, x);
  }
  return out;
}

// Inverse of fftshift, also for odd sizes.
template <typename Derived>
auto ifftshift(const Eigen::ArrayBase<Derived>& in) {
  using Array = Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index rows = in.rows();
  const Eigen::Index cols = in.cols();
  Array out(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) out(y, x) = in((y + rows / 2) % rows, (x + cols / 2) % cols);
  }
  return out;
}

// Unnormalized forward transform (sum over pixels), uncentered.
template <typename Scalar>
ComplexPlane<Scalar> dft2(const ComplexPlane<Scalar>& input, bool inverse = false) {
  Eigen::FFT<Scalar> fft;
  std::vector<std::complex<Scalar>> out_buf;
  auto transform = [&](const std::vector<std::complex<Scalar>>& in) -> const std::vector<std::complex<Scalar>>& {
    if (in.size() == 1) return in;  // kissfft crashes on length 1; the transform is the identity
    if (inverse) fft.inv(out_buf, in); else fft.fwd(out_buf, in);
    return out_buf;
  };
  const Eigen::Index rows = input.rows();
  const Eigen::Index cols = input.cols();
  ComplexPlane<Scalar> tmp(rows, cols);
  std::vector<std::complex<Scalar>> in_buf(static_cast<std::size_t>(cols));
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) in_buf[x] = input(y, x);
    const auto& row = transform(in_buf);
    for (Eigen::Index x = 0; x < cols; ++x) tmp(y, x) = row[x];
  }
  in_buf.resize(static_cast<std::size_t>(rows));
  ComplexPlane<Scalar> out(rows, cols);
  for (Eigen::Index x = 0; x < cols; ++x) {
    for (Eigen::Index y = 0; y < rows; ++y) in_buf[y] = tmp(y, x);
    const auto& col = transform(in_buf);
    for (Eigen::Index y = 0; y < rows; ++y) out(y, x) = col[y];
  }
  return out;
}

template <typename Scalar, typename PlaneScalar>
FrequencyDecompositionT<Scalar> forward_dft(std::span<const PlaneT<PlaneScalar>> planes) {
  FrequencyDecompositionT<Scalar> result;
  for (const auto& plane : planes) {
    if (!plane.isFinite().all()) throw Error("forward_dft: non-finite input");
    const ComplexPlane<Scalar> spectrum = fftshift(dft2<Scalar>(plane.template cast<std::complex<Scalar>>()));
    result.amplitude.push_back(spectrum.abs());
    PlaneT<Scalar> phase = spectrum.arg();
    // std::arg returns (-pi, pi]; fold +pi onto -pi.
    phase = (phase >= Scalar(EIGEN_PI)).select(Scalar(-EIGEN_PI), phase);
    result.phase.push_back(std::move(phase));
  }
  return result;
}

// Recombines amplitude and phase; returns the real part of the inverse DFT.
template <typename Scalar>
std::vector<PlaneT<Scalar>> inverse_dft(const FrequencyDecompositionT<Scalar>& freq) {
  std::vector<PlaneT<Scalar>> planes;
  for (int c = 0; c < freq.channels(); ++c) {
    ComplexPlane<Scalar> spectrum(freq.rows(), freq.cols());
    const auto& amp = freq.amplitude[c];
    const auto& ph = freq.phase[c];
    for (Eigen::Index i = 0; i < amp.size(); ++i) spectrum.data()[i] = std::polar(amp.data()[i], ph.data()[i]);
    planes.push_back(dft2<Scalar>(ifftshift(spectrum), true).real());
  }
  return planes;
}

FrequencyDecomposition forward_dft(const ImageSample& image);

// Centered low-frequency box selecting the swapped amplitude region.
struct BandMask {
  double beta = 0.0;
  int half_rows = 0;
  int half_cols = 0;
  Mask mask;  // 1 inside the box
};

struct BandOptions {
  // When false the DC bin keeps the source amplitude (mean brightness preserved).
  bool swap_dc = true;
};

BandMask build_band_mask(double beta, int rows, int cols, const BandOptions& options = {});

struct AmplitudeGroup {
  std::vector<PlaneD> mean_amplitude;
  std::vector<std::string> member_ids;
  int group_index = 0;
};

// Seeded partition into k near-equal groups, one mean amplitude per group.
std::vector<AmplitudeGroup> average_amplitude(std::span<const ImageSample> images, int k, std::uint64_t seed);

// Mixed-amplitude synthesis before clipping: real part of the inverse
// transform of (M * group + (1 - M) * A_src, P_src).
std::vector<PlaneD> synthesize_planes(const ImageSample& src, const AmplitudeGroup& amp, double beta,
                                      const BandOptions& options = {});

// Clipped synthesis; the label is carried over and the domain flipped to the
// matching synth tag.
ImageSample stylize(const ImageSample& src, const AmplitudeGroup& amp, double beta,
                    const BandOptions& options = {});

// n betas x k groups synthesized samples per input, in input-major order.
std::vector<ImageSample> expand_dataset(std::span<const ImageSample> samples, std::span<const double> betas,
                                        std::span<const AmplitudeGroup> groups, const BandOptions& options = {});

}  // namespace fsuda
