#pragma once

// Slow reference implementations for the test suites.

#include "fsuda/core/types.hpp"
#include "fsuda/fourier/stylizer.hpp"
#include "fsuda/nn/tensor.hpp"

#include <complex>
#include <functional>
#include <vector>

namespace fsuda::oracle {

// Centered double-sum DFT of one plane.
ComplexPlane<double> naive_centered_dft(const PlaneD& plane);

double brute_dice(const Mask& a, const Mask& b);
Mask brute_boundary(const Mask& mask, int connectivity);
// Mean of nearest boundary distances over both boundary sets, O(n^2) pairs.
double brute_asd(const Mask& a, const Mask& b, int connectivity);

// Masked average pooling with explicit loops.
Eigen::VectorXd loop_prototype(const nn::Matrix<double>& feature, const Mask& mask, bool divide_by_area);

// Central finite difference of f at x along coordinate i.
double central_difference(const std::function<double()>& f, double& x, double step);

// |a - n| / max(|a| + |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

// Least-squares fit constrained to rise then fall (peak anywhere, monotone
// curves included). Returns fitted values.
std::vector<double> unimodal_fit(const std::vector<double>& values);
// Pool-adjacent-violators fit, non-decreasing.
std::vector<double> isotonic_increasing(const std::vector<double>& values);

}  // namespace fsuda::oracle
