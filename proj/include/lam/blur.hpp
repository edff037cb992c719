#pragma once

#include <vector>

#include "lam/tensor.hpp"

namespace lam {

/// Index into [0, n) with mirror reflection that does not repeat the edge
/// sample (... 2 1 | 0 1 2 ... n-1 | n-2 ...). Valid for any offset.
int reflect_index(int i, int n);

/// Normalized 1-D Gaussian taps over [-radius, radius]. sigma == 0 gives the
/// unit impulse.
std::vector<double> gaussian_kernel1d(double sigma, int radius);

/// Default truncation radius ceil(4 sigma).
int default_blur_radius(double sigma);

/// Depthwise Gaussian blur with reflect padding, separable, accumulated in
/// double. sigma == 0 returns the input unchanged.
Tensor gaussian_blur(const Tensor& image, double sigma, int radius);

}  // namespace lam
