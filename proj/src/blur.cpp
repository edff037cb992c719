#include "lam/blur.hpp"

#include <cmath>

namespace lam {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel1d(double sigma, int radius) {
  if (sigma < 0.0 || !std::isfinite(sigma)) raise(ErrorKind::range, "blur sigma must be finite and >= 0");
  if (radius < 0) raise(ErrorKind::range, "blur radius must be >= 0");
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1), 0.0);
  if (sigma == 0.0) {
    taps[static_cast<std::size_t>(radius)] = 1.0;
    return taps;
  }
  double total = 0.0;
  for (int d = -radius; d <= radius; ++d) {
    const double v = std::exp(-0.5 * (d * d) / (sigma * sigma));
    taps[static_cast<std::size_t>(d + radius)] = v;
    total += v;
  }
  for (double& v : taps) v /= total;
  return taps;
}

int default_blur_radius(double sigma) { return static_cast<int>(std::ceil(4.0 * sigma)); }

Tensor gaussian_blur(const Tensor& image, double sigma, int radius) {
  require_image(image, "blur input");
  const auto taps = gaussian_kernel1d(sigma, radius);
  if (sigma == 0.0) return image;
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  std::vector<double> row(static_cast<std::size_t>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d)
          acc += taps[static_cast<std::size_t>(d + radius)] * image(ch, y, reflect_index(x + d, w));
        row[static_cast<std::size_t>(y) * w + x] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d)
          acc += taps[static_cast<std::size_t>(d + radius)] *
                 row[static_cast<std::size_t>(reflect_index(y + d, h)) * w + x];
        out(ch, y, x) = static_cast<float>(acc);
      }
  }
  return out;
}

}  // namespace lam
