#pragma once

#include <span>
#include <vector>

#include "lam/attribution.hpp"

namespace lam {

struct DiffusionStats {
  double gini = 0.0;
  double di = 100.0;
  bool degenerate = false;  // all-zero map
};

/// Gini coefficient of the absolute values, via the sorted closed form. An
/// all-zero input has Gini 0.
template <typename Derived>
double gini(const Eigen::ArrayBase<Derived>& values);

double gini(std::span<const double> values);

/// Gini of the absolute channel-summed map.
double gini(const AttributionMap& map);

/// (1 - g) * 100. Throws a range error outside [0, 1].
double diffusion_index(double g);

DiffusionStats diffusion_stats(const AttributionMap& map);

/// Reduced map divided by its largest magnitude, then made absolute. The
/// all-zero map is returned unchanged.
Map2D normalize_for_viz(const AttributionMap& map);
Map2D normalize_for_viz(const Map2D& reduced);

struct HeatMap {
  Map2D grid;
  double bandwidth = 0.0;
  int rows = 0;  // extent: pixel rows [0, rows), columns [0, cols)
  int cols = 0;
};

/// Gaussian KDE over pixel coordinates weighted by |map| (summed over maps),
/// evaluated on the pixel grid. Mass leaving the grid is reflected back at the
/// borders, so the grid sums to the input mass.
HeatMap kde_heatmap(std::span<const Map2D> maps, double bandwidth);

struct AreaOfInterest {
  Map2D consensus;   // 1 where >= 80% of models exceed the threshold
  Map2D difference;  // 1 where some high-DI model exceeds it and no low-DI model does
};

/// Models are split by DI into the top and bottom halves (the median model of
/// an odd count belongs to neither).
AreaOfInterest area_of_interest(std::span<const Map2D> maps, double threshold = 0.1);

/// 10 log10(1 / MSE) for images in [0, 1]; +infinity for identical inputs.
double psnr(const Tensor& a, const Tensor& b);

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
};

/// 1-based ranks; ties share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

Correlation correlate(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------

template <typename Derived>
double gini(const Eigen::ArrayBase<Derived>& values) {
  std::vector<double> v(static_cast<std::size_t>(values.size()));
  Eigen::Index i = 0;
  for (auto& e : v) e = static_cast<double>(values.derived().reshaped()(i++));
  return gini(std::span<const double>(v));
}

}  // namespace lam
