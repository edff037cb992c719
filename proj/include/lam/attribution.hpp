#pragma once

#include <vector>

#include "lam/network.hpp"

namespace lam {

/// Gradient-energy detector over an l x l patch of the SR output. (x, y) is the
/// top-left corner; x indexes columns.
struct PatchDetector {
  int x = 0;
  int y = 0;
  int l = 16;

  /// Patch of side l centred in an h x w output.
  static PatchDetector centered(int h, int w, int l = 16);
  void validate(int h, int w) const;
};

enum class BaselineKind { gaussian_blur, black };
enum class PathKind { progressive_blur, linear };

struct PathConfig {
  BaselineKind baseline = BaselineKind::gaussian_blur;
  PathKind path = PathKind::progressive_blur;
  double sigma = 4.0;           // LR pixels
  int steps = 100;
  int blur_kernel_radius = -1;  // < 0 selects ceil(4 sigma)
  int jobs = 1;                 // worker threads for the per-step gradients

  int radius() const;
  void validate() const;
};

struct AttributionMap {
  Tensor values;  // per-channel, LR shaped
  Map2D reduced;  // channel sum
  bool has_completeness = false;
  double completeness_residual = 0.0;  // |sum(values) - (d_input - d_baseline)|
  double d_input = 0.0;
  double d_baseline = 0.0;

  double total() const;
  /// completeness_residual / |d_input - d_baseline|; 0 when both vanish.
  double completeness_relative() const;
};

struct PathDiagnostics {
  std::vector<double> alphas;                  // k/m, k = 0..m
  std::vector<double> detector_curve;          // D(F(gamma(alpha)))
  std::vector<double> path_speed;              // m * ||gamma((k+1)/m) - gamma(k/m)||, last entry repeats
  std::vector<double> cumulative_attribution;  // running sum of per-step totals, starts at 0
};

/// Sum over patch pixels and channels of |I(i+1,j) - I(i,j)| + |I(i,j+1) - I(i,j)|.
/// Differences that would leave the image count as 0.
template <typename Scalar>
Var<Scalar> detect(Var<Scalar> sr, const PatchDetector& det);

double detect(const Tensor& sr, const PatchDetector& det);

Tensor make_baseline(const Tensor& lr, const PathConfig& cfg);
Tensor path_point(const Tensor& lr, const PathConfig& cfg, double alpha);

/// Local attribution map: left-endpoint Riemann sum of the path integral,
/// sum_k grad D(F(gamma(k/m))) * (gamma((k+1)/m) - gamma(k/m)).
AttributionMap lam(const SRNetwork& net, const Tensor& lr, const PatchDetector& det, const PathConfig& cfg);

/// Same path integration, also returning the per-step curves.
AttributionMap lam(const SRNetwork& net, const Tensor& lr, const PatchDetector& det, const PathConfig& cfg,
                   PathDiagnostics* diagnostics);

PathDiagnostics diagnostics(const SRNetwork& net, const Tensor& lr, const PatchDetector& det, const PathConfig& cfg);

AttributionMap vanilla_gradient(const SRNetwork& net, const Tensor& lr, const PatchDetector& det);
AttributionMap grad_times_input(const SRNetwork& net, const Tensor& lr, const PatchDetector& det);

/// LR window [y0, y1) x [x0, x1) outside which attributions must vanish:
/// the LR pre-image of the detector footprint dilated by the receptive radius.
struct Window {
  int y0, y1, x0, x1;
  bool contains(int y, int x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
};
Window attribution_window(const SRNetwork& net, const PatchDetector& det, int lr_h, int lr_w);

}  // namespace lam
