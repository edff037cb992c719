#include "lam/attribution.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "lam/blur.hpp"
#include "lam/parallel.hpp"

namespace lam {

PatchDetector PatchDetector::centered(int h, int w, int l) {
  PatchDetector det{(w - l) / 2, (h - l) / 2, l};
  det.validate(h, w);
  return det;
}

void PatchDetector::validate(int h, int w) const {
  if (l < 2) raise(ErrorKind::range, "patch size must be >= 2");
  if (x < 0 || y < 0 || x + l > w || y + l > h)
    raise(ErrorKind::range, "patch [" + std::to_string(x) + "," + std::to_string(x + l) + ")x[" + std::to_string(y) +
                                "," + std::to_string(y + l) + ") lies outside the " + std::to_string(w) + "x" +
                                std::to_string(h) + " SR output");
}

int PathConfig::radius() const { return blur_kernel_radius >= 0 ? blur_kernel_radius : default_blur_radius(sigma); }

void PathConfig::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) raise(ErrorKind::config, "sigma must be finite and >= 0");
  if (steps < 1) raise(ErrorKind::config, "steps must be >= 1");
  if (jobs < 1) raise(ErrorKind::config, "jobs must be >= 1");
  if (path == PathKind::progressive_blur && baseline != BaselineKind::gaussian_blur)
    raise(ErrorKind::config, "the progressive-blur path requires the Gaussian-blur baseline");
}

double AttributionMap::total() const { return values.data().cast<double>().sum(); }

double AttributionMap::completeness_relative() const {
  const double gap = std::abs(d_input - d_baseline);
  if (gap == 0.0) return completeness_residual == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return completeness_residual / gap;
}

template <typename Scalar>
Var<Scalar> detect(Var<Scalar> sr, const PatchDetector& det) {
  const auto& v = sr.value();
  require_image(v, "detector input");
  const int h = v.dim(1), w = v.dim(2);
  det.validate(h, w);
  const int l = det.l;
  const int cols = std::min(l, w - 1 - det.x);
  const int rows = std::min(l, h - 1 - det.y);
  std::optional<Var<Scalar>> total;
  if (cols > 0)
    total = sum(abs(crop(sr, det.y, det.x + 1, l, cols) - crop(sr, det.y, det.x, l, cols)));
  if (rows > 0) {
    auto vertical = sum(abs(crop(sr, det.y + 1, det.x, rows, l) - crop(sr, det.y, det.x, rows, l)));
    total = total ? add(*total, vertical) : vertical;
  }
  if (!total) raise(ErrorKind::range, "detector patch has no interior differences");
  return *total;
}

template Var<float> detect(Var<float>, const PatchDetector&);
template Var<double> detect(Var<double>, const PatchDetector&);

double detect(const Tensor& sr, const PatchDetector& det) {
  Graph<double> graph;
  return detect(graph.constant(sr.cast<double>()), det).value()[0];
}

Tensor make_baseline(const Tensor& lr, const PathConfig& cfg) {
  cfg.validate();
  require_image(lr, "LR image");
  if (cfg.baseline == BaselineKind::black) return Tensor(lr.shape());
  return gaussian_blur(lr, cfg.sigma, cfg.radius());
}

Tensor path_point(const Tensor& lr, const PathConfig& cfg, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) raise(ErrorKind::range, "alpha must lie in [0, 1]");
  cfg.validate();
  require_image(lr, "LR image");
  if (alpha == 1.0) return lr;
  if (cfg.path == PathKind::progressive_blur) return gaussian_blur(lr, cfg.sigma * (1.0 - alpha), cfg.radius());
  Tensor base = make_baseline(lr, cfg);
  if (alpha == 0.0) return base;
  const Eigen::ArrayXd b = base.data().cast<double>();
  return Tensor(lr.shape(), (b + alpha * (lr.data().cast<double>() - b)).cast<float>().eval());
}

namespace {

struct StepResult {
  Tensor::Storage grad;
  double detector = 0.0;
};

// Gradient of D(F(x)) with respect to x, plus the detector value.
StepResult detector_gradient(const SRNetwork& net, const Tensor& x, const PatchDetector& det, bool with_grad) {
  Graph<float> graph;
  Tensor input = x;
  input.set_requires_grad(with_grad);
  auto in = graph.leaf(std::move(input));
  auto d = detect(net.forward(graph, in), det);
  StepResult r;
  r.detector = d.value()[0];
  if (with_grad) {
    graph.backward(d);
    r.grad = graph.grad(in);
  }
  return r;
}

void check_inputs(const SRNetwork& net, const Tensor& lr, const PatchDetector& det) {
  require_image(lr, "LR image");
  det.validate(lr.dim(1) * net.scale(), lr.dim(2) * net.scale());
}

AttributionMap finish_map(Tensor values) {
  AttributionMap map;
  map.reduced = channel_sum(values);
  map.values = std::move(values);
  return map;
}

}  // namespace

AttributionMap lam(const SRNetwork& net, const Tensor& lr, const PatchDetector& det, const PathConfig& cfg,
                   PathDiagnostics* diag) {
  cfg.validate();
  check_inputs(net, lr, det);
  const int m = cfg.steps;

  std::vector<Tensor> points(static_cast<std::size_t>(m) + 1);
  parallel_for(points.size(), cfg.jobs,
               [&](std::size_t k) { points[k] = path_point(lr, cfg, static_cast<double>(k) / m); });

  std::vector<StepResult> steps(points.size());
  parallel_for(points.size(), cfg.jobs, [&](std::size_t k) {
    try {
      steps[k] = detector_gradient(net, points[k], det, k < static_cast<std::size_t>(m));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numeric) raise(ErrorKind::numeric, "path step " + std::to_string(k) + ": " + e.what());
      throw;
    }
  });

  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(lr.size());
  std::vector<double> step_totals(static_cast<std::size_t>(m));
  std::vector<double> speeds(static_cast<std::size_t>(m));
  for (std::size_t k = 0; k < static_cast<std::size_t>(m); ++k) {
    const Eigen::ArrayXd delta = (points[k + 1].data().cast<double>() - points[k].data().cast<double>());
    const Eigen::ArrayXd contrib = steps[k].grad.cast<double>() * delta;
    acc += contrib;
    step_totals[k] = contrib.sum();
    speeds[k] = m * delta.matrix().norm();
  }

  AttributionMap map = finish_map(Tensor(lr.shape(), acc.cast<float>().eval()));
  if (!map.values.all_finite()) raise(ErrorKind::numeric, "non-finite attribution values");
  map.d_baseline = steps.front().detector;
  map.d_input = steps.back().detector;
  map.has_completeness = true;
  map.completeness_residual = std::abs(map.total() - (map.d_input - map.d_baseline));

  if (diag) {
    diag->alphas.resize(points.size());
    diag->detector_curve.resize(points.size());
    diag->path_speed.assign(speeds.begin(), speeds.end());
    diag->path_speed.push_back(speeds.back());
    diag->cumulative_attribution.assign(1, 0.0);
    for (std::size_t k = 0; k < points.size(); ++k) {
      diag->alphas[k] = static_cast<double>(k) / m;
      diag->detector_curve[k] = steps[k].detector;
    }
    for (double t : step_totals) diag->cumulative_attribution.push_back(diag->cumulative_attribution.back() + t);
  }
  return map;
}

AttributionMap lam(const SRNetwork& net, const Tensor& lr, const PatchDetector& det, const PathConfig& cfg) {
  return lam(net, lr, det, cfg, nullptr);
}

PathDiagnostics diagnostics(const SRNetwork& net, const Tensor& lr, const PatchDetector& det, const PathConfig& cfg) {
  PathDiagnostics diag;
  lam(net, lr, det, cfg, &diag);
  return diag;
}

AttributionMap vanilla_gradient(const SRNetwork& net, const Tensor& lr, const PatchDetector& det) {
  check_inputs(net, lr, det);
  StepResult r = detector_gradient(net, lr, det, true);
  AttributionMap map = finish_map(Tensor(lr.shape(), std::move(r.grad)));
  map.d_input = r.detector;
  return map;
}

AttributionMap grad_times_input(const SRNetwork& net, const Tensor& lr, const PatchDetector& det) {
  AttributionMap map = vanilla_gradient(net, lr, det);
  map.values.data() *= lr.data();
  map.reduced = channel_sum(map.values);
  return map;
}

Window attribution_window(const SRNetwork& net, const PatchDetector& det, int lr_h, int lr_w) {
  const int s = net.scale();
  const int r = (receptive_field(net) - 1) / 2;
  const int sr_h = lr_h * s, sr_w = lr_w * s;
  // The detector reads SR pixels [y, y+l] (forward differences reach one past the patch).
  const int y_last = std::min(det.y + det.l, sr_h - 1) / s;
  const int x_last = std::min(det.x + det.l, sr_w - 1) / s;
  return {std::max(det.y / s - r, 0), std::min(y_last + r + 1, lr_h), std::max(det.x / s - r, 0),
          std::min(x_last + r + 1, lr_w)};
}

}  // namespace lam
