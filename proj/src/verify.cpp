#include "lam/verify.hpp"

#include <cmath>

#include "lam/rng.hpp"

namespace lam {

namespace {

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-9) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

template <typename Eval, typename Analytic>
GradCheckResult run_check(std::vector<BasicTensor<double>>& inputs, const Eval& eval, const Analytic& analytic,
                          int coordinates, std::uint64_t seed, double step, double tolerance,
                          std::span<const Eigen::Index> pool = {}) {
  GradCheckResult result;
  result.tolerance = tolerance;
  Eigen::Index total = 0;
  for (const auto& t : inputs) total += t.size();
  if (total == 0) return result;
  Rng rng(seed);
  const double f0 = eval(inputs);
  for (int attempt = 0; attempt < 8 * coordinates && result.checked < coordinates; ++attempt) {
    Eigen::Index flat = pool.empty() ? static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(total)))
                                     : pool[rng.below(pool.size())];
    std::size_t which = 0;
    while (flat >= inputs[which].size()) flat -= inputs[which++].size();
    double& x = inputs[which][flat];
    const double saved = x;
    x = saved + step;
    const double fp = eval(inputs);
    x = saved - step;
    const double fm = eval(inputs);
    x = saved;
    // Curvature makes the one-sided slopes differ by ~step * f''; that gap
    // halves with the step and the central differences at both steps agree.
    // A kink inside the stencil breaks one of the two.
    const double forward = (fp - f0) / step, backward = (f0 - fm) / step;
    const double gap = std::abs(forward - backward);
    const double floor = 1e-7 * std::max({1.0, std::abs(forward), std::abs(backward)});
    if (gap > floor) {
      const double half = 0.5 * step;
      x = saved + half;
      const double fph = eval(inputs);
      x = saved - half;
      const double fmh = eval(inputs);
      x = saved;
      const double gap_half = std::abs((fph - f0) / half - (f0 - fmh) / half);
      const double central = (fp - fm) / (2.0 * step), central_half = (fph - fmh) / step;
      const bool curvature_only =
          std::abs(gap_half - 0.5 * gap) <= 0.1 * gap + floor &&
          std::abs(central - central_half) <= 1e-4 * std::max(std::abs(central), std::abs(central_half)) + floor;
      if (!curvature_only) {
        ++result.skipped_kinks;
        continue;
      }
    }
    const double numeric = (fp - fm) / (2.0 * step);
    result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic(which, flat), numeric));
    ++result.checked;
  }
  return result;
}

}  // namespace

GradCheckResult gradcheck(const ScalarFunction& fn, std::vector<BasicTensor<double>> inputs, int coordinates,
                          std::uint64_t seed, double step, double tolerance) {
  auto eval = [&](const std::vector<BasicTensor<double>>& values) {
    Graph<double> graph;
    std::vector<Var<double>> vars;
    for (const auto& v : values) vars.push_back(graph.constant(v));
    const auto out = fn(graph, vars);
    if (out.value().size() != 1) raise(ErrorKind::contract, "gradcheck function must return a scalar");
    return out.value()[0];
  };
  Graph<double> graph;
  std::vector<Var<double>> vars;
  for (auto v : inputs) vars.push_back(graph.leaf(std::move(v.set_requires_grad(true))));
  graph.backward(fn(graph, vars));
  std::vector<BasicTensor<double>::Storage> grads;
  for (const auto& v : vars) grads.push_back(graph.grad(v));
  return run_check(inputs, eval,
                   [&](std::size_t which, Eigen::Index i) { return grads[which][i]; }, coordinates, seed, step,
                   tolerance);
}

GradCheckResult gradcheck_network(const SRNetwork& net, const Tensor& lr, const PatchDetector& det,
                                  int coordinates, std::uint64_t seed, double step, double tolerance) {
  Graph<float> graph;
  auto in = graph.leaf(Tensor(lr).set_requires_grad(true));
  graph.backward(detect(net.forward(graph, in), det));
  const Tensor::Storage grad = graph.grad(in);

  // Only coordinates that can influence the patch are worth sampling.
  const Window win = attribution_window(net, det, lr.dim(1), lr.dim(2));
  std::vector<Eigen::Index> pool;
  for (int c = 0; c < lr.dim(0); ++c)
    for (int y = win.y0; y < win.y1; ++y)
      for (int x = win.x0; x < win.x1; ++x) pool.push_back((static_cast<Eigen::Index>(c) * lr.dim(1) + y) * lr.dim(2) + x);

  std::vector<BasicTensor<double>> inputs{lr.cast<double>()};
  auto eval = [&](const std::vector<BasicTensor<double>>& values) {
    Graph<double> g;
    return detect(net.forward(g, g.constant(values[0])), det).value()[0];
  };
  return run_check(inputs, eval, [&](std::size_t, Eigen::Index i) { return static_cast<double>(grad[i]); },
                   coordinates, seed, step, tolerance, pool);
}

std::vector<LadderEntry> completeness_ladder(const SRNetwork& net, const Tensor& lr, const PatchDetector& det,
                                             PathConfig cfg, std::span<const int> steps) {
  std::vector<LadderEntry> out;
  for (int m : steps) {
    cfg.steps = m;
    const AttributionMap map = lam(net, lr, det, cfg);
    out.push_back({m, map.completeness_residual, map.completeness_relative()});
  }
  return out;
}

ConfinementResult check_confinement(const SRNetwork& net, const AttributionMap& map, const PatchDetector& det) {
  ConfinementResult r;
  const int h = map.values.dim(1), w = map.values.dim(2);
  r.window = attribution_window(net, det, h, w);
  for (int c = 0; c < map.values.dim(0); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (!r.window.contains(y, x)) r.max_outside = std::max(r.max_outside, std::abs(double(map.values(c, y, x))));
  return r;
}

}  // namespace lam
