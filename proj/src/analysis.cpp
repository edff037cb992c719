#include "lam/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace lam {

double gini(std::span<const double> values) {
  if (values.empty()) raise(ErrorKind::data, "gini of an empty map");
  std::vector<double> v(values.size());
  std::transform(values.begin(), values.end(), v.begin(), [](double x) { return std::abs(x); });
  std::sort(v.begin(), v.end());
  // sum_i sum_j |g_i - g_j| = 2 sum_i (2i - n - 1) g_(i), i 1-based over the sorted values.
  const double n = static_cast<double>(v.size());
  double weighted = 0.0, total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * v[i];
    total += v[i];
  }
  if (total == 0.0) return 0.0;
  return std::clamp(weighted / (n * total), 0.0, 1.0);
}

double gini(const AttributionMap& map) { return gini(map.reduced); }

double diffusion_index(double g) {
  if (!(g >= 0.0 && g <= 1.0)) raise(ErrorKind::range, "Gini coefficient must lie in [0, 1]");
  return (1.0 - g) * 100.0;
}

DiffusionStats diffusion_stats(const AttributionMap& map) {
  DiffusionStats s;
  s.degenerate = (map.reduced == 0.0f).all();
  s.gini = gini(map);
  s.di = diffusion_index(s.gini);
  return s;
}

Map2D normalize_for_viz(const Map2D& reduced) {
  const float peak = reduced.abs().maxCoeff();
  if (!(peak > 0.0f)) return reduced.abs();
  return (reduced / peak).abs();
}

Map2D normalize_for_viz(const AttributionMap& map) { return normalize_for_viz(map.reduced); }

namespace {

// Sampled 1-D Gaussian from source position q to every grid position, with
// mirror images about the half-pixel borders (-0.5 and n-0.5), renormalized so
// narrow bandwidths still conserve mass on the grid.
Eigen::ArrayXd folded_gaussian(int q, int n, double h) {
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(n);
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * h);
  const int reach = static_cast<int>(std::ceil(8.0 * h / n)) + 1;
  for (int k = -reach; k <= reach; ++k) {
    for (double src : {static_cast<double>(q) + 2.0 * k * n, -1.0 - q + 2.0 * k * n}) {
      for (int p = 0; p < n; ++p) {
        const double d = p - src;
        out[p] += norm * std::exp(-0.5 * d * d / (h * h));
      }
    }
  }
  return out / out.sum();
}

void require_same_shapes(std::span<const Map2D> maps) {
  if (maps.empty()) raise(ErrorKind::data, "no maps given");
  for (const auto& m : maps)
    if (m.rows() != maps[0].rows() || m.cols() != maps[0].cols())
      raise(ErrorKind::dimension, "maps do not share a shape");
}

}  // namespace

HeatMap kde_heatmap(std::span<const Map2D> maps, double bandwidth) {
  require_same_shapes(maps);
  if (!(bandwidth > 0.0)) raise(ErrorKind::range, "KDE bandwidth must be positive");
  const int rows = static_cast<int>(maps[0].rows()), cols = static_cast<int>(maps[0].cols());
  Eigen::ArrayXXd mass = Eigen::ArrayXXd::Zero(rows, cols);
  for (const auto& m : maps) mass += m.abs().cast<double>();

  std::vector<Eigen::ArrayXd> ky(static_cast<std::size_t>(rows)), kx(static_cast<std::size_t>(cols));
  for (int q = 0; q < rows; ++q) ky[static_cast<std::size_t>(q)] = folded_gaussian(q, rows, bandwidth);
  for (int q = 0; q < cols; ++q) kx[static_cast<std::size_t>(q)] = folded_gaussian(q, cols, bandwidth);

  Eigen::MatrixXd Ky(rows, rows), Kx(cols, cols);  // K(p, q)
  for (int q = 0; q < rows; ++q) Ky.col(q) = ky[static_cast<std::size_t>(q)].matrix();
  for (int q = 0; q < cols; ++q) Kx.col(q) = kx[static_cast<std::size_t>(q)].matrix();
  const Eigen::MatrixXd density = Ky * mass.matrix() * Kx.transpose();

  HeatMap out;
  out.grid = density.array().cast<float>();
  out.bandwidth = bandwidth;
  out.rows = rows;
  out.cols = cols;
  return out;
}

AreaOfInterest area_of_interest(std::span<const Map2D> maps, double threshold) {
  require_same_shapes(maps);
  const Eigen::Index rows = maps[0].rows(), cols = maps[0].cols();
  const std::size_t n = maps.size();

  std::vector<double> di(n);
  for (std::size_t i = 0; i < n; ++i) di[i] = diffusion_index(gini(maps[i]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return di[a] > di[b]; });
  const std::size_t half = n / 2;

  Eigen::ArrayXXi votes = Eigen::ArrayXXi::Zero(rows, cols);
  Eigen::ArrayXXi high = Eigen::ArrayXXi::Zero(rows, cols);
  Eigen::ArrayXXi low = Eigen::ArrayXXi::Zero(rows, cols);
  for (std::size_t r = 0; r < n; ++r) {
    const Eigen::ArrayXXi above = (maps[order[r]] > static_cast<float>(threshold)).cast<int>();
    votes += above;
    if (r < half) high += above;
    if (r >= n - half) low += above;
  }
  const int needed = static_cast<int>(std::ceil(0.8 * static_cast<double>(n) - 1e-9));
  AreaOfInterest out;
  out.consensus = (votes >= needed).cast<float>();
  out.difference = ((high > 0) && (low == 0)).cast<float>();
  return out;
}

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    raise(ErrorKind::dimension, "psnr: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const double mse = (a.data().cast<double>() - b.data().cast<double>()).square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y) {
  const Eigen::Map<const Eigen::ArrayXd> a(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::Map<const Eigen::ArrayXd> b(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::ArrayXd da = a - a.mean(), db = b - b.mean();
  const double sa = da.square().sum(), sb = db.square().sum();
  if (sa == 0.0 || sb == 0.0) raise(ErrorKind::data, "correlation undefined for zero-variance input");
  return (da * db).sum() / std::sqrt(sa * sb);
}

}  // namespace

Correlation correlate(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) raise(ErrorKind::dimension, "correlate: length mismatch");
  if (x.size() < 3) raise(ErrorKind::data, "correlate needs at least 3 points");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return {pearson(x, y), pearson(rx, ry)};
}

}  // namespace lam
