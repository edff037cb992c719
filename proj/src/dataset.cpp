#include "lam/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lam/analysis.hpp"
#include "lam/image_io.hpp"
#include "lam/parallel.hpp"
#include "lam/rng.hpp"

namespace lam {

Tensor crop_image(const Tensor& image, int y, int x, int h, int w) {
  require_image(image, "image");
  if (h <= 0 || w <= 0 || y < 0 || x < 0 || y + h > image.dim(1) || x + w > image.dim(2))
    raise(ErrorKind::range, "crop window outside image " + shape_string(image.shape()));
  Tensor out({image.dim(0), h, w});
  for (int c = 0; c < image.dim(0); ++c) out.channel(c) = image.channel(c).block(y, x, h, w);
  return out;
}

namespace {

struct Taps {
  int first = 0;
  std::vector<double> weights;
};

std::vector<Taps> resample_taps(int in_size, int scale) {
  const int out_size = in_size / scale;
  std::vector<Taps> taps(static_cast<std::size_t>(out_size));
  const double support = 2.0 * scale;
  for (int o = 0; o < out_size; ++o) {
    const double centre = (o + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::floor(centre - support)) + 1;
    const int hi = static_cast<int>(std::ceil(centre + support)) - 1;
    Taps& t = taps[static_cast<std::size_t>(o)];
    t.first = lo;
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) {
      const double w = bicubic_weight((i - centre) / scale);
      t.weights.push_back(w);
      total += w;
    }
    for (double& w : t.weights) w /= total;
  }
  return taps;
}

}  // namespace

Tensor downsample(const Tensor& hr, int scale) {
  require_image(hr, "HR image");
  if (scale < 1) raise(ErrorKind::dimension, "scale must be >= 1");
  if (hr.dim(1) % scale != 0 || hr.dim(2) % scale != 0)
    raise(ErrorKind::dimension, "HR size " + shape_string(hr.shape()) + " not divisible by scale " +
                                    std::to_string(scale));
  if (scale == 1) return hr;
  const int c = hr.dim(0), h = hr.dim(1), w = hr.dim(2);
  const int oh = h / scale, ow = w / scale;
  const auto ty = resample_taps(h, scale), tx = resample_taps(w, scale);
  Tensor out({c, oh, ow});
  Eigen::ArrayXXd rows(h, ow);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y)
      for (int o = 0; o < ow; ++o) {
        const Taps& t = tx[static_cast<std::size_t>(o)];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k)
          acc += t.weights[k] * hr(ch, y, std::clamp(t.first + static_cast<int>(k), 0, w - 1));
        rows(y, o) = acc;
      }
    for (int o = 0; o < oh; ++o)
      for (int x = 0; x < ow; ++x) {
        const Taps& t = ty[static_cast<std::size_t>(o)];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k)
          acc += t.weights[k] * rows(std::clamp(t.first + static_cast<int>(k), 0, h - 1), x);
        out(ch, o, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
  }
  return out;
}

ImageRecord make_record(std::string id, const Tensor& hr, int scale, int patch) {
  require_image(hr, "HR image");
  ImageRecord r;
  r.id = std::move(id);
  r.scale = scale;
  r.hr = crop_image(hr, 0, 0, hr.dim(1) / scale * scale, hr.dim(2) / scale * scale);
  r.lr = downsample(r.hr, scale);
  r.center_patch = PatchDetector::centered(r.hr.dim(1), r.hr.dim(2), patch);
  return r;
}

Tensor synthesize_image(int index, int h, int w, std::uint64_t seed) {
  Rng rng(seed * 7919 + static_cast<std::uint64_t>(index));
  auto colour = [&] {
    return Eigen::Array3d(rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95));
  };
  const Eigen::Array3d fg = colour(), bg = colour();
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double period = rng.uniform(3.0, 9.0);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double cy = rng.uniform(0.3, 0.7) * h, cx = rng.uniform(0.3, 0.7) * w;

  std::vector<std::array<double, 5>> rects;  // y0, x0, y1, x1, shade
  for (int i = 0; i < 24; ++i) {
    const double y0 = rng.uniform(0, h), x0 = rng.uniform(0, w);
    rects.push_back({y0, x0, y0 + rng.uniform(4, h / 3.0), x0 + rng.uniform(4, w / 3.0), rng.uniform()});
  }

  Tensor out({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = x * ca + y * sa;
      double t = 0.0;  // blend weight of the foreground colour
      switch (index % 6) {
        case 0:  // oriented stripes
          t = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * u / period);
          break;
        case 1: {  // grid lines
          const double v = -x * sa + y * ca;
          const double fu = std::fmod(std::abs(u), period), fv = std::fmod(std::abs(v), period);
          t = (fu < 1.5 || fv < 1.5) ? 1.0 : 0.0;
          break;
        }
        case 2: {  // concentric rings
          const double r = std::hypot(y - cy, x - cx);
          t = std::sin(2.0 * std::numbers::pi * r / period) > 0.0 ? 1.0 : 0.0;
          break;
        }
        case 3: {  // bricks
          const int row = static_cast<int>(y / (period * 1.5));
          const double shift = (row % 2) * period * 1.5;
          const bool mortar = std::fmod(y, period * 1.5) < 1.5 || std::fmod(x + shift, period * 3.0) < 1.5;
          t = mortar ? 1.0 : 0.0;
          break;
        }
        case 4: {  // checkerboard
          const int a = static_cast<int>(std::floor(u / period));
          const int b = static_cast<int>(std::floor((-x * sa + y * ca) / period));
          t = ((a + b) % 2 == 0) ? 1.0 : 0.0;
          break;
        }
        default: {  // overlapping rectangles
          for (const auto& r : rects)
            if (y >= r[0] && y < r[2] && x >= r[1] && x < r[3]) t = r[4];
          break;
        }
      }
      const Eigen::Array3d px = bg + t * (fg - bg);
      for (int c = 0; c < 3; ++c) out(c, y, x) = static_cast<float>(std::round(std::clamp(px[c], 0.0, 1.0) * 255.0) / 255.0);
    }
  return out;
}

std::vector<NamedImage> load_image_dir(const std::filesystem::path& dir) {
  std::vector<NamedImage> out;
  for (const auto& path : list_images(dir)) out.push_back({path.stem().string(), load_image(path)});
  return out;
}

std::vector<std::size_t> selection_order(const Eigen::MatrixXd& psnr_db) {
  const auto n = static_cast<std::size_t>(psnr_db.rows());
  std::vector<double> neg_mean(n), neg_var(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::ArrayXd row = psnr_db.row(static_cast<Eigen::Index>(i)).array();
    const double mean = row.mean();
    neg_mean[i] = mean;  // ascending: lowest mean PSNR gets rank 1
    neg_var[i] = -(row - mean).square().mean();  // ascending on -variance: highest variance gets rank 1
  }
  const auto mean_rank = average_ranks(neg_mean), var_rank = average_ranks(neg_var);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = mean_rank[a] + var_rank[a], sb = mean_rank[b] + var_rank[b];
    if (sa != sb) return sa < sb;
    return mean_rank[a] < mean_rank[b];
  });
  return order;
}

CurationReport curate(std::span<const NamedImage> hr_images, std::span<const SRNetwork> models, int count,
                      int sub_image, int scale, std::uint64_t seed, int jobs) {
  if (models.size() < 2) raise(ErrorKind::data, "curation needs at least two models");
  if (count < 1) raise(ErrorKind::config, "count must be >= 1");
  if (sub_image < 16 || sub_image % scale != 0)
    raise(ErrorKind::config, "sub_image must be >= 16 and a multiple of the scale");
  for (const auto& m : models)
    if (m.scale() != scale) raise(ErrorKind::config, "model scale does not match --scale");

  struct Candidate {
    std::string id;
    std::size_t image;
    int y, x;
  };
  std::vector<Candidate> candidates;
  Rng rng(seed);
  const int stride = sub_image / 2, jitter = sub_image / 8;
  for (std::size_t i = 0; i < hr_images.size(); ++i) {
    const Tensor& img = hr_images[i].image;
    require_image(img, "HR image");
    const int h = img.dim(1), w = img.dim(2);
    for (int gy = 0; gy + sub_image <= h; gy += stride)
      for (int gx = 0; gx + sub_image <= w; gx += stride) {
        const int y = std::clamp(gy + static_cast<int>(rng.below(2 * jitter + 1)) - jitter, 0, h - sub_image);
        const int x = std::clamp(gx + static_cast<int>(rng.below(2 * jitter + 1)) - jitter, 0, w - sub_image);
        candidates.push_back({hr_images[i].id + "_y" + std::to_string(y) + "_x" + std::to_string(x), i, y, x});
      }
  }
  if (candidates.size() < static_cast<std::size_t>(count))
    raise(ErrorKind::data, "only " + std::to_string(candidates.size()) + " candidate sub-images for count " +
                               std::to_string(count));

  Eigen::MatrixXd psnr_db(static_cast<Eigen::Index>(candidates.size()), static_cast<Eigen::Index>(models.size()));
  parallel_for(candidates.size(), jobs, [&](std::size_t k) {
    const Candidate& c = candidates[k];
    const Tensor hr = crop_image(hr_images[c.image].image, c.y, c.x, sub_image, sub_image);
    const Tensor lr = downsample(hr, scale);
    for (std::size_t m = 0; m < models.size(); ++m) {
      Tensor sr = models[m].infer(lr);
      sr.data() = sr.data().max(0.0f).min(1.0f);
      psnr_db(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = std::min(psnr(sr, hr), 100.0);
    }
  });

  const auto order = selection_order(psnr_db);
  CurationReport report;
  report.candidates.resize(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const Eigen::ArrayXd row = psnr_db.row(static_cast<Eigen::Index>(k)).array();
    auto& s = report.candidates[k];
    s.id = candidates[k].id;
    s.mean_psnr_db = row.mean();
    s.var_psnr = (row - row.mean()).square().mean();
  }
  for (std::size_t r = 0; r < order.size(); ++r) {
    auto& s = report.candidates[order[r]];
    s.rank = static_cast<int>(r) + 1;
    s.selected = r < static_cast<std::size_t>(count);
    if (s.selected) {
      const Candidate& c = candidates[order[r]];
      report.selected_ids.push_back(c.id);
      report.selected.push_back(
          make_record(c.id, crop_image(hr_images[c.image].image, c.y, c.x, sub_image, sub_image), scale));
    }
  }
  return report;
}

CurationReport curate(const std::filesystem::path& hr_dir, std::span<const SRNetwork> models, int count,
                      int sub_image, int scale, std::uint64_t seed, int jobs) {
  const auto images = load_image_dir(hr_dir);
  if (images.empty()) raise(ErrorKind::data, "no images in " + hr_dir.string());
  return curate(std::span<const NamedImage>(images), models, count, sub_image, scale, seed, jobs);
}

}  // namespace lam
