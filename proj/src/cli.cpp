#include "lam/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>

#include "lam/analysis.hpp"
#include "lam/attribution.hpp"
#include "lam/dataset.hpp"
#include "lam/image_io.hpp"
#include "lam/network.hpp"
#include "lam/parallel.hpp"
#include "lam/train.hpp"
#include "lam/verify.hpp"

namespace lam {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::io, "cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// CSV with a versioned first line and a fixed column header.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::string& kind, const std::vector<std::string>& columns) : out_(path) {
    if (!out_) raise(ErrorKind::io, "cannot write " + path.string());
    out_ << "#lam-csv/1 " << kind << '\n';
    row(columns);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

struct Context {
  std::vector<std::string> argv;
  std::ostream& out;
  std::ostream& err;
};

void write_manifest(const Context& ctx, const fs::path& dir, const std::string& command, const json& config,
                    std::uint64_t seed, const std::vector<fs::path>& inputs) {
  json m;
  m["tool"] = "lam";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["argv"] = ctx.argv;
  m["config"] = config;
  m["seed"] = seed;
  json digests = json::object();
  for (const auto& p : inputs) digests[p.string()] = sha256_file(p);
  m["inputs"] = digests;
  m["timestamp"] = utc_timestamp();
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
}

fs::path prepare_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::create_directories(out);
  return out;
}

std::vector<fs::path> weight_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) raise(ErrorKind::io, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".lamw") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

// Flags shared by the attribution commands.
struct PatchFlags {
  std::optional<int> x, y;
  int patch = 16;
  bool lr_coords = false;
  double sigma = 4.0;
  int steps = 100;
  std::string baseline = "blur";
  std::string path = "progressive";
  int jobs = 1;

  void add(CLI::App* app) {
    app->add_option("--x", x, "Patch left column (SR pixels; centred when omitted)");
    app->add_option("--y", y, "Patch top row (SR pixels; centred when omitted)");
    app->add_option("--patch", patch, "Patch side length in SR pixels")->capture_default_str();
    app->add_flag("--lr-coords", lr_coords, "Interpret --x/--y in LR pixels");
    app->add_option("--sigma", sigma, "Baseline blur width in LR pixels")->capture_default_str();
    app->add_option("--steps", steps, "Path integration steps")->capture_default_str();
    app->add_option("--baseline", baseline, "Baseline: blur or black")
        ->check(CLI::IsMember({"blur", "black"}))
        ->capture_default_str();
    app->add_option("--path", path, "Path: progressive or linear")
        ->check(CLI::IsMember({"progressive", "linear"}))
        ->capture_default_str();
    app->add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  }

  PathConfig config() const {
    PathConfig cfg;
    cfg.baseline = baseline == "black" ? BaselineKind::black : BaselineKind::gaussian_blur;
    cfg.path = path == "linear" ? PathKind::linear : PathKind::progressive_blur;
    cfg.sigma = sigma;
    cfg.steps = steps;
    cfg.jobs = std::max(1, jobs);
    cfg.validate();
    return cfg;
  }

  PatchDetector detector(int sr_h, int sr_w, int scale) const {
    PatchDetector det = PatchDetector::centered(sr_h, sr_w, patch);
    const int k = lr_coords ? scale : 1;
    if (x) det.x = *x * k;
    if (y) det.y = *y * k;
    det.validate(sr_h, sr_w);
    return det;
  }

  json to_json() const {
    return {{"x", x ? json(*x) : json()}, {"y", y ? json(*y) : json()}, {"patch", patch}, {"lr_coords", lr_coords},
            {"sigma", sigma}, {"steps", steps}, {"baseline", baseline}, {"path", path}, {"jobs", jobs}};
  }
};

Tensor to_gray_rgb(const Tensor& lr) {
  const int h = lr.dim(1), w = lr.dim(2), c = lr.dim(0);
  Tensor out({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float g = 0;
      for (int ch = 0; ch < c; ++ch) g += lr(ch, y, x);
      g /= static_cast<float>(c);
      for (int ch = 0; ch < 3; ++ch) out(ch, y, x) = g;
    }
  return out;
}

Tensor map_image(const Map2D& m) {
  Tensor t({1, static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  Eigen::Map<Map2D>(t.data().data(), m.rows(), m.cols()) = m;
  return t;
}

Tensor overlay(const Tensor& lr, const Map2D& a) {
  Tensor out = to_gray_rgb(lr);
  for (int y = 0; y < out.dim(1); ++y)
    for (int x = 0; x < out.dim(2); ++x) {
      const float alpha = 0.6f * a(y, x);
      for (int ch = 0; ch < 3; ++ch)
        out(ch, y, x) = (1.0f - alpha) * out(ch, y, x) + alpha * (ch == 0 ? 1.0f : 0.0f);
    }
  return out;
}

void check_compatible(const SRNetwork& net, const Tensor& lr) {
  require_image(lr, "input image");
  if (lr.dim(0) != net.input_channels())
    raise(ErrorKind::shape, "image has " + std::to_string(lr.dim(0)) + " channels, model expects " +
                                std::to_string(net.input_channels()));
}

// ---------------------------------------------------------------------------

struct RunFlags {
  std::string model, image, out;
  std::uint64_t seed = 0;
  PatchFlags patch;
};

int cmd_run(const Context& ctx, const RunFlags& f) {
  const fs::path dir = prepare_dir(f.out);
  const SRNetwork net = load_weights(f.model);
  const Tensor lr = load_image(f.image);
  check_compatible(net, lr);
  const int s = net.scale();
  const PatchDetector det = f.patch.detector(lr.dim(1) * s, lr.dim(2) * s, s);
  const PathConfig cfg = f.patch.config();

  PathDiagnostics diag;
  const AttributionMap map = lam::lam(net, lr, det, cfg, &diag);
  const DiffusionStats stats = diffusion_stats(map);
  const Map2D viz = normalize_for_viz(map);

  save_image(map_image(viz), dir / "attribution.png");
  save_image(overlay(lr, viz), dir / "overlay.png");
  {
    CsvWriter csv(dir / "diagnostics.csv", "diagnostics", {"k", "alpha", "detector", "path_speed", "cumulative"});
    for (std::size_t k = 0; k < diag.alphas.size(); ++k)
      csv.row({std::to_string(k), num(diag.alphas[k]), num(diag.detector_curve[k]), num(diag.path_speed[k]),
               num(diag.cumulative_attribution[k])});
  }
  {
    CsvWriter csv(dir / "stats.csv", "stats",
                  {"di", "gini", "degenerate", "completeness_residual", "completeness_rel", "d_input", "d_baseline",
                   "m", "sigma", "patch", "x", "y"});
    csv.row({num(stats.di), num(stats.gini), stats.degenerate ? "1" : "0", num(map.completeness_residual),
             num(map.completeness_relative()), num(map.d_input), num(map.d_baseline), std::to_string(cfg.steps),
             num(cfg.sigma), std::to_string(det.l), std::to_string(det.x), std::to_string(det.y)});
  }
  json config = f.patch.to_json();
  config["model"] = f.model;
  config["image"] = f.image;
  write_manifest(ctx, dir, "run", config, f.seed, {f.model, f.image});
  ctx.out << "DI " << num(stats.di) << (stats.degenerate ? " (degenerate)" : "") << "  completeness_rel "
          << num(map.completeness_relative()) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct BatchFlags {
  std::string images, hr, models, out;
  std::uint64_t seed = 0;
  PatchFlags patch;
};

int cmd_batch(const Context& ctx, const BatchFlags& f) {
  const fs::path dir = prepare_dir(f.out);
  const auto image_files = list_images(f.images);
  if (image_files.empty()) raise(ErrorKind::data, "no images in " + f.images);
  const auto model_files = weight_files(f.models);
  if (model_files.empty()) raise(ErrorKind::data, "no .lamw weight files in " + f.models);

  std::vector<SRNetwork> models;
  for (const auto& p : model_files) models.push_back(load_weights(p));
  PathConfig cfg = f.patch.config();
  cfg.jobs = 1;

  struct Row {
    bool ok = false;
    std::vector<std::string> cells;
    double di = 0, psnr_db = std::nan("");
  };
  const std::size_t nm = models.size();
  std::vector<Row> rows(image_files.size() * nm);
  std::mutex log_mutex;
  parallel_for(rows.size(), f.patch.jobs, [&](std::size_t k) {
    const fs::path& img = image_files[k / nm];
    const std::size_t mi = k % nm;
    const std::string image_id = img.stem().string(), model_id = model_files[mi].stem().string();
    try {
      const SRNetwork& net = models[mi];
      const Tensor lr = load_image(img);
      check_compatible(net, lr);
      const int s = net.scale();
      const PatchDetector det = f.patch.detector(lr.dim(1) * s, lr.dim(2) * s, s);
      const AttributionMap map = lam::lam(net, lr, det, cfg);
      const DiffusionStats st = diffusion_stats(map);
      double p = std::nan("");
      if (!f.hr.empty()) {
        const Tensor hr = load_image(fs::path(f.hr) / img.filename());
        Tensor sr = net.infer(lr);
        sr.data() = sr.data().cwiseMax(0.0f).cwiseMin(1.0f);
        p = psnr(hr, sr);
      }
      Row& r = rows[k];
      r.di = st.di;
      r.psnr_db = p;
      r.cells = {image_id,
                 model_id,
                 num(st.di),
                 num(st.gini),
                 std::isnan(p) ? "" : num(p),
                 num(map.completeness_relative()),
                 num(map.d_input),
                 num(map.d_baseline),
                 std::to_string(cfg.steps),
                 num(cfg.sigma),
                 std::to_string(det.l),
                 std::to_string(det.x),
                 std::to_string(det.y)};
      r.ok = true;
    } catch (const Error& e) {
      std::lock_guard lock(log_mutex);
      ctx.err << "skip " << image_id << " x " << model_id << ": error[" << to_string(e.kind()) << "]: " << e.what()
              << '\n';
    }
  });

  std::size_t ok = 0;
  {
    CsvWriter csv(dir / "results.csv", "results",
                  {"image_id", "model_id", "di", "gini", "psnr_db", "completeness_rel", "d_input", "d_baseline", "m",
                   "sigma", "patch", "x", "y"});
    // Rows are already in (image, model) file-name order.
    for (const Row& r : rows)
      if (r.ok) {
        csv.row(r.cells);
        ++ok;
      }
    // Per-model means, then the DI vs PSNR correlation across models.
    std::vector<double> mean_di, mean_psnr;
    for (std::size_t mi = 0; mi < nm; ++mi) {
      double di = 0, p = 0;
      int n = 0, np = 0;
      for (std::size_t k = mi; k < rows.size(); k += nm) {
        if (!rows[k].ok) continue;
        di += rows[k].di;
        ++n;
        if (!std::isnan(rows[k].psnr_db) && !std::isinf(rows[k].psnr_db)) p += rows[k].psnr_db, ++np;
      }
      if (n == 0) continue;
      mean_di.push_back(di / n);
      mean_psnr.push_back(np ? p / np : std::nan(""));
      csv.row({"summary_mean", model_files[mi].stem().string(), num(di / n), "", np ? num(p / np) : "", "", "", "",
               "", "", "", "", ""});
    }
    std::string pearson = "", spearman = "";
    const bool have_psnr = std::none_of(mean_psnr.begin(), mean_psnr.end(), [](double v) { return std::isnan(v); });
    if (have_psnr && mean_di.size() >= 3) {
      try {
        const Correlation c = correlate(mean_di, mean_psnr);
        pearson = num(c.pearson);
        spearman = num(c.spearman);
      } catch (const Error& e) {
        ctx.err << "correlation undefined: " << e.what() << '\n';
      }
    }
    csv.row({"summary_corr", "pearson_di_psnr", pearson, "", "", "", "", "", "", "", "", "", ""});
    csv.row({"summary_corr", "spearman_di_psnr", spearman, "", "", "", "", "", "", "", "", "", ""});
  }
  json config = f.patch.to_json();
  config["images"] = f.images;
  config["hr"] = f.hr;
  config["models"] = f.models;
  std::vector<fs::path> inputs(image_files.begin(), image_files.end());
  inputs.insert(inputs.end(), model_files.begin(), model_files.end());
  write_manifest(ctx, dir, "batch", config, f.seed, inputs);
  ctx.out << ok << " of " << rows.size() << " items\n";
  if (ok == 0) raise(ErrorKind::data, "every batch item failed");
  return 0;
}

// ---------------------------------------------------------------------------

struct VerifyFlags {
  std::string model, image;
  std::uint64_t seed = 0;
  int coordinates = 50;
  PatchFlags patch;
};

int cmd_verify(const Context& ctx, const VerifyFlags& f) {
  const SRNetwork net = load_weights(f.model);
  const int s = net.scale();
  Tensor lr;
  if (f.image.empty()) {
    const Tensor rgb = downsample(synthesize_image(0, 32 * s, 32 * s, f.seed), s);
    lr = net.input_channels() == 3 ? rgb : Tensor({1, 32, 32}, Tensor::Storage(rgb.data().head(32 * 32)));
  } else {
    lr = load_image(f.image);
  }
  check_compatible(net, lr);
  const PatchDetector det = f.patch.detector(lr.dim(1) * s, lr.dim(2) * s, s);
  const PathConfig cfg = f.patch.config();

  struct Check {
    std::string name, value, limit;
    bool ok;
  };
  std::vector<Check> checks;
  const GradCheckResult g = gradcheck_network(net, lr, det, f.coordinates, f.seed);
  checks.push_back({"gradcheck max rel err (" + std::to_string(g.checked) + " coords)", num(g.max_rel_error),
                    "<= 1e-3", g.passed(f.coordinates)});
  const int ladder_steps[] = {25, 50, 100, 200};
  const auto ladder = completeness_ladder(net, lr, det, cfg, ladder_steps);
  for (const auto& e : ladder)
    checks.push_back({"completeness rel m=" + std::to_string(e.steps), num(e.relative), e.steps == 100 ? "<= 0.02" : "",
                      e.steps != 100 || e.relative <= 0.02});
  checks.push_back({"residual m=200 <= m=25", num(ladder.back().residual) + " vs " + num(ladder.front().residual), "",
                    ladder.back().residual <= ladder.front().residual});
  const ConfinementResult conf = check_confinement(net, lam::lam(net, lr, det, cfg), det);
  checks.push_back({"confinement max |outside|", num(conf.max_outside), "== 0", conf.passed()});
  const int rf = receptive_field(net), probe = probe_receptive_field(net);
  checks.push_back({"receptive field analytic vs probe", std::to_string(rf) + " vs " + std::to_string(probe), "equal",
                    rf == probe});

  bool all = true;
  for (const auto& c : checks) {
    char line[200];
    std::snprintf(line, sizeof line, "%-36s %-34s %-9s %s\n", c.name.c_str(), c.value.c_str(), c.limit.c_str(),
                  c.ok ? "PASS" : "FAIL");
    ctx.out << line;
    all = all && c.ok;
  }
  if (!all) {
    ctx.err << "error[analysis]: verification failed\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string kind = "plain", images, init, out;
  int depth = 4, blocks = 1, width = 16, scale = 4, channels = 3;
  TrainConfig cfg;
};

int cmd_train(const Context& ctx, TrainFlags f) {
  const fs::path dir = prepare_dir(f.out);
  std::vector<fs::path> inputs;
  SRNetwork net = [&] {
    if (!f.init.empty()) {
      inputs.push_back(f.init);
      return load_weights(f.init);
    }
    if (f.kind == "plain") return build_plain_cnn(f.depth, f.width, f.scale, f.cfg.seed, f.channels);
    if (f.kind == "residual") return build_residual_net(f.blocks, f.width, f.scale, f.cfg.seed, f.channels);
    return build_linear_upsampler(f.scale, f.channels);
  }();
  std::vector<double> trace;
  if (net.kind() != NetworkKind::linear_upsampler && f.cfg.iterations > 0) {
    if (f.images.empty()) throw UsageError("--images is required when training");
    std::vector<Tensor> hr;
    for (const auto& p : list_images(f.images)) {
      hr.push_back(load_image(p));
      inputs.push_back(p);
    }
    if (hr.empty()) raise(ErrorKind::data, "no training images in " + f.images);
    net = train_tiny(std::move(net), hr, f.cfg, &trace);
  }
  save_weights(net, dir / "model.lamw");
  if (!trace.empty()) {
    CsvWriter csv(dir / "loss.csv", "loss", {"iteration", "l1"});
    for (std::size_t i = 0; i < trace.size(); ++i) csv.row({std::to_string(i), num(trace[i])});
  }
  const json config = {{"kind", f.kind},
                       {"depth", f.depth},
                       {"blocks", f.blocks},
                       {"width", f.width},
                       {"scale", f.scale},
                       {"channels", f.channels},
                       {"init", f.init},
                       {"images", f.images},
                       {"iterations", f.cfg.iterations},
                       {"learning_rate", f.cfg.learning_rate},
                       {"train_patch", f.cfg.patch_size},
                       {"minibatch", f.cfg.minibatch},
                       {"decay_every", f.cfg.decay_every}};
  write_manifest(ctx, dir, "train", config, f.cfg.seed, inputs);
  ctx.out << "wrote " << (dir / "model.lamw").string() << " (" << net.parameter_count() << " parameters, RF "
          << receptive_field(net) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct CurateFlags {
  std::string images, models, out;
  int count = 20, sub_image = 96, scale = 4, jobs = 1;
  std::uint64_t seed = 0;
};

int cmd_curate(const Context& ctx, const CurateFlags& f) {
  const fs::path dir = prepare_dir(f.out);
  const auto model_files = weight_files(f.models);
  std::vector<SRNetwork> models;
  for (const auto& p : model_files) models.push_back(load_weights(p));
  const auto image_files = list_images(f.images);
  const CurationReport report = curate(fs::path(f.images), models, f.count, f.sub_image, f.scale, f.seed, f.jobs);
  {
    CsvWriter csv(dir / "curation.csv", "curation", {"id", "mean_psnr_db", "var_psnr", "rank", "selected"});
    std::vector<const CandidateScore*> by_rank;
    for (const auto& c : report.candidates) by_rank.push_back(&c);
    std::sort(by_rank.begin(), by_rank.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
    for (const auto* c : by_rank)
      csv.row({c->id, num(c->mean_psnr_db), num(c->var_psnr), std::to_string(c->rank), c->selected ? "1" : "0"});
  }
  fs::create_directories(dir / "hr");
  fs::create_directories(dir / "lr");
  for (const auto& rec : report.selected) {
    save_image(rec.hr, dir / "hr" / (rec.id + ".png"));
    save_image(rec.lr, dir / "lr" / (rec.id + ".png"));
  }
  const json config = {{"images", f.images}, {"models", f.models}, {"count", f.count},
                       {"sub_image", f.sub_image}, {"scale", f.scale}, {"jobs", f.jobs}};
  std::vector<fs::path> inputs(image_files.begin(), image_files.end());
  inputs.insert(inputs.end(), model_files.begin(), model_files.end());
  write_manifest(ctx, dir, "curate", config, f.seed, inputs);
  ctx.out << "selected " << report.selected.size() << " of " << report.candidates.size() << " candidates\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct CompareFlags {
  std::string models, image, out;
  double bandwidth = 2.0, threshold = 0.1;
  std::uint64_t seed = 0;
  PatchFlags patch;
};

int cmd_compare(const Context& ctx, const CompareFlags& f) {
  const fs::path dir = prepare_dir(f.out);
  const auto model_files = weight_files(f.models);
  if (model_files.empty()) raise(ErrorKind::data, "no .lamw weight files in " + f.models);
  const Tensor lr = load_image(f.image);
  const PathConfig cfg = f.patch.config();
  std::vector<Map2D> maps;
  CsvWriter csv(dir / "compare.csv", "compare", {"model_id", "di", "gini"});
  for (const auto& p : model_files) {
    const SRNetwork net = load_weights(p);
    check_compatible(net, lr);
    const int s = net.scale();
    const AttributionMap map = lam::lam(net, lr, f.patch.detector(lr.dim(1) * s, lr.dim(2) * s, s), cfg);
    const DiffusionStats st = diffusion_stats(map);
    csv.row({p.stem().string(), num(st.di), num(st.gini)});
    maps.push_back(normalize_for_viz(map));
  }
  const AreaOfInterest aoi = area_of_interest(maps, f.threshold);
  auto heat = [&](const Map2D& mask) {
    const HeatMap h = kde_heatmap(std::span<const Map2D>(&mask, 1), f.bandwidth);
    const float peak = h.grid.maxCoeff();
    return map_image(peak > 0 ? Map2D(h.grid / peak) : h.grid);
  };
  save_image(heat(aoi.consensus), dir / "consensus.png");
  save_image(heat(aoi.difference), dir / "difference.png");
  save_image(map_image(aoi.consensus), dir / "consensus_mask.png");
  save_image(map_image(aoi.difference), dir / "difference_mask.png");
  json config = f.patch.to_json();
  config["models"] = f.models;
  config["image"] = f.image;
  config["bandwidth"] = f.bandwidth;
  config["threshold"] = f.threshold;
  std::vector<fs::path> inputs(model_files.begin(), model_files.end());
  inputs.push_back(f.image);
  write_manifest(ctx, dir, "compare", config, f.seed, inputs);
  ctx.out << "compared " << maps.size() << " models\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthFlags {
  std::string out;
  int count = 8, size = 128;
  std::uint64_t seed = 0;
};

int cmd_synth(const Context& ctx, const SynthFlags& f) {
  const fs::path dir = prepare_dir(f.out);
  for (int i = 0; i < f.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%03d.png", i);
    save_image(synthesize_image(i, f.size, f.size, f.seed + static_cast<std::uint64_t>(i)), dir / name);
  }
  write_manifest(ctx, dir, "synth", {{"count", f.count}, {"size", f.size}}, f.seed, {});
  ctx.out << "wrote " << f.count << " images\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local attribution maps for super-resolution networks", "lam"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  RunFlags run;
  auto* c_run = app.add_subcommand("run", "Attribution map for one image and model");
  c_run->add_option("--model", run.model, "Weight file")->required();
  c_run->add_option("--image", run.image, "LR input image")->required();
  c_run->add_option("--out", run.out, "Output directory")->required();
  c_run->add_option("--seed", run.seed)->capture_default_str();
  run.patch.add(c_run);

  BatchFlags batch;
  auto* c_batch = app.add_subcommand("batch", "Attribution statistics for every image and model pair");
  c_batch->add_option("--images", batch.images, "Directory of LR images")->required();
  c_batch->add_option("--hr", batch.hr, "Directory of HR images with matching file names");
  c_batch->add_option("--models", batch.models, "Directory of .lamw weight files")->required();
  c_batch->add_option("--out", batch.out, "Output directory")->required();
  c_batch->add_option("--seed", batch.seed)->capture_default_str();
  batch.patch.add(c_batch);

  VerifyFlags verify;
  auto* c_verify = app.add_subcommand("verify", "Gradient, completeness and confinement checks");
  c_verify->add_option("--model", verify.model, "Weight file")->required();
  c_verify->add_option("--image", verify.image, "LR image (synthetic when omitted)");
  c_verify->add_option("--coords", verify.coordinates, "Finite-difference coordinates")->capture_default_str();
  c_verify->add_option("--seed", verify.seed)->capture_default_str();
  verify.patch.add(c_verify);

  TrainFlags train;
  auto* c_train = app.add_subcommand("train", "Build and train a small SR network");
  c_train->add_option("--kind", train.kind)
      ->check(CLI::IsMember({"plain", "residual", "linear"}))
      ->capture_default_str();
  c_train->add_option("--depth", train.depth, "Plain CNN conv layers")->capture_default_str();
  c_train->add_option("--blocks", train.blocks, "Residual blocks")->capture_default_str();
  c_train->add_option("--width", train.width, "Feature channels")->capture_default_str();
  c_train->add_option("--scale", train.scale)->capture_default_str();
  c_train->add_option("--channels", train.channels)->capture_default_str();
  c_train->add_option("--images", train.images, "Directory of HR training images");
  c_train->add_option("--init", train.init, "Start from this weight file");
  c_train->add_option("--iterations", train.cfg.iterations)->capture_default_str();
  c_train->add_option("--learning-rate", train.cfg.learning_rate)->capture_default_str();
  c_train->add_option("--train-patch", train.cfg.patch_size, "LR crop size")->capture_default_str();
  c_train->add_option("--minibatch", train.cfg.minibatch)->capture_default_str();
  c_train->add_option("--decay-every", train.cfg.decay_every)->capture_default_str();
  c_train->add_option("--seed", train.cfg.seed)->capture_default_str();
  c_train->add_option("--out", train.out, "Output directory")->required();

  CurateFlags cur;
  auto* c_curate = app.add_subcommand("curate", "Select hard sub-images across a model fleet");
  c_curate->add_option("--images", cur.images, "Directory of HR images")->required();
  c_curate->add_option("--models", cur.models, "Directory of .lamw weight files")->required();
  c_curate->add_option("--count", cur.count)->capture_default_str();
  c_curate->add_option("--sub-image", cur.sub_image)->capture_default_str();
  c_curate->add_option("--scale", cur.scale)->capture_default_str();
  c_curate->add_option("--seed", cur.seed)->capture_default_str();
  c_curate->add_option("--jobs", cur.jobs)->capture_default_str();
  c_curate->add_option("--out", cur.out, "Output directory")->required();

  CompareFlags cmp;
  auto* c_compare = app.add_subcommand("compare", "Consensus and difference areas across models");
  c_compare->add_option("--models", cmp.models, "Directory of .lamw weight files")->required();
  c_compare->add_option("--image", cmp.image, "LR input image")->required();
  c_compare->add_option("--bandwidth", cmp.bandwidth, "KDE bandwidth in LR pixels")->capture_default_str();
  c_compare->add_option("--threshold", cmp.threshold)->capture_default_str();
  c_compare->add_option("--seed", cmp.seed)->capture_default_str();
  c_compare->add_option("--out", cmp.out, "Output directory")->required();
  cmp.patch.add(c_compare);

  std::string rf_model;
  bool rf_probe = false;
  auto* c_rf = app.add_subcommand("rf", "Print the receptive field of a model");
  c_rf->add_option("--model", rf_model, "Weight file")->required();
  c_rf->add_flag("--probe", rf_probe, "Measure with impulse probes instead of layer arithmetic");

  SynthFlags synth;
  auto* c_synth = app.add_subcommand("synth", "Write procedural test images");
  c_synth->add_option("--count", synth.count)->capture_default_str();
  c_synth->add_option("--size", synth.size)->capture_default_str();
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("--out", synth.out, "Output directory")->required();

  std::vector<const char*> argv;
  argv.push_back("lam");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage: " << e.what() << '\n';
    return 2;
  }

  const Context ctx{args, out, err};
  try {
    if (*c_run) return cmd_run(ctx, run);
    if (*c_batch) return cmd_batch(ctx, batch);
    if (*c_verify) return cmd_verify(ctx, verify);
    if (*c_train) return cmd_train(ctx, train);
    if (*c_curate) return cmd_curate(ctx, cur);
    if (*c_compare) return cmd_compare(ctx, cmp);
    if (*c_synth) return cmd_synth(ctx, synth);
    if (*c_rf) {
      const SRNetwork net = load_weights(rf_model);
      out << (rf_probe ? probe_receptive_field(net) : receptive_field(net)) << '\n';
      return 0;
    }
  } catch (const UsageError& e) {
    err << "usage: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error[" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error[io]: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace lam
