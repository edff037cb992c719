// Acceptance run: trains a desk-scale fleet, curates a hard image set and
// checks every criterion, printing one PASS/FAIL line each.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "lam/analysis.hpp"
#include "lam/attribution.hpp"
#include "lam/cli.hpp"
#include "lam/dataset.hpp"
#include "lam/image_io.hpp"
#include "lam/network.hpp"
#include "lam/rng.hpp"
#include "lam/train.hpp"
#include "lam/verify.hpp"

using namespace lam;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Model {
  std::string id;
  SRNetwork net;
};

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  verdicts.push_back({id, name, pass, detail});
  std::printf("%s  criterion %d  %-28s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

void note(const std::string& text) {
  std::printf("      %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr int kScale = 4;
constexpr int kWidth = 16;
constexpr std::uint64_t kInitSeed = 7;

TrainConfig fleet_training(int iterations) {
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.learning_rate = 5e-4;
  cfg.patch_size = 16;
  cfg.minibatch = 4;
  cfg.seed = 11;
  return cfg;
}

std::vector<Model> build_fleet(const fs::path& dir, int iterations, bool reuse) {
  std::vector<Tensor> corpus;
  for (int i = 0; i < 8; ++i) corpus.push_back(synthesize_image(i, 128, 128, 1000 + static_cast<std::uint64_t>(i)));
  const TrainConfig cfg = fleet_training(iterations);

  std::vector<std::pair<std::string, std::function<SRNetwork()>>> recipes{
      {"bicubic", [] { return build_linear_upsampler(kScale); }},
      {"plain04", [] { return build_plain_cnn(4, kWidth, kScale, kInitSeed); }},
      {"plain08", [] { return build_plain_cnn(8, kWidth, kScale, kInitSeed); }},
      {"plain16", [] { return build_plain_cnn(16, kWidth, kScale, kInitSeed); }},
      {"resid01", [] { return build_residual_net(1, kWidth, kScale, kInitSeed); }},
      {"resid03", [] { return build_residual_net(3, kWidth, kScale, kInitSeed); }},
      {"resid07", [] { return build_residual_net(7, kWidth, kScale, kInitSeed); }},
  };
  fs::create_directories(dir);
  std::vector<Model> fleet;
  for (auto& [id, make] : recipes) {
    const fs::path file = dir / (id + ".lamw");
    const auto t0 = Clock::now();
    if (reuse && fs::exists(file)) {
      fleet.push_back({id, load_weights(file)});
      continue;
    }
    SRNetwork net = make();
    const double before = net.kind() == NetworkKind::linear_upsampler ? 0.0 : evaluate_l1(net, corpus);
    if (net.kind() != NetworkKind::linear_upsampler) net = train_tiny(std::move(net), corpus, cfg);
    save_weights(net, file);
    if (net.kind() != NetworkKind::linear_upsampler)
      note(fmt("trained %-8s params %6zu  RF %2d  L1 %.4f -> %.4f  (%.0f s)", id.c_str(), net.parameter_count(),
               receptive_field(net), before, evaluate_l1(net, corpus), seconds_since(t0)));
    fleet.push_back({id, std::move(net)});
  }
  return fleet;
}

const SRNetwork& find(const std::vector<Model>& fleet, const std::string& id) {
  for (const auto& m : fleet)
    if (m.id == id) return m.net;
  throw std::runtime_error("no model " + id);
}

// Smooth monotone edges: every forward difference inside the centred patch
// keeps its sign along either path, so the detector is linear there.
Tensor edge_image(int h, int w) {
  Rng rng(77);
  Tensor t({3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        t(c, y, x) = static_cast<float>(0.5 + 0.1 * (c + 1) * std::tanh((x - w / 2.0) / 3.0) +
                                        0.15 * std::tanh((y - h / 2.0) / 4.0) + rng.uniform(-1e-4, 1e-4));
  return t;
}

// ---------------------------------------------------------------------------

void criterion_completeness(const std::vector<Model>& fleet, const std::vector<ImageRecord>& set) {
  const auto t0 = Clock::now();
  double worst_rel = 0;
  int ladder_fail = 0, items = 0;
  std::string worst;
  for (const auto& m : fleet)
    for (std::size_t i = 0; i < 5 && i < set.size(); ++i) {
      const int steps[] = {25, 100, 200};
      const auto ladder = completeness_ladder(m.net, set[i].lr, set[i].center_patch, PathConfig{}, steps);
      if (ladder[1].relative > worst_rel) worst_rel = ladder[1].relative, worst = m.id + "/" + set[i].id;
      if (ladder[2].residual > ladder[0].residual) {
        ++ladder_fail;
        note(fmt("ladder not decreasing: %s/%s residual m=25 %.3g m=200 %.3g", m.id.c_str(), set[i].id.c_str(),
                 ladder[0].residual, ladder[2].residual));
      }
      ++items;
    }
  const double secs = seconds_since(t0);
  report(1, "completeness", worst_rel <= 0.02 && ladder_fail == 0 && items == 35 && secs <= 600,
         fmt("%d items, max rel residual %.4g at m=100 (<= 0.02, %s), m=200<=m=25 fails %d, %.0f s (<= 600)", items,
             worst_rel, worst.c_str(), ladder_fail, secs));
}

void criterion_linear(const SRNetwork& bicubic, const std::vector<ImageRecord>& set) {
  const Tensor lr = edge_image(48, 48);
  const PatchDetector det = PatchDetector::centered(48 * kScale, 48 * kScale);
  const AttributionMap grad = vanilla_gradient(bicubic, lr, det);
  double worst = 0;
  for (PathKind path : {PathKind::progressive_blur, PathKind::linear}) {
    PathConfig cfg;
    cfg.path = path;
    const Tensor base = make_baseline(lr, cfg);
    const AttributionMap map = lam::lam(bicubic, lr, det, cfg);
    const Eigen::ArrayXd expected =
        grad.values.data().cast<double>() * (lr.data().cast<double>() - base.data().cast<double>());
    const double rel = (map.values.data().cast<double>() - expected).matrix().norm() / expected.matrix().norm();
    worst = std::max(worst, rel);
  }
  report(2, "linear closed form", worst <= 1e-4,
         fmt("max rel |LAM - grad*(I-I')| %.3g over progressive and linear paths (<= 1e-4)", worst));
  // Curated textures cross detector kinks along the path, where the gradient
  // is no longer constant; shown for reference.
  double curated = 0;
  for (const auto& r : set) {
    const AttributionMap g = vanilla_gradient(bicubic, r.lr, r.center_patch);
    PathConfig cfg;
    cfg.path = PathKind::linear;
    const AttributionMap map = lam::lam(bicubic, r.lr, r.center_patch, cfg);
    const Eigen::ArrayXd expected = g.values.data().cast<double>() *
                                    (r.lr.data().cast<double>() - make_baseline(r.lr, cfg).data().cast<double>());
    curated = std::max(curated,
                       (map.values.data().cast<double>() - expected).matrix().norm() / expected.matrix().norm());
  }
  note(fmt("reference: curated textures, linear path, max rel %.3g (detector kinks crossed)", curated));
}

void criterion_autodiff(const std::vector<Model>& fleet, const ImageRecord& item) {
  Rng rng(8);
  const int n = 50;
  auto random = [&](Shape s) {
    BasicTensor<double> t(std::move(s));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1, 1);
    return t;
  };
  auto weighted = [](Graph<double>& g, Var<double> v, std::uint64_t seed) {
    Rng r(seed);
    BasicTensor<double> w(v.shape());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = r.uniform(-1, 1);
    return sum(mul(v, g.constant(std::move(w))));
  };
  double worst = 0;
  bool ok = true;
  std::string lines;
  auto record = [&](const std::string& name, const GradCheckResult& r) {
    worst = std::max(worst, r.max_rel_error);
    ok = ok && r.passed(n);
    lines += fmt("%s %.2g (%d/%d, %d kinks skipped); ", name.c_str(), r.max_rel_error, r.checked, n, r.skipped_kinks);
  };
  auto op = [&](const std::string& name, ScalarFunction fn, std::vector<BasicTensor<double>> inputs) {
    record(name, gradcheck(fn, std::move(inputs), n, rng.next()));
  };
  op("conv2d", [&](Graph<double>& g, auto v) { return weighted(g, conv2d(v[0], v[1], v[2], 1), 1); },
     {random({2, 6, 6}), random({3, 2, 3, 3}), random({3})});
  op("pixel_shuffle", [&](Graph<double>& g, auto v) { return weighted(g, pixel_shuffle(v[0], 2), 2); },
     {random({8, 4, 4})});
  op("relu", [&](Graph<double>& g, auto v) { return weighted(g, relu(v[0]), 3); }, {random({2, 6, 6})});
  op("prelu", [&](Graph<double>& g, auto v) { return weighted(g, prelu(v[0], v[1]), 4); },
     {random({2, 6, 6}), BasicTensor<double>({1}, {0.3})});
  op("add", [&](Graph<double>& g, auto v) { return weighted(g, add(v[0], v[1]), 5); },
     {random({2, 5, 5}), random({2, 5, 5})});
  op("sub", [&](Graph<double>& g, auto v) { return weighted(g, sub(v[0], v[1]), 6); },
     {random({2, 5, 5}), random({2, 5, 5})});
  op("mul", [&](Graph<double>& g, auto v) { return weighted(g, mul(v[0], v[1]), 7); },
     {random({2, 5, 5}), random({2, 5, 5})});
  op("scale", [&](Graph<double>& g, auto v) { return weighted(g, scale(v[0], -1.7), 8); }, {random({2, 5, 5})});
  op("abs", [&](Graph<double>& g, auto v) { return weighted(g, abs(v[0]), 9); }, {random({2, 6, 6})});
  op("crop", [&](Graph<double>& g, auto v) { return weighted(g, crop(v[0], 1, 2, 4, 3), 10); }, {random({2, 6, 6})});
  op("sum", [&](Graph<double>&, auto v) { return sum(v[0]); }, {random({2, 4, 4})});
  op("mean", [&](Graph<double>&, auto v) { return mean(mul(v[0], v[0])); },
     {random({2, 4, 4})});
  op("detect", [&](Graph<double>&, auto v) { return detect(v[0], PatchDetector{1, 2, 5}); }, {random({3, 9, 9})});
  for (const auto& m : fleet)
    record("detect*F[" + m.id + "]", gradcheck_network(m.net, item.lr, item.center_patch, n, rng.next()));
  report(3, "autodiff", ok, fmt("max rel err %.3g over %zu checks x %d coords (<= 1e-3)", worst, 13 + fleet.size(), n));
  note(lines);
}

int run_tool(std::vector<std::string> args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  if (out) *out = o.str();
  if (code != 0) note("lam " + args[0] + " failed: " + e.str());
  return code;
}

void criterion_confinement(const std::vector<Model>& fleet, const fs::path& models_dir, const ImageRecord& item) {
  const SRNetwork& plain4 = find(fleet, "plain04");
  const AttributionMap map = lam::lam(plain4, item.lr, item.center_patch, PathConfig{});
  const ConfinementResult lam_conf = check_confinement(plain4, map, item.center_patch);
  const ConfinementResult grad_conf =
      check_confinement(plain4, vanilla_gradient(plain4, item.lr, item.center_patch), item.center_patch);
  const int rf4 = receptive_field(plain4);
  bool rf_ok = true;
  std::string rfs;
  for (const auto& m : fleet) {
    std::string printed;
    run_tool({"rf", "--model", (models_dir / (m.id + ".lamw")).string()}, &printed);
    const int probe = probe_receptive_field(m.net);
    rf_ok = rf_ok && printed == std::to_string(probe) + "\n";
    rfs += fmt("%s %d/%d ", m.id.c_str(), std::atoi(printed.c_str()), probe);
  }
  const SRNetwork reference = build_plain_cnn(8, 64, 4, 0);
  const fs::path ref_file = models_dir.parent_path() / "reference8.lamw";
  save_weights(reference, ref_file);
  std::string ref_out;
  run_tool({"rf", "--model", ref_file.string()}, &ref_out);
  const bool pass = rf4 == 9 && lam_conf.passed() && grad_conf.passed() && rf_ok && ref_out == "17\n";
  report(4, "receptive-field confinement", pass,
         fmt("RF %d, window rows [%d,%d) cols [%d,%d), max |outside| LAM %.3g grad %.3g; rf cli/probe match %s; "
             "8-layer reference prints %d (17)",
             rf4, lam_conf.window.y0, lam_conf.window.y1, lam_conf.window.x0, lam_conf.window.x1, lam_conf.max_outside,
             grad_conf.max_outside, rf_ok ? "yes" : "no", std::atoi(ref_out.c_str())));
  note("rf cli/probe: " + rfs);
}

void criterion_gini() {
  auto oracle = [](const std::vector<double>& g) {
    const double n = static_cast<double>(g.size());
    double pairs = 0, total = 0;
    for (double a : g) {
      total += std::abs(a);
      for (double b : g) pairs += std::abs(std::abs(a) - std::abs(b));
    }
    return total == 0 ? 0.0 : pairs / (2 * n * n * (total / n));
  };
  const double uniform_di = diffusion_index(gini(std::vector<double>(256, 0.7)));
  std::vector<double> hot(256, 0.0);
  hot[17] = 3.0;
  const double hot_di = diffusion_index(gini(hot));
  const std::vector<double> ramp{1, 2, 3, 4};
  const double ramp_g = gini(ramp), ramp_oracle = oracle(ramp);
  Rng rng(5);
  double worst_scale = 0, worst_perm = 0, worst_oracle = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(16 + rng.below(200));
    for (auto& e : v) e = rng.uniform(-1, 1) * (rng.uniform() < 0.2 ? 20.0 : 1.0);
    const double g = gini(v);
    worst_oracle = std::max(worst_oracle, std::abs(g - oracle(v)));
    auto s = v;
    const double c = std::exp(rng.uniform(-5, 5));
    for (auto& e : s) e *= c;
    worst_scale = std::max(worst_scale, std::abs(gini(s) - g));
    auto p = v;
    for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    worst_perm = std::max(worst_perm, std::abs(gini(p) - g));
  }
  const bool pass = std::abs(uniform_di - 100.0) <= 1e-9 && std::abs(hot_di - 0.390625) <= 1e-9 &&
                    std::abs(ramp_g - 0.25) <= 1e-12 && std::abs(ramp_oracle - 0.25) <= 1e-12 &&
                    worst_scale <= 1e-12 && worst_perm <= 1e-12 && worst_oracle <= 1e-12;
  report(5, "Gini/DI exactness", pass,
         fmt("uniform DI %.9g, one-hot DI %.9g, G{1,2,3,4} %.12g (oracle %.12g); 100 maps: |dG| scale %.2g perm %.2g "
             "oracle %.2g",
             uniform_di, hot_di, ramp_g, ramp_oracle, worst_scale, worst_perm, worst_oracle));
}

double mean_di(const SRNetwork& net, const std::vector<ImageRecord>& set) {
  double total = 0;
  for (const auto& r : set) total += diffusion_stats(lam::lam(net, r.lr, r.center_patch, PathConfig{})).di;
  return total / static_cast<double>(set.size());
}

void criterion_depth(const std::vector<Model>& fleet, const std::vector<ImageRecord>& set, double setup_secs) {
  const auto t0 = Clock::now();
  std::map<std::string, double> di;
  for (const auto& m : fleet) di[m.id] = mean_di(m.net, set);
  const bool depth_ok = di["plain04"] <= di["plain08"] && di["plain08"] <= di["plain16"];
  const std::pair<const char*, const char*> pairs[] = {{"plain04", "resid01"}, {"plain08", "resid03"},
                                                       {"plain16", "resid07"}};
  int resid_wins = 0;
  std::string pair_text;
  for (auto [p, r] : pairs) {
    resid_wins += di[r] > di[p];
    pair_text += fmt("%s %.2f (%zu params) vs %s %.2f (%zu); ", r, di[r], find(fleet, r).parameter_count(), p, di[p],
                     find(fleet, p).parameter_count());
  }
  const double total = setup_secs + seconds_since(t0);
  report(6, "DI grows with depth", depth_ok && resid_wins == 3 && total <= 3600,
         fmt("mean DI plain 4/8/16 = %.2f / %.2f / %.2f (%s); residual above equal-size plain in %d of 3; %.0f s "
             "total (<= 3600)",
             di["plain04"], di["plain08"], di["plain16"], depth_ok ? "nondecreasing" : "not monotone", resid_wins,
             total));
  note(pair_text + fmt("bicubic %.2f", di["bicubic"]));
}

void criterion_saturation(const SRNetwork& net, const std::vector<ImageRecord>& set) {
  int aligned = 0, n = 0;
  std::string detail;
  for (std::size_t i = 0; i < 5 && i < set.size(); ++i) {
    for (PathKind path : {PathKind::progressive_blur, PathKind::linear}) {
      PathConfig cfg;
      cfg.path = path;
      const PathDiagnostics d = diagnostics(net, set[i].lr, set[i].center_patch, cfg);
      const int m = cfg.steps;
      int k_curve = 0, k_speed = 0;
      for (int k = 0; k < m; ++k) {
        if (std::abs(d.detector_curve[k + 1] - d.detector_curve[k]) >
            std::abs(d.detector_curve[k_curve + 1] - d.detector_curve[k_curve]))
          k_curve = k;
        if (d.path_speed[k] > d.path_speed[k_speed]) k_speed = k;
      }
      if (path == PathKind::progressive_blur) {
        ++n;
        aligned += std::abs(k_curve - k_speed) <= 10;
        detail += fmt("%d/%d ", k_curve, k_speed);
      } else {
        // A straight path has constant speed; the detector change is spread out.
        const double early = std::abs(d.detector_curve[m / 10] - d.detector_curve[0]);
        const double late = std::abs(d.detector_curve[m] - d.detector_curve[m - m / 10]);
        detail += fmt("(linear: peak step %d, first/last tenth change %.3g/%.3g) ", k_curve, early, late);
      }
    }
  }
  report(7, "saturation diagnostic", aligned == n && n == 5,
         fmt("progressive path: argmax |dD| within 10 steps of argmax speed on %d of %d images", aligned, n));
  note("steps (max |dD| / max speed): " + detail);
}

void criterion_determinism(const fs::path& work, const fs::path& models_dir) {
  auto batch = [&](const std::string& out) {
    return run_tool({"batch", "--images", (work / "curated/lr").string(), "--hr", (work / "curated/hr").string(),
                     "--models", models_dir.string(), "--seed", "3", "--out", (work / out).string()});
  };
  const int a = batch("batch_a"), b = batch("batch_b");
  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string ra = read(work / "batch_a/results.csv"), rb = read(work / "batch_b/results.csv");
  const long lines = std::count(ra.begin(), ra.end(), '\n');
  report(8, "determinism", a == 0 && b == 0 && !ra.empty() && ra == rb,
         fmt("two batch runs, results.csv %zu bytes / %ld lines, %s", ra.size(), lines,
             ra == rb ? "byte-identical" : "DIFFERENT"));
}

void criterion_speed(const SRNetwork& net) {
  const Tensor lr = downsample(synthesize_image(3, 64 * kScale, 64 * kScale, 4242), kScale);
  const PatchDetector det = PatchDetector::centered(64 * kScale, 64 * kScale);
  PathConfig cfg;
  cfg.jobs = 1;
  const auto t0 = Clock::now();
  const AttributionMap map = lam::lam(net, lr, det, cfg);
  const double secs = seconds_since(t0);
  report(9, "single call runtime", secs <= 60 && map.values.all_finite(),
         fmt("64x64 LR, %zu-parameter residual net, m=100, 1 worker: %.1f s (<= 60)", net.parameter_count(), secs));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_work";
  int iterations = 3000;
  bool reuse = false;
  app.add_option("--workdir", workdir);
  app.add_option("--iterations", iterations, "Training iterations per fleet model");
  app.add_flag("--reuse-models", reuse, "Load previously trained fleet weights from the workdir");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path work = fs::absolute(workdir);
    fs::create_directories(work);
    const fs::path models_dir = work / "models";
    const auto t0 = Clock::now();
    const std::vector<Model> fleet = build_fleet(models_dir, iterations, reuse);

    std::vector<NamedImage> pool;
    for (int i = 0; i < 6; ++i)
      pool.push_back({fmt("scene%d", i), synthesize_image(10 + i, 192, 192, 2000 + static_cast<std::uint64_t>(i))});
    std::vector<SRNetwork> nets;
    for (const auto& m : fleet) nets.push_back(m.net);
    const CurationReport cur = curate(pool, nets, 8, 96, kScale, 5);
    fs::remove_all(work / "curated");
    fs::create_directories(work / "curated/lr");
    fs::create_directories(work / "curated/hr");
    for (const auto& r : cur.selected) {
      save_image(r.hr, work / "curated/hr" / (r.id + ".png"));
      save_image(r.lr, work / "curated/lr" / (r.id + ".png"));
    }
    const double setup = seconds_since(t0);
    note(fmt("fleet of %zu models and %zu curated images ready in %.0f s", fleet.size(), cur.selected.size(), setup));

    criterion_completeness(fleet, cur.selected);
    criterion_linear(find(fleet, "bicubic"), cur.selected);
    criterion_autodiff(fleet, cur.selected.front());
    criterion_confinement(fleet, models_dir, cur.selected.front());
    criterion_gini();
    criterion_depth(fleet, cur.selected, setup);
    criterion_saturation(find(fleet, "resid03"), cur.selected);
    criterion_determinism(work, models_dir);
    criterion_speed(find(fleet, "resid03"));
  } catch (const std::exception& e) {
    std::printf("FAIL  acceptance aborted: %s\n", e.what());
    return 1;
  }
  int failed = 0;
  for (const auto& v : verdicts) failed += !v.pass;
  std::printf("%zu criteria, %d passed, %d failed\n", verdicts.size(), static_cast<int>(verdicts.size()) - failed,
              failed);
  return failed == 0 && verdicts.size() == 9 ? 0 : 1;
}
