#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lam/attribution.hpp"

namespace lam {

struct NamedImage {
  std::string id;
  Tensor image;
};

/// One test item: an HR crop whose sides are multiples of `scale`, its LR
/// version and the detector patch centred in the SR output.
struct ImageRecord {
  std::string id;
  Tensor hr;
  Tensor lr;
  int scale = 4;
  PatchDetector center_patch;
};

Tensor crop_image(const Tensor& image, int y, int x, int h, int w);

/// Antialiased bicubic (a = -0.5) decimation: the kernel is stretched by the
/// scale, taps are renormalised, borders replicate. Output is clamped to [0, 1].
Tensor downsample(const Tensor& hr, int scale);

ImageRecord make_record(std::string id, const Tensor& hr, int scale, int patch = 16);

/// Procedural textures (stripes, grids, rings, bricks, ...) quantised to 8 bits.
/// `index` picks the pattern family, `seed` its parameters.
Tensor synthesize_image(int index, int h, int w, std::uint64_t seed);

std::vector<NamedImage> load_image_dir(const std::filesystem::path& dir);

struct CandidateScore {
  std::string id;
  double mean_psnr_db = 0.0;
  double var_psnr = 0.0;
  int rank = 0;  // 1 = hardest
  bool selected = false;
};

struct CurationReport {
  std::vector<CandidateScore> candidates;
  std::vector<std::string> selected_ids;  // in rank order
  std::vector<ImageRecord> selected;
};

/// Selection order for a candidates x models PSNR matrix: candidates are ranked
/// by ascending mean PSNR and by descending variance (ties share average
/// ranks); the sum of the two ranks orders them, mean rank then index break
/// ties. Returns candidate indices, hardest first.
std::vector<std::size_t> selection_order(const Eigen::MatrixXd& psnr_db);

/// Samples sub_image x sub_image crops on a jittered half-overlapping grid,
/// scores each by PSNR of every model's SR result and keeps the `count`
/// hardest.
CurationReport curate(std::span<const NamedImage> hr_images, std::span<const SRNetwork> models, int count,
                      int sub_image, int scale, std::uint64_t seed, int jobs = 1);

CurationReport curate(const std::filesystem::path& hr_dir, std::span<const SRNetwork> models, int count,
                      int sub_image, int scale, std::uint64_t seed, int jobs = 1);

}  // namespace lam
