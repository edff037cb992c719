#pragma once

#include <filesystem>

#include "lam/tensor.hpp"

namespace lam {

/// Reads an 8-bit PNG or binary PPM/PGM as a (c, h, w) tensor in [0, 1]; c is 1
/// for grayscale and 3 for colour. 16-bit and other formats are rejected.
Tensor load_image(const std::filesystem::path& path);

/// Writes a 1- or 3-channel tensor, clamped to [0, 1] and rounded to 8 bits.
/// The format follows the extension: .png, .ppm or .pgm.
void save_image(const Tensor& image, const std::filesystem::path& path);

/// Lists .png/.ppm/.pgm files of a directory sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace lam
