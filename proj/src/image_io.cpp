#include "lam/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace lam {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

Tensor from_interleaved(const std::vector<std::uint8_t>& pixels, int channels, int h, int w) {
  Tensor out({channels, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        out(c, y, x) = static_cast<float>(pixels[(static_cast<std::size_t>(y) * w + x) * channels + c]) / 255.0f;
  return out;
}

std::vector<std::uint8_t> to_interleaved(const Tensor& image) {
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(c) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        const float v = std::clamp(image(ch, y, x), 0.0f, 1.0f);
        pixels[(static_cast<std::size_t>(y) * w + x) * c + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return pixels;
}

Tensor load_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    raise(ErrorKind::format, "cannot decode PNG " + path.string() + ": " + image.message);
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    raise(ErrorKind::format, "16-bit PNG is not supported: " + path.string());
  }
  const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr))
    raise(ErrorKind::format, "corrupt PNG " + path.string() + ": " + image.message);
  return from_interleaved(pixels, colour ? 3 : 1, static_cast<int>(image.height), static_cast<int>(image.width));
}

void save_png(const Tensor& t, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(t.dim(2));
  image.height = static_cast<png_uint_32>(t.dim(1));
  image.format = t.dim(0) == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto pixels = to_interleaved(t);
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr))
    raise(ErrorKind::io, "cannot write PNG " + path.string() + ": " + image.message);
}

// Next whitespace-separated header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

Tensor load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::io, "cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P6" && magic != "P5") raise(ErrorKind::format, "only binary PPM (P6) and PGM (P5) are supported");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(in));
    h = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    raise(ErrorKind::format, "corrupt PNM header in " + path.string());
  }
  if (w <= 0 || h <= 0) raise(ErrorKind::format, "corrupt PNM dimensions in " + path.string());
  if (maxval != 255) raise(ErrorKind::format, "only 8-bit PNM (maxval 255) is supported");
  const int channels = magic == "P6" ? 3 : 1;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(pixels.size()))
    raise(ErrorKind::format, "truncated PNM data in " + path.string());
  return from_interleaved(pixels, channels, h, w);
}

void save_pnm(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << (t.dim(0) == 3 ? "P6" : "P5") << '\n' << t.dim(2) << ' ' << t.dim(1) << "\n255\n";
  const auto pixels = to_interleaved(t);
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return load_pnm(path);
  raise(ErrorKind::format, "unsupported image format: " + path.string());
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
  require_image(image, "image");
  if (image.dim(0) != 1 && image.dim(0) != 3) raise(ErrorKind::dimension, "images must have 1 or 3 channels");
  const std::string ext = lower_extension(path);
  if (ext == ".png")
    save_png(image, path);
  else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")
    save_pnm(image, path);
  else
    raise(ErrorKind::format, "unsupported image format: " + path.string());
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) raise(ErrorKind::io, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string ext = lower_extension(entry.path());
    if (entry.is_regular_file() && (ext == ".png" || ext == ".ppm" || ext == ".pgm")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace lam
