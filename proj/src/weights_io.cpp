// LAMW weight files: little-endian, no alignment padding.
//
//   "LAMW" | u16 version | u8 kind | u8 scale | u16 layer_count
//   layer_count x ( u8 op | u16 hyper[4] )
//   for each weight tensor in layer order: u32 rank | u32 dims[rank] | f32 values
#include <bit>
#include <fstream>
#include <iterator>

#include "lam/network.hpp"

namespace lam {

namespace {

constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xff));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void set_context(std::string context) { context_ = std::move(context); }

  std::uint8_t u8() {
    if (pos_ >= bytes_.size()) raise(ErrorKind::truncated, "weight file truncated in " + context_);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (u8() << 8));
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string context_ = "header";
};

}  // namespace

std::vector<std::uint8_t> serialize_weights(const SRNetwork& net) {
  Writer out;
  for (char c : {'L', 'A', 'M', 'W'}) out.u8(static_cast<std::uint8_t>(c));
  out.u16(kVersion);
  out.u8(static_cast<std::uint8_t>(net.kind()));
  out.u8(static_cast<std::uint8_t>(net.scale()));
  out.u16(static_cast<std::uint16_t>(net.layers().size()));
  for (const LayerSpec& layer : net.layers()) {
    out.u8(static_cast<std::uint8_t>(layer.op));
    for (std::uint16_t h : layer.hyper) out.u16(h);
  }
  for (const NamedTensor& w : net.weights()) {
    out.u32(static_cast<std::uint32_t>(w.tensor.rank()));
    for (int d : w.tensor.shape()) out.u32(static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < w.tensor.size(); ++i) out.f32(w.tensor[i]);
  }
  return out.take();
}

SRNetwork deserialize_weights(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (bytes.size() < 4 || bytes[0] != 'L' || bytes[1] != 'A' || bytes[2] != 'M' || bytes[3] != 'W')
    raise(ErrorKind::magic, "not a LAMW weight file (bad magic bytes)");
  for (int i = 0; i < 4; ++i) in.u8();
  const std::uint16_t version = in.u16();
  if (version != kVersion)
    raise(ErrorKind::version, "unsupported weight file version " + std::to_string(version) + " (expected 1)");
  const std::uint8_t kind = in.u8();
  if (kind > static_cast<std::uint8_t>(NetworkKind::linear_upsampler))
    raise(ErrorKind::format, "unknown network kind " + std::to_string(kind));
  const int scale = in.u8();
  const int layer_count = in.u16();

  in.set_context("layer table");
  std::vector<LayerSpec> layers(static_cast<std::size_t>(layer_count));
  for (auto& layer : layers) {
    const std::uint8_t op = in.u8();
    if (op < static_cast<std::uint8_t>(LayerOp::conv) || op > static_cast<std::uint8_t>(LayerOp::skip_add))
      raise(ErrorKind::format, "unknown layer op " + std::to_string(op));
    layer.op = static_cast<LayerOp>(op);
    for (auto& h : layer.hyper) h = in.u16();
  }

  std::vector<NamedTensor> weights;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    const auto& h = layer.hyper;
    std::vector<std::pair<std::string, Shape>> expected;
    const std::string prefix = "layer" + std::to_string(i);
    if (layer.op == LayerOp::conv) {
      expected = {{prefix + ".kernel", {h[1], h[0], h[2], h[2]}}, {prefix + ".bias", {h[1]}}};
    } else if (layer.op == LayerOp::prelu) {
      expected = {{prefix + ".slope", {h[0]}}};
    }
    for (auto& [name, shape] : expected) {
      in.set_context("tensor " + name);
      const std::uint32_t rank = in.u32();
      Shape dims(rank);
      for (auto& d : dims) d = static_cast<int>(in.u32());
      if (dims != shape)
        raise(ErrorKind::shape, "tensor " + name + " has shape " + shape_string(dims) + ", layer table implies " +
                                    shape_string(shape));
      const Eigen::Index n = shape_size(shape);
      if (in.remaining() < static_cast<std::size_t>(n) * 4)
        raise(ErrorKind::truncated, "weight file truncated in tensor " + name);
      Tensor t(shape);
      for (Eigen::Index k = 0; k < n; ++k) t[k] = in.f32();
      weights.push_back({name, std::move(t)});
    }
  }
  if (in.remaining() != 0) raise(ErrorKind::format, "trailing bytes after last tensor");
  return SRNetwork(static_cast<NetworkKind>(kind), scale, std::move(layers), std::move(weights));
}

void save_weights(const SRNetwork& net, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorKind::io, "failed writing " + path.string());
}

SRNetwork load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_weights(bytes);
}

}  // namespace lam
