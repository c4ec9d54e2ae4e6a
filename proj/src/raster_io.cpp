#include "pnp/raster_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace pnp {

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
  }
  return v;
}

}  // namespace

std::filesystem::path raster_header_path(const std::filesystem::path& payload) {
  auto p = payload;
  p += ".hdr";
  return p;
}

void write_image(const std::filesystem::path& path, const Image& image) {
  {
    std::ofstream hdr(raster_header_path(path));
    if (!hdr) throw FormatError("cannot open " + raster_header_path(path).string());
    hdr << "raster " << image.width() << " " << image.height();
    if (image.depth() > 1) hdr << " " << image.depth();
    hdr << "\n";
  }
  std::vector<std::uint32_t> words(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const auto f = static_cast<float>(image[i]);
    std::uint32_t w;
    std::memcpy(&w, &f, sizeof w);
    words[i] = to_little_endian(w);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out) throw FormatError("short write to " + path.string());
}

Image read_image(const std::filesystem::path& path, double pixel_pitch) {
  std::ifstream hdr(raster_header_path(path));
  if (!hdr) throw FormatError("missing raster header " + raster_header_path(path).string());
  std::string line;
  std::getline(hdr, line);
  std::istringstream is(line);
  std::string tag;
  Shape shape;
  is >> tag >> shape.nx >> shape.ny;
  if (tag != "raster" || !is || shape.nx == 0 || shape.ny == 0) {
    throw FormatError("malformed raster header: '" + line + "'");
  }
  std::size_t depth = 1;
  if (is >> depth) {
    if (depth == 0) throw FormatError("malformed raster header: '" + line + "'");
    shape.nz = depth;
  }

  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = shape.size() * sizeof(float);
  if (bytes != expected) {
    throw FormatError("raster size mismatch: header " + shape.to_string() + " needs " +
                      std::to_string(expected) + " bytes, payload has " +
                      std::to_string(bytes));
  }
  in.seekg(0);
  std::vector<std::uint32_t> words(shape.size());
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(expected));
  std::vector<double> values(shape.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::uint32_t w = to_little_endian(words[i]);
    float f;
    std::memcpy(&f, &w, sizeof f);
    values[i] = f;
  }
  return Image(shape, std::move(values), pixel_pitch);
}

}  // namespace pnp
