#pragma once

#include <filesystem>
#include <stdexcept>

#include "pnp/image.hpp"

namespace pnp {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raster format: `<path>` holds the little-endian float32 row-major payload,
// `<path>.hdr` the text header `raster <width> <height> [depth]`.

std::filesystem::path raster_header_path(const std::filesystem::path& payload);

void write_image(const std::filesystem::path& path, const Image& image);
Image read_image(const std::filesystem::path& path, double pixel_pitch = 1.0);

}  // namespace pnp
