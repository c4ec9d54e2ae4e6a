#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "pnp/image.hpp"
#include "pnp/raster_io.hpp"

namespace fs = std::filesystem;
using namespace pnp;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "pnp_unit";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("image arithmetic and reductions") {
  Image a({3, 2, 1}, 1.0);
  Image b({3, 2, 1}, 2.0);
  b.at(2, 1) = -4.0;
  const Image c = a + b;
  CHECK(c.at(0, 0) == 3.0);
  CHECK(c.at(2, 1) == -3.0);
  CHECK((b - a).at(1, 0) == 1.0);
  CHECK((a * 3.0)[5] == 3.0);
  CHECK(b.min() == -4.0);
  CHECK(b.max() == 2.0);
  CHECK(mean(a) == 1.0);
  CHECK(variance(a) == 0.0);
  CHECK(clip_nonnegative(b).at(2, 1) == 0.0);
  CHECK(distance(a, a) == 0.0);
  CHECK(norm2(Image({4, 1, 1}, 0.5)) == doctest::Approx(1.0));
  Image wrong({2, 3, 1});
  CHECK_THROWS_AS(a += wrong, ShapeError);
}

TEST_CASE("half zeros half ones has variance one quarter") {
  Image x({4, 4, 1});
  for (std::size_t i = 0; i < 8; ++i) x[i] = 1.0;
  CHECK(variance(x) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("non-finite pixels are detected") {
  Image x({2, 2, 1});
  CHECK(x.all_finite());
  x[3] = std::nan("");
  CHECK_FALSE(x.all_finite());
}

TEST_CASE("raster round trip is lossless for float32 values") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(-300.0f, 300.0f);
  Image img({5, 4, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = u(rng);
  const auto path = scratch("round_trip.raster");
  write_image(path, img);
  const Image back = read_image(path);
  REQUIRE(back.shape() == img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);

  std::ifstream hdr(raster_header_path(path));
  std::string tag;
  std::size_t w = 0, h = 0, d = 0;
  hdr >> tag >> w >> h >> d;
  CHECK(tag == "raster");
  CHECK(w == 5);
  CHECK(h == 4);
  CHECK(d == 3);
}

TEST_CASE("2D raster header omits the depth") {
  const auto path = scratch("flat.raster");
  write_image(path, Image({3, 2, 1}, 1.5));
  std::ifstream hdr(raster_header_path(path));
  std::string line;
  std::getline(hdr, line);
  CHECK(line == "raster 3 2");
  CHECK(read_image(path).shape() == Shape{3, 2, 1});
}

TEST_CASE("payload size mismatch is rejected") {
  const auto path = scratch("short.raster");
  {
    std::ofstream(raster_header_path(path)) << "raster 4 4\n";
    std::ofstream payload(path, std::ios::binary);
    const std::string bytes(63, '\0');
    payload.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(read_image(path), FormatError);
}

TEST_CASE("bad header and missing files are rejected") {
  const auto path = scratch("bad_header.raster");
  {
    std::ofstream(raster_header_path(path)) << "image 4 4\n";
    std::ofstream payload(path, std::ios::binary);
    const std::string bytes(64, '\0');
    payload.write(bytes.data(), 64);
  }
  CHECK_THROWS_AS(read_image(path), FormatError);
  CHECK_THROWS_AS(read_image(scratch("does_not_exist.raster")), FormatError);
}
