#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "pnp/projector.hpp"

using namespace pnp;

namespace {

Image random_image(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(shape);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = u(rng);
  return img;
}

// Length of the line x cos + z sin = t inside [x0,x1]x[z0,z1], by parametric clipping.
double clip_length(double theta, double t, double x0, double x1, double z0, double z1) {
  const double c = std::cos(theta), s = std::sin(theta);
  // Point on the line closest to the origin, direction along the line.
  const double px = t * c, pz = t * s, dx = -s, dz = c;
  double lo = -1e9, hi = 1e9;
  auto clip = [&](double p, double d, double a, double b) {
    if (std::abs(d) < 1e-15) return p >= a && p <= b;
    double u0 = (a - p) / d, u1 = (b - p) / d;
    if (u0 > u1) std::swap(u0, u1);
    lo = std::max(lo, u0);
    hi = std::min(hi, u1);
    return true;
  };
  if (!clip(px, dx, x0, x1) || !clip(pz, dz, z0, z1)) return 0.0;
  return std::max(0.0, hi - lo);
}

}  // namespace

TEST_CASE("detector covers the diagonal with parity matching the grid") {
  const auto g = ProjectionGeometry::for_image(256, 256);
  CHECK(g.bins == 364);
  CHECK(g.bins * g.bin_spacing >= std::hypot(256.0, 256.0));
  CHECK(g.bin_center(181) == doctest::Approx(-0.5));
  CHECK(g.pixel_x(127) == doctest::Approx(-0.5));
  const auto odd = ProjectionGeometry::for_image(5, 5, 2.0);
  CHECK(odd.bins % 2 == 1);
  CHECK(odd.bin_center(odd.bins / 2) == 0.0);
}

TEST_CASE("zero image projects to zero, zero residual backprojects to zero") {
  const auto g = ProjectionGeometry::for_image(8, 8);
  const auto p = project(Image(g.image_shape()), g, 17.0);
  CHECK(std::all_of(p.begin(), p.end(), [](double v) { return v == 0.0; }));
  const Image b = backproject(std::vector<double>(g.bins, 0.0), g, 17.0);
  CHECK(b.max() == 0.0);
}

TEST_CASE("single pixel through its center at 0 degrees gives the pitch") {
  for (double pitch : {1.0, 2.5}) {
    const auto g = ProjectionGeometry::for_image(4, 4, pitch);
    Image x(g.image_shape());
    x.at(1, 2) = 1.0;
    const auto p = project(x, g, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < g.bins; ++i) {
      if (std::abs(g.bin_center(i) - g.pixel_x(1)) < 1e-12) CHECK(p[i] == doctest::Approx(pitch));
      total += p[i];
    }
    CHECK(total == doctest::Approx(pitch));
  }
}

TEST_CASE("matrix entries are exact line-square intersection lengths") {
  const auto g = ProjectionGeometry::for_image(7, 6, 1.3);
  const std::vector<double> angles{-70.0, -33.3, 0.0, 12.5, 45.0, 61.0, 89.0};
  const SystemMatrix a(g, angles);
  const Eigen::MatrixXd dense = Eigen::MatrixXd(a.matrix());
  const double half = 0.5 * g.pixel_pitch;
  for (std::size_t k = 0; k < angles.size(); ++k) {
    const double th = angles[k] * std::numbers::pi / 180.0;
    for (std::size_t i = 0; i < g.bins; ++i) {
      for (std::size_t iz = 0; iz < g.nz; ++iz) {
        for (std::size_t ix = 0; ix < g.nx; ++ix) {
          const double cx = g.pixel_x(ix), cz = g.pixel_z(iz);
          const double expect = clip_length(th, g.bin_center(i), cx - half, cx + half, cz - half, cz + half);
          const double got = dense(static_cast<Eigen::Index>(k * g.bins + i),
                                   static_cast<Eigen::Index>(iz * g.nx + ix));
          CHECK(got == doctest::Approx(expect).epsilon(1e-9).scale(1e-12));
        }
      }
    }
  }
}

TEST_CASE("uniform disk matches the analytic chord") {
  const std::size_t n = 256;
  const auto g = ProjectionGeometry::for_image(n, n);
  const double radius = 80.0, mu = 7.45e-3;
  Image disk(g.image_shape());
  for (std::size_t iz = 0; iz < n; ++iz)
    for (std::size_t ix = 0; ix < n; ++ix)
      if (std::hypot(g.pixel_x(ix), g.pixel_z(iz)) <= radius) disk.at(ix, iz) = mu;
  for (double angle : {0.0, 17.0, 45.0, -63.0}) {
    const auto p = project(disk, g, angle);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.bins; ++i) {
      const double t = g.bin_center(i);
      if (std::abs(t) > 0.8 * radius) continue;
      const double expect = 2.0 * mu * std::sqrt(radius * radius - t * t);
      worst = std::max(worst, std::abs(p[i] - expect) / expect);
    }
    CHECK(worst < 0.03);
  }
}

TEST_CASE("backprojection is the exact adjoint") {
  const auto g = ProjectionGeometry::for_image(32, 24, 1.5);
  const SystemMatrix a(g, equally_spaced_angles(13, -70.0, 70.0));
  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 50; ++trial) {
    Image x(g.image_shape());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = gauss(rng);
    std::vector<double> r(a.measurements());
    for (double& v : r) v = gauss(rng);
    const auto ax = a.project(x);
    const Image atr = a.backproject(r);
    const double lhs = dot(ax, r), rhs = dot(x.values(), atr.values());
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(std::abs(lhs), 1.0));
  }
}

TEST_CASE("single-ray backprojection lands only on intersected pixels") {
  const auto g = ProjectionGeometry::for_image(12, 12);
  const double angle = 27.0;
  const double th = angle * std::numbers::pi / 180.0;
  for (std::size_t ray : {std::size_t{3}, std::size_t{8}, g.bins / 2}) {
    std::vector<double> r(g.bins, 0.0);
    r[ray] = 1.0;
    const Image b = backproject(r, g, angle);
    for (std::size_t iz = 0; iz < g.nz; ++iz) {
      for (std::size_t ix = 0; ix < g.nx; ++ix) {
        const double cx = g.pixel_x(ix), cz = g.pixel_z(iz);
        const double len = clip_length(th, g.bin_center(ray), cx - 0.5, cx + 0.5, cz - 0.5, cz + 0.5);
        CHECK((b.at(ix, iz) > 0.0) == (len > 1e-12));
      }
    }
  }
}

TEST_CASE("stacked matrix rows are tilt-major") {
  const auto g = ProjectionGeometry::for_image(10, 10);
  const std::vector<double> angles{-30.0, 10.0, 50.0};
  const SystemMatrix a(g, angles);
  CHECK(a.tilts() == 3);
  CHECK(a.measurements() == 3 * g.bins);
  CHECK(a.pixels() == 100);
  const Image x = random_image(g.image_shape(), 3);
  const auto all = a.project(x);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto one = project(x, g, angles[k]);
    for (std::size_t i = 0; i < g.bins; ++i) CHECK(all[k * g.bins + i] == doctest::Approx(one[i]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(a.project(Image({5, 5, 1})), ShapeError);
  CHECK_THROWS_AS(a.backproject(std::vector<double>(4)), ShapeError);
}

TEST_CASE("projection conserves mass at every angle") {
  const auto g = ProjectionGeometry::for_image(20, 14, 0.7);
  const Image x = random_image(g.image_shape(), 12);
  double mass = 0.0;
  for (double v : x.values()) mass += v;
  for (double angle : {-70.0, -45.0, 0.0, 30.0, 90.0}) {
    const auto p = project(x, g, angle);
    double total = 0.0;
    for (double v : p) total += v;
    // Each pixel's footprint integrates to pitch^2; bins sample it at spacing = pitch.
    CHECK(total * g.bin_spacing == doctest::Approx(mass * g.pixel_pitch * g.pixel_pitch).epsilon(0.02));
  }
}

TEST_CASE("equally spaced angles include both ends") {
  const auto a = equally_spaced_angles(47, -70.0, 70.0);
  REQUIRE(a.size() == 47);
  CHECK(a.front() == -70.0);
  CHECK(a.back() == 70.0);
  CHECK(a[1] - a[0] == doctest::Approx(140.0 / 46.0));
  CHECK(equally_spaced_angles(1, 5.0, 9.0).front() == 5.0);
}
