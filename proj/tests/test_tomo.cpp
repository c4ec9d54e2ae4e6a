#include <cmath>
#include <filesystem>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "pnp/interp.hpp"
#include "pnp/phantom.hpp"
#include "pnp/raster_io.hpp"
#include "pnp/tomo.hpp"

namespace fs = std::filesystem;
using namespace pnp;

namespace {

TiltSeries series_for(const SystemMatrix& a, const Image& x, double offset) {
  TiltSeries ts;
  ts.angles_deg = a.angles();
  ts.bins = a.geometry().bins;
  ts.y = a.project(x);
  for (double& v : ts.y) v += offset;
  ts.weights.assign(ts.y.size(), 1.0);
  return ts;
}

Image random_image(Shape shape, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(shape);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = u(rng);
  return img;
}

}  // namespace

TEST_CASE("generalized Huber values at T=3, delta=0.5") {
  const HuberParams hp{3.0, 0.5};
  CHECK(generalized_huber(1.0, hp) == 1.0);
  CHECK(generalized_huber(3.0, hp) == doctest::Approx(9.0));
  CHECK(generalized_huber(6.0, hp) == doctest::Approx(18.0));
  CHECK(generalized_huber(-6.0, hp) == doctest::Approx(18.0));
}

TEST_CASE("generalized Huber is even and continuous at the threshold") {
  for (double delta : {0.0, 0.25, 0.5, 1.0}) {
    for (double t : {0.5, 3.0, 10.0}) {
      const HuberParams hp{t, delta};
      CHECK(generalized_huber(t - 1e-9, hp) == doctest::Approx(generalized_huber(t + 1e-9, hp)).epsilon(1e-8));
      for (double e : {0.1, 1.7, 4.2, 33.0}) CHECK(generalized_huber(e, hp) == generalized_huber(-e, hp));
    }
  }
  CHECK_THROWS_AS(HuberParams({0.0, 0.5}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(HuberParams({3.0, 1.5}).validate(), std::invalid_argument);
}

TEST_CASE("surrogate majorizes the Huber loss and touches it") {
  const HuberParams hp{3.0, 0.5};
  CHECK(huber_surrogate_weight(6.0, hp) == doctest::Approx(0.25));
  CHECK(huber_surrogate_weight(2.0, hp) == 1.0);
  for (double e0 : {-9.0, -3.5, -1.0, 0.3, 2.9, 3.0, 4.0, 12.0}) {
    const double q = huber_surrogate_weight(e0, hp);
    const double c = generalized_huber(e0, hp) - q * e0 * e0;
    for (double t = -20.0; t <= 20.0; t += 0.01) {
      CHECK(q * t * t + c >= generalized_huber(t, hp) - 1e-9);
    }
  }
}

TEST_CASE("likelihood of a perfect fit is MK log sigma") {
  const auto g = ProjectionGeometry::for_image(6, 6);
  const SystemMatrix a(g, equally_spaced_angles(3, -60.0, 60.0));
  const Image x = random_image(g.image_shape(), 1, 0.0, 1.0);
  const TiltSeries ts = series_for(a, x, -2.0);
  const NuisanceParams nu{std::vector<double>(3, -2.0), 1.7};
  const double l = tomo_likelihood(x, nu, ts, a, {});
  CHECK(l == doctest::Approx(static_cast<double>(ts.measurements()) * std::log(1.7)).epsilon(1e-12));
}

TEST_CASE("likelihood matches a direct sum on a tiny system") {
  const auto g = ProjectionGeometry::for_image(2, 1);
  const SystemMatrix a(g, std::vector<double>{0.0, 45.0});
  const Image x = random_image(g.image_shape(), 3, 0.0, 2.0);
  TiltSeries ts = series_for(a, x, 0.0);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 2.0);
  std::uniform_real_distribution<double> wt(0.5, 3.0);
  for (std::size_t m = 0; m < ts.y.size(); ++m) {
    ts.y[m] += gauss(rng);
    ts.weights[m] = wt(rng);
  }
  const NuisanceParams nu{{0.3, -0.4}, 0.8};
  const HuberParams hp{1.2, 0.3};
  const Eigen::MatrixXd dense = Eigen::MatrixXd(a.matrix());
  double expect = 0.0;
  for (std::size_t m = 0; m < ts.y.size(); ++m) {
    double ax = 0.0;
    for (std::size_t j = 0; j < 2; ++j) ax += dense(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) * x[j];
    const double e = (ts.y[m] - ax - nu.offsets[m / ts.bins]) * std::sqrt(ts.weights[m]) / nu.sigma;
    const double ae = std::abs(e);
    expect += 0.5 * (ae < hp.threshold ? e * e
                                       : 2 * hp.delta * hp.threshold * ae +
                                             hp.threshold * hp.threshold * (1 - 2 * hp.delta));
  }
  expect += static_cast<double>(ts.y.size()) * std::log(nu.sigma);
  CHECK(tomo_likelihood(x, nu, ts, a, hp) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("ICD reaches the dense normal-equation solution on a 4x4, 8-ray system") {
  const auto g = ProjectionGeometry::for_image(4, 4);
  const SystemMatrix a(g, std::vector<double>{30.0});
  REQUIRE(a.measurements() == 8);
  const Image truth = random_image(g.image_shape(), 4, 2.0, 4.0);
  TiltSeries ts = series_for(a, truth, 0.5);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 0.05);
  for (double& v : ts.y) v += gauss(rng);
  const NuisanceParams nu{{0.5}, 1.0};
  const Image x_tilde = random_image(g.image_shape(), 6, 2.5, 3.5);
  const double sigma_lambda = 2.0;

  // Residuals stay far below the threshold, so every q equals 1.
  const Eigen::MatrixXd dense = Eigen::MatrixXd(a.matrix());
  const auto n = static_cast<Eigen::Index>(g.nx * g.nz);
  Eigen::VectorXd rhs(n), xt(n);
  for (Eigen::Index j = 0; j < n; ++j) xt(j) = x_tilde[static_cast<std::size_t>(j)];
  Eigen::VectorXd yd(dense.rows());
  for (Eigen::Index m = 0; m < dense.rows(); ++m) yd(m) = ts.y[static_cast<std::size_t>(m)] - 0.5;
  const double p = 1.0 / (sigma_lambda * sigma_lambda);
  const Eigen::MatrixXd h = dense.transpose() * dense + p * Eigen::MatrixXd::Identity(n, n);
  rhs = dense.transpose() * yd + p * xt;
  const Eigen::VectorXd expect = h.ldlt().solve(rhs);
  REQUIRE(expect.minCoeff() > 0.0);

  Image x = clip_nonnegative(x_tilde);
  auto e = data_residual(x, nu, ts, a);
  const auto coeff = surrogate_coefficients(e, ts.weights, nu.sigma, {});
  icd_sweeps(x, e, coeff, a, x_tilde, sigma_lambda, 2000);
  for (Eigen::Index j = 0; j < n; ++j) CHECK(std::abs(x[static_cast<std::size_t>(j)] - expect(j)) <= 1e-6);
  const auto fresh = data_residual(x, nu, ts, a);
  for (std::size_t m = 0; m < e.size(); ++m) CHECK(e[m] == doctest::Approx(fresh[m]).epsilon(1e-10));
}

TEST_CASE("ICD clips at zero") {
  const auto g = ProjectionGeometry::for_image(3, 3);
  const SystemMatrix a(g, std::vector<double>{0.0, 90.0 - 1.0});
  TiltSeries ts = series_for(a, Image(g.image_shape()), 0.0);
  for (double& v : ts.y) v = -5.0;
  const NuisanceParams nu{{0.0, 0.0}, 1.0};
  Image x(g.image_shape(), 1.0);
  auto e = data_residual(x, nu, ts, a);
  const auto coeff = surrogate_coefficients(e, ts.weights, 1.0, {1e9, 0.5});
  icd_sweeps(x, e, coeff, a, Image(g.image_shape()), 1.0, 20);
  CHECK(x.min() >= 0.0);
  CHECK(x.max() == 0.0);
}

TEST_CASE("offset update absorbs a constant shift exactly") {
  const auto g = ProjectionGeometry::for_image(8, 8);
  const SystemMatrix a(g, equally_spaced_angles(5, -60.0, 60.0));
  const Image x = random_image(g.image_shape(), 7, 0.0, 1.0);
  const TiltSeries ts = series_for(a, x, 0.0);
  NuisanceParams nu{std::vector<double>(5, 0.0), 1.0};
  std::vector<double> shifts{0.3, -1.1, 2.0, 0.0, 0.7};
  TiltSeries shifted = ts;
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t i = 0; i < ts.bins; ++i) shifted.y[k * ts.bins + i] += shifts[k];
  auto e = data_residual(x, nu, shifted, a);
  const auto coeff = surrogate_coefficients(e, shifted.weights, 1.0, {});
  update_offsets(nu.offsets, e, coeff, ts.bins);
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(nu.offsets[k] - shifts[k]) <= 1e-10);
  for (double v : e) CHECK(std::abs(v) <= 1e-10);
}

TEST_CASE("sigma update minimizes the exact likelihood") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> gauss(0.0, 0.4);
  std::vector<double> e(500), w(500, 1.0);
  for (double& v : e) v = gauss(rng);
  const HuberParams hp{1e9, 0.5};
  // Quadratic branch only: the minimizer is the RMS residual.
  double ss = 0.0;
  for (double v : e) ss += v * v;
  CHECK(update_sigma(e, w, 5.0, hp) == doctest::Approx(std::sqrt(ss / 500.0)).epsilon(1e-8));
  const HuberParams robust{3.0, 0.5};
  const double s = update_sigma(e, w, 1.0, robust);
  const double l = likelihood_from_residual(e, w, s, robust);
  CHECK(l <= likelihood_from_residual(e, w, s * 1.001, robust));
  CHECK(l <= likelihood_from_residual(e, w, s / 1.001, robust));
}

TEST_CASE("gross outliers get down-weighted") {
  const auto g = ProjectionGeometry::for_image(16, 16);
  const SystemMatrix a(g, equally_spaced_angles(30, -90.0, 84.0));
  const Image truth = random_image(g.image_shape(), 10, 0.5, 1.5);
  TiltSeries clean = series_for(a, truth, 0.0);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 0.02);
  for (double& v : clean.y) v += gauss(rng);
  TiltSeries dirty = clean;
  const std::size_t bad = 4 * clean.bins + clean.bins / 2;
  dirty.y[bad] += 50.0;

  const HuberParams hp{3.0, 0.5};
  const NuisanceParams nu{std::vector<double>(30, 0.0), 0.02};
  const Image start(g.image_shape(), 1.0);
  TomoProxOptions opts;
  opts.passes = 40;
  const auto ref = tomo_prox(start, clean, a, hp, 10.0, nu, nullptr, opts);
  const auto got = tomo_prox(start, dirty, a, hp, 10.0, nu, nullptr, opts);
  const auto e = data_residual(got.x, got.nuisance, dirty, a);
  const double z = e[bad] / got.nuisance.sigma;
  CHECK(std::abs(z) > hp.threshold);
  CHECK(huber_surrogate_weight(z, hp) < hp.delta * hp.threshold / std::abs(z) * (1 + 1e-9));
  // A single gross outlier still inflates sigma (its loss is linear in 1/sigma),
  // so the robust fit loses some accuracy, but far less than a quadratic loss.
  const HuberParams quadratic{1e9, 0.5};
  const auto l2 = tomo_prox(start, dirty, a, quadratic, 10.0, nu, nullptr, opts);
  const double err = rmse(got.x, truth);
  CHECK(err < 3.0 * rmse(ref.x, truth));
  CHECK(err < 0.1 * rmse(l2.x, truth));
}

TEST_CASE("no tilts or a vanishing prior scale returns the clipped input") {
  const auto g = ProjectionGeometry::for_image(6, 6);
  const Image x_tilde = random_image(g.image_shape(), 12, -1.0, 1.0);
  TiltSeries empty;
  const SystemMatrix none;
  const auto r0 = tomo_prox(x_tilde, empty, none, {}, 1.0, {});
  for (std::size_t i = 0; i < x_tilde.size(); ++i) CHECK(r0.x[i] == std::max(0.0, x_tilde[i]));

  const SystemMatrix a(g, equally_spaced_angles(4, -60.0, 60.0));
  const TiltSeries ts = series_for(a, random_image(g.image_shape(), 13, 0.0, 1.0), 0.0);
  const auto r1 = tomo_prox(x_tilde, ts, a, {}, 1e-9, {std::vector<double>(4, 0.0), 1.0});
  for (std::size_t i = 0; i < x_tilde.size(); ++i) CHECK(std::abs(r1.x[i] - std::max(0.0, x_tilde[i])) <= 1e-12);
  CHECK_THROWS_AS(tomo_prox(x_tilde, ts, a, {}, 0.0, {std::vector<double>(4, 0.0), 1.0}), std::invalid_argument);
}

TEST_CASE("every prox sub-step lowers the cost") {
  const auto g = ProjectionGeometry::for_image(24, 24);
  const SystemMatrix a(g, equally_spaced_angles(11, -70.0, 70.0));
  const Phantom ph = disk_phantom(g.image_shape(), default_disk_layout(24, 24));
  TiltSimulation sim;
  sim.outlier_fraction = 0.05;
  sim.seed = 3;
  const auto data = simulate_tilt_series(ph.image, a, sim);
  const Image x_tilde = fbp_reconstruct(data.series, g);
  auto nu = initial_nuisance(x_tilde, data.series, a);
  for (int call = 0; call < 4; ++call) {
    const auto res = tomo_prox(x_tilde, data.series, a, {}, 5e-3, nu);
    CHECK(res.trace.violations() == 0);
    CHECK(res.trace.steps.front() == ProxStep::start);
    CHECK(res.trace.costs.size() == 1 + 3 * 3);
    const double direct = tomo_cost(res.x, res.nuisance, x_tilde, 5e-3, data.series, a, {});
    CHECK(direct == doctest::Approx(res.trace.costs.back()).epsilon(1e-9));
    nu = res.nuisance;
  }
}

TEST_CASE("initial nuisance uses per-tilt medians and a robust scale") {
  const auto g = ProjectionGeometry::for_image(8, 8);
  const SystemMatrix a(g, equally_spaced_angles(3, -45.0, 45.0));
  const Image x = random_image(g.image_shape(), 14, 0.0, 1.0);
  const TiltSeries ts = series_for(a, x, -3.0);
  const auto nu = initial_nuisance(x, ts, a);
  for (double d : nu.offsets) CHECK(d == doctest::Approx(-3.0));
  CHECK(nu.sigma == 1.0);
}

TEST_CASE("sinogram round trip") {
  const auto dir = fs::temp_directory_path() / "pnp_unit";
  fs::create_directories(dir);
  const auto g = ProjectionGeometry::for_image(5, 5);
  const SystemMatrix a(g, std::vector<double>{-20.0, 0.0, 35.5});
  TiltSeries ts = series_for(a, random_image(g.image_shape(), 15, 0.0, 1.0), 0.25);
  for (std::size_t m = 0; m < ts.weights.size(); ++m) ts.weights[m] = 1.0 + static_cast<double>(m);
  write_sinogram(dir / "sino.txt", ts);
  write_sinogram_weights(dir / "sino_w.txt", ts);
  const TiltSeries back = read_sinogram(dir / "sino.txt", dir / "sino_w.txt");
  CHECK(back.angles_deg == ts.angles_deg);
  CHECK(back.bins == ts.bins);
  CHECK(back.y == ts.y);
  CHECK(back.weights == ts.weights);
  CHECK(read_sinogram(dir / "sino.txt").weights == std::vector<double>(ts.measurements(), 1.0));
  CHECK_THROWS_AS(read_sinogram(dir / "missing.txt"), FormatError);
}

TEST_CASE("FBP of a centered disk") {
  const std::size_t n = 64;
  const auto g = ProjectionGeometry::for_image(n, n);
  const std::vector<Disk> disk{{0.0, 0.0, 20.0, 1.0}};
  const Image truth = disk_phantom(g.image_shape(), disk).image;
  const SystemMatrix full(g, equally_spaced_angles(90, -90.0, 88.0));
  const double err_full = normalized_rmse(fbp_reconstruct(series_for(full, truth, 0.0), g, "ram-lak", std::vector<double>(90, 0.0)), truth);
  CHECK(err_full < 0.10);
  const SystemMatrix limited(g, equally_spaced_angles(47, -70.0, 70.0));
  const double err_lim = normalized_rmse(fbp_reconstruct(series_for(limited, truth, 0.0), g, "ram-lak", std::vector<double>(47, 0.0)), truth);
  CHECK(err_lim > err_full);
  CHECK(fbp_reconstruct(series_for(full, Image(g.image_shape()), 0.0), g, "ram-lak", std::vector<double>(90, 0.0)).max() == 0.0);
}

TEST_CASE("FBP rejects bad inputs") {
  const auto g = ProjectionGeometry::for_image(8, 8);
  const SystemMatrix one(g, std::vector<double>{0.0});
  const TiltSeries single = series_for(one, Image(g.image_shape()), 0.0);
  CHECK_THROWS_AS(fbp_reconstruct(single, g), std::invalid_argument);
  const SystemMatrix two(g, std::vector<double>{0.0, 45.0});
  const TiltSeries ts = series_for(two, Image(g.image_shape()), 0.0);
  CHECK_THROWS_AS(fbp_reconstruct(ts, g, "hann"), std::invalid_argument);
  CHECK_THROWS_AS(fbp_reconstruct(ts, ProjectionGeometry::for_image(16, 16)), ShapeError);
}
