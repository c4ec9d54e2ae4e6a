#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pnp/tomo.hpp"

namespace pnp {

namespace {

// Band-limited ramp sampled at the bin spacing tau.
std::vector<double> ram_lak_kernel(std::size_t bins, double tau) {
  std::vector<double> h(2 * bins - 1, 0.0);
  const long c = static_cast<long>(bins) - 1;
  const double pi2 = std::numbers::pi * std::numbers::pi;
  for (long n = -c; n <= c; ++n) {
    double v = 0.0;
    if (n == 0) {
      v = 1.0 / (4.0 * tau * tau);
    } else if (n % 2 != 0) {
      v = -1.0 / (pi2 * static_cast<double>(n * n) * tau * tau);
    }
    h[static_cast<std::size_t>(n + c)] = v;
  }
  return h;
}

}  // namespace

std::vector<double> background_offsets(const TiltSeries& ts) {
  std::vector<double> d(ts.tilts(), 0.0);
  for (std::size_t k = 0; k < ts.tilts(); ++k) {
    auto row = ts.tilt(k);
    std::vector<double> v(row.begin(), row.end());
    std::sort(v.begin(), v.end());
    const std::size_t take = std::max<std::size_t>(1, v.size() / 10);
    double acc = 0.0;
    for (std::size_t i = 0; i < take; ++i) acc += v[i];
    d[k] = acc / static_cast<double>(take);
  }
  return d;
}

Image fbp_reconstruct(const TiltSeries& ts, const ProjectionGeometry& geom,
                      const std::string& filter, std::span<const double> offsets) {
  if (filter != "ram-lak") throw std::invalid_argument("unknown FBP filter '" + filter + "'");
  if (ts.tilts() < 2) throw std::invalid_argument("filtered backprojection needs at least 2 tilts");
  if (ts.bins != geom.bins) throw ShapeError("tilt series bins do not match the detector");
  if (ts.y.size() != ts.measurements()) throw ShapeError("tilt series measurement count mismatch");

  std::vector<double> d;
  if (!offsets.empty()) {
    d.assign(offsets.begin(), offsets.end());
  } else if (!ts.blank_offsets.empty()) {
    d = ts.blank_offsets;
  } else {
    d = background_offsets(ts);
  }
  if (d.size() != ts.tilts()) throw ShapeError("need one offset per tilt");

  const std::size_t m = ts.bins;
  const double tau = geom.bin_spacing;
  const auto h = ram_lak_kernel(m, tau);
  const std::size_t k_count = ts.tilts();

  std::vector<double> filtered(k_count * m, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    const double* p = ts.y.data() + k * m;
    double* q = filtered.data() + k * m;
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += h[i + (m - 1) - j] * (p[j] - d[k]);
      q[i] = tau * acc;
    }
  }

  const double span_rad = (ts.angles_deg.back() - ts.angles_deg.front()) * std::numbers::pi / 180.0;
  const double dtheta = std::abs(span_rad) / static_cast<double>(k_count - 1);
  std::vector<double> cs(k_count), sn(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const double th = ts.angles_deg[k] * std::numbers::pi / 180.0;
    cs[k] = std::cos(th);
    sn[k] = std::sin(th);
  }

  Image out(geom.image_shape(), 0.0, geom.pixel_pitch);
  const double t0 = geom.bin_center(0);
#pragma omp parallel for schedule(static)
  for (std::size_t iz = 0; iz < geom.nz; ++iz) {
    const double z = geom.pixel_z(iz);
    for (std::size_t ix = 0; ix < geom.nx; ++ix) {
      const double x = geom.pixel_x(ix);
      double acc = 0.0;
      for (std::size_t k = 0; k < k_count; ++k) {
        const double pos = (x * cs[k] + z * sn[k] - t0) / tau;
        const double fl = std::floor(pos);
        const long i0 = static_cast<long>(fl);
        const double w = pos - fl;
        const double* q = filtered.data() + k * m;
        double v = 0.0;
        if (i0 >= 0 && i0 < static_cast<long>(m)) v += (1.0 - w) * q[i0];
        if (i0 + 1 >= 0 && i0 + 1 < static_cast<long>(m)) v += w * q[i0 + 1];
        acc += v;
      }
      out.at(ix, iz) = std::max(0.0, acc * dtheta);
    }
  }
  return out;
}

}  // namespace pnp
