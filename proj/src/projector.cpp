#include "pnp/projector.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pnp {

ProjectionGeometry ProjectionGeometry::for_image(std::size_t nx, std::size_t nz,
                                                 double pixel_pitch) {
  ProjectionGeometry g;
  g.nx = nx;
  g.nz = nz;
  g.pixel_pitch = pixel_pitch;
  g.bin_spacing = pixel_pitch;
  const double diag = std::hypot(static_cast<double>(nx), static_cast<double>(nz));
  auto bins = static_cast<std::size_t>(std::ceil(diag)) + 1;
  if ((bins % 2) != (nx % 2)) ++bins;
  g.bins = bins;
  return g;
}

double ProjectionGeometry::bin_center(std::size_t i) const {
  return (static_cast<double>(i) - 0.5 * static_cast<double>(bins - 1)) * bin_spacing;
}

double ProjectionGeometry::pixel_x(std::size_t ix) const {
  return (static_cast<double>(ix) - 0.5 * static_cast<double>(nx - 1)) * pixel_pitch;
}

double ProjectionGeometry::pixel_z(std::size_t iz) const {
  return (static_cast<double>(iz) - 0.5 * static_cast<double>(nz - 1)) * pixel_pitch;
}

PixelFootprint::PixelFootprint(double angle_deg, double pixel_pitch) {
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double a = std::abs(std::cos(theta));
  const double b = std::abs(std::sin(theta));
  half_width_ = 0.5 * pixel_pitch * (a + b);
  plateau_ = 0.5 * pixel_pitch * std::abs(a - b);
  peak_ = pixel_pitch / std::max(a, b);
}

double PixelFootprint::chord(double d) const {
  if (half_width_ - plateau_ <= 1e-12 * half_width_) {
    // Axis-aligned: a box profile; a ray exactly on a pixel edge belongs to
    // the pixel on its positive side only.
    return (d >= -half_width_ && d < half_width_) ? peak_ : 0.0;
  }
  const double ad = std::abs(d);
  if (ad >= half_width_) return 0.0;
  if (ad <= plateau_) return peak_;
  return peak_ * (half_width_ - ad) / (half_width_ - plateau_);
}

SystemMatrix::SystemMatrix(const ProjectionGeometry& geom, std::span<const double> angles_deg)
    : geom_(geom), angles_(angles_deg.begin(), angles_deg.end()) {
  if (geom.nx == 0 || geom.nz == 0 || geom.bins == 0) {
    throw std::invalid_argument("projection geometry has an empty grid or detector");
  }
  const std::size_t k_count = angles_.size();
  const std::size_t m = geom.bins;
  const std::size_t n = geom.nx * geom.nz;
  a_.resize(static_cast<Eigen::Index>(k_count * m), static_cast<Eigen::Index>(n));
  if (k_count == 0) return;

  std::vector<PixelFootprint> foot;
  std::vector<double> cos_t, sin_t;
  for (double ang : angles_) {
    foot.emplace_back(ang, geom.pixel_pitch);
    const double th = ang * std::numbers::pi / 180.0;
    cos_t.push_back(std::cos(th));
    sin_t.push_back(std::sin(th));
  }
  const double t0 = geom.bin_center(0);
  const double h_max = geom.pixel_pitch * std::sqrt(2.0) * 0.5;
  const auto per_col = static_cast<int>(k_count * (std::ceil(2.0 * h_max / geom.bin_spacing) + 2));
  a_.reserve(Eigen::VectorXi::Constant(static_cast<Eigen::Index>(n), per_col));

  for (std::size_t iz = 0; iz < geom.nz; ++iz) {
    const double z = geom.pixel_z(iz);
    for (std::size_t ix = 0; ix < geom.nx; ++ix) {
      const double x = geom.pixel_x(ix);
      const auto col = static_cast<Eigen::Index>(iz * geom.nx + ix);
      for (std::size_t k = 0; k < k_count; ++k) {
        const double tc = x * cos_t[k] + z * sin_t[k];
        const double h = foot[k].half_width();
        const long lo = std::max(0L, static_cast<long>(std::ceil((tc - h - t0) / geom.bin_spacing)));
        const long hi = std::min(static_cast<long>(m) - 1,
                                 static_cast<long>(std::floor((tc + h - t0) / geom.bin_spacing)));
        for (long i = lo; i <= hi; ++i) {
          const double len = foot[k].chord(geom.bin_center(static_cast<std::size_t>(i)) - tc);
          if (len > 0.0) {
            a_.insert(static_cast<Eigen::Index>(k * m + static_cast<std::size_t>(i)), col) = len;
          }
        }
      }
    }
  }
  a_.makeCompressed();
}

std::vector<double> SystemMatrix::project(const Image& x) const {
  if (x.size() != pixels()) {
    throw ShapeError("projector expects " + std::to_string(pixels()) + " pixels, got " +
                     std::to_string(x.size()));
  }
  std::vector<double> out(measurements(), 0.0);
  const double* xv = x.values().data();
  for (Eigen::Index j = 0; j < a_.outerSize(); ++j) {
    const double v = xv[j];
    if (v == 0.0) continue;
    for (Sparse::InnerIterator it(a_, j); it; ++it) out[static_cast<std::size_t>(it.row())] += it.value() * v;
  }
  return out;
}

Image SystemMatrix::backproject(std::span<const double> r) const {
  if (r.size() != measurements()) {
    throw ShapeError("backprojector expects " + std::to_string(measurements()) +
                     " measurements, got " + std::to_string(r.size()));
  }
  Image out(geom_.image_shape(), 0.0, geom_.pixel_pitch);
  auto ov = out.values();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < a_.outerSize(); ++j) {
    double acc = 0.0;
    for (Sparse::InnerIterator it(a_, j); it; ++it) acc += it.value() * r[static_cast<std::size_t>(it.row())];
    ov[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

std::vector<double> project(const Image& x, const ProjectionGeometry& geom, double angle_deg) {
  const double a[] = {angle_deg};
  return SystemMatrix(geom, a).project(x);
}

Image backproject(std::span<const double> r, const ProjectionGeometry& geom, double angle_deg) {
  const double a[] = {angle_deg};
  return SystemMatrix(geom, a).backproject(r);
}

std::vector<double> equally_spaced_angles(std::size_t count, double first_deg, double last_deg) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = first_deg;
    return out;
  }
  for (std::size_t k = 0; k < count; ++k) {
    out[k] = first_deg + (last_deg - first_deg) * static_cast<double>(k) /
                             static_cast<double>(count - 1);
  }
  return out;
}

}  // namespace pnp
