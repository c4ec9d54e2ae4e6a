#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "pnp/image.hpp"

namespace pnp {

/// 2D parallel-beam geometry for an x-z slice. Pixel (ix, iz) is centered at
/// ((ix - (nx-1)/2) p, (iz - (nz-1)/2) p); a ray at tilt theta and detector
/// offset t is the line x cos(theta) + z sin(theta) = t, so at 0 degrees the
/// beam runs along z. Bin i sits at t_i = (i - (bins-1)/2) * bin_spacing.
struct ProjectionGeometry {
  std::size_t nx = 0;
  std::size_t nz = 0;
  double pixel_pitch = 1.0;  ///< nm
  std::size_t bins = 0;
  double bin_spacing = 1.0;  ///< nm

  /// Detector wide enough for every angle, with bins aligned to pixel
  /// centers at 0 degrees.
  static ProjectionGeometry for_image(std::size_t nx, std::size_t nz, double pixel_pitch = 1.0);

  Shape image_shape() const { return {nx, nz, 1}; }
  double bin_center(std::size_t i) const;
  double pixel_x(std::size_t ix) const;
  double pixel_z(std::size_t iz) const;
};

/// Length of the line at signed distance d from a pixel center, at the given
/// tilt, inside that pixel's square (a trapezoid in d).
class PixelFootprint {
 public:
  PixelFootprint(double angle_deg, double pixel_pitch);
  double half_width() const { return half_width_; }
  double chord(double d) const;

 private:
  double half_width_;
  double plateau_;
  double peak_;
};

/// Stacked line-length projection matrix A = [A_1; ...; A_K], (K*M) x N,
/// stored column-major so that each pixel's rays are contiguous.
class SystemMatrix {
 public:
  using Sparse = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  SystemMatrix() = default;
  SystemMatrix(const ProjectionGeometry& geom, std::span<const double> angles_deg);

  const ProjectionGeometry& geometry() const { return geom_; }
  const std::vector<double>& angles() const { return angles_; }
  std::size_t tilts() const { return angles_.size(); }
  std::size_t measurements() const { return static_cast<std::size_t>(a_.rows()); }
  std::size_t pixels() const { return static_cast<std::size_t>(a_.cols()); }
  const Sparse& matrix() const { return a_; }

  /// A x, tilt-major (entry k*M + i).
  std::vector<double> project(const Image& x) const;
  /// A^T r.
  Image backproject(std::span<const double> r) const;

 private:
  ProjectionGeometry geom_;
  std::vector<double> angles_;
  Sparse a_;
};

/// A_k x for a single tilt.
std::vector<double> project(const Image& x, const ProjectionGeometry& geom, double angle_deg);
/// A_k^T r for a single tilt.
Image backproject(std::span<const double> r, const ProjectionGeometry& geom, double angle_deg);

/// `count` equally spaced angles covering [first, last] inclusive.
std::vector<double> equally_spaced_angles(std::size_t count, double first_deg, double last_deg);

}  // namespace pnp
