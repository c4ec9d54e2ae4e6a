#pragma once

#include <algorithm>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pnp/image.hpp"

namespace pnp {

/// Lattice displacement between two pixels; `linear` is the row-major index delta.
struct LatticeOffset {
  int dx = 0;
  int dy = 0;
  int dz = 0;
  std::ptrdiff_t linear = 0;
};

/// Sparse N x N matrix whose nonzeros are confined to a search window
/// ||r - s||_inf <= R on the pixel lattice.
///
/// The matrix is W = diag(row_scale) * K with K symmetric. K is stored as one
/// diagonal plus one band per lexicographically positive window offset o,
/// where band(o)[s] holds K(s, s+o) = K(s+o, s). Each unordered pair is
/// therefore stored exactly once and symmetry of K is structural. When no row
/// scale is set W = K is symmetric.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  /// All-zero matrix with the window structure of `shape` / `search_radius`.
  WeightMatrix(Shape shape, int search_radius);

  static WeightMatrix identity(Shape shape);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return shape_.size(); }
  int search_radius() const { return radius_; }

  const std::vector<LatticeOffset>& offsets() const { return offsets_; }
  std::span<double> band(std::size_t o) { return bands_[o]; }
  std::span<const double> band(std::size_t o) const { return bands_[o]; }
  std::span<double> diagonal() { return diag_; }
  std::span<const double> diagonal() const { return diag_; }

  /// True iff pixel s and s + offsets()[o] both lie on the lattice.
  bool pair_valid(std::size_t s, std::size_t o) const;

  /// Calls f(s) for every s with a valid partner s + offsets()[o].
  template <class F>
  void for_each_valid(std::size_t o, F&& f) const;

  bool symmetric() const { return row_scale_.empty(); }
  void set_row_scale(std::vector<double> scale);
  std::span<const double> row_scale() const { return row_scale_; }

  /// W(row, col); zero outside the window.
  double entry(std::size_t row, std::size_t col) const;
  /// Sets K(a, b) = K(b, a) = w for a != b inside the window.
  void set_pair(std::size_t a, std::size_t b, double w);

  Image apply(const Image& x) const;
  Image apply_transpose(const Image& x) const;
  std::vector<double> row_sums() const;
  std::vector<double> column_sums() const;

  /// Number of stored unordered off-diagonal pairs that are on the lattice.
  std::size_t stored_pairs() const;

  /// Visits the stored structure: f(row, col, value) for every nonzero with
  /// row <= col (symmetric W), or for every nonzero W(row, col) otherwise.
  template <class F>
  void for_each_entry(F&& f) const;

  /// `row col weight` text triplets, one per stored entry.
  void write_triplets(std::ostream& os) const;

  /// Dense copy; intended for small images only.
  Eigen::MatrixXd to_dense() const;

 private:
  std::ptrdiff_t offset_slot(int dx, int dy, int dz) const;
  void apply_kernel(std::span<const double> x, std::span<double> y) const;

  Shape shape_{};
  int radius_ = 0;
  int rx_ = 0, ry_ = 0, rz_ = 0;
  std::vector<LatticeOffset> offsets_;
  std::vector<int> slot_of_offset_;
  std::vector<std::vector<double>> bands_;
  std::vector<double> diag_;
  std::vector<double> row_scale_;
};

template <class F>
void WeightMatrix::for_each_valid(std::size_t o, F&& f) const {
  const auto& off = offsets_[o];
  const auto nx = static_cast<int>(shape_.nx);
  const auto ny = static_cast<int>(shape_.ny);
  const auto nz = static_cast<int>(shape_.nz);
  const int x0 = std::max(0, -off.dx), x1 = nx - std::max(0, off.dx);
  const int y0 = std::max(0, -off.dy), y1 = ny - std::max(0, off.dy);
  const int z0 = std::max(0, -off.dz), z1 = nz - std::max(0, off.dz);
  for (int z = z0; z < z1; ++z) {
    for (int y = y0; y < y1; ++y) {
      const std::size_t base = (static_cast<std::size_t>(z) * shape_.ny + y) * shape_.nx;
      for (int x = x0; x < x1; ++x) f(base + static_cast<std::size_t>(x));
    }
  }
}

template <class F>
void WeightMatrix::for_each_entry(F&& f) const {
  const bool sym = symmetric();
  for (std::size_t s = 0; s < size(); ++s) {
    const double scale = sym ? 1.0 : row_scale_[s];
    if (diag_[s] != 0.0) f(s, s, scale * diag_[s]);
  }
  for (std::size_t o = 0; o < offsets_.size(); ++o) {
    const auto& band = bands_[o];
    const std::ptrdiff_t delta = offsets_[o].linear;
    for_each_valid(o, [&](std::size_t s) {
      const double w = band[s];
      if (w == 0.0) return;
      const auto r = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s) + delta);
      if (sym) {
        f(s, r, w);
      } else {
        f(s, r, row_scale_[s] * w);
        f(r, s, row_scale_[r] * w);
      }
    });
  }
}

}  // namespace pnp
