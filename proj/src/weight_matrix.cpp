#include "pnp/weight_matrix.hpp"

#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace pnp {

WeightMatrix::WeightMatrix(Shape shape, int search_radius)
    : shape_(shape), radius_(search_radius), diag_(shape.size(), 0.0) {
  if (search_radius < 0) throw std::invalid_argument("search radius must be nonnegative");
  // Axes of extent 1 carry no window; offsets reaching past the lattice carry
  // no pairs and are dropped.
  auto clamp_radius = [&](std::size_t extent) {
    return extent > 1 ? std::min(search_radius, static_cast<int>(extent) - 1) : 0;
  };
  rx_ = clamp_radius(shape.nx);
  ry_ = clamp_radius(shape.ny);
  rz_ = clamp_radius(shape.nz);
  slot_of_offset_.assign(static_cast<std::size_t>((2 * rx_ + 1) * (2 * ry_ + 1) * (2 * rz_ + 1)),
                         -1);
  for (int dz = -rz_; dz <= rz_; ++dz) {
    for (int dy = -ry_; dy <= ry_; ++dy) {
      for (int dx = -rx_; dx <= rx_; ++dx) {
        const bool positive = dz > 0 || (dz == 0 && (dy > 0 || (dy == 0 && dx > 0)));
        if (!positive) continue;
        const auto linear =
            (static_cast<std::ptrdiff_t>(dz) * static_cast<std::ptrdiff_t>(shape.ny) + dy) *
                static_cast<std::ptrdiff_t>(shape.nx) +
            dx;
        slot_of_offset_[static_cast<std::size_t>(offset_slot(dx, dy, dz))] =
            static_cast<int>(offsets_.size());
        offsets_.push_back({dx, dy, dz, linear});
      }
    }
  }
  bands_.assign(offsets_.size(), std::vector<double>(shape.size(), 0.0));
}

WeightMatrix WeightMatrix::identity(Shape shape) {
  WeightMatrix w(shape, 0);
  std::fill(w.diag_.begin(), w.diag_.end(), 1.0);
  return w;
}

std::ptrdiff_t WeightMatrix::offset_slot(int dx, int dy, int dz) const {
  return (static_cast<std::ptrdiff_t>(dz + rz_) * (2 * ry_ + 1) + (dy + ry_)) * (2 * rx_ + 1) +
         (dx + rx_);
}

bool WeightMatrix::pair_valid(std::size_t s, std::size_t o) const {
  const auto& off = offsets_[o];
  const auto x = static_cast<long>(s % shape_.nx);
  const auto y = static_cast<long>((s / shape_.nx) % shape_.ny);
  const auto z = static_cast<long>(s / (shape_.nx * shape_.ny));
  return x + off.dx >= 0 && x + off.dx < static_cast<long>(shape_.nx) && y + off.dy >= 0 &&
         y + off.dy < static_cast<long>(shape_.ny) && z + off.dz >= 0 &&
         z + off.dz < static_cast<long>(shape_.nz);
}

void WeightMatrix::set_row_scale(std::vector<double> scale) {
  if (!scale.empty() && scale.size() != size()) {
    throw ShapeError("row scale length does not match matrix size");
  }
  row_scale_ = std::move(scale);
}

double WeightMatrix::entry(std::size_t row, std::size_t col) const {
  const double scale = symmetric() ? 1.0 : row_scale_[row];
  if (row == col) return scale * diag_[row];
  const auto nx = shape_.nx, ny = shape_.ny;
  const long dx = static_cast<long>(col % nx) - static_cast<long>(row % nx);
  const long dy = static_cast<long>((col / nx) % ny) - static_cast<long>((row / nx) % ny);
  const long dz = static_cast<long>(col / (nx * ny)) - static_cast<long>(row / (nx * ny));
  if (std::labs(dx) > rx_ || std::labs(dy) > ry_ || std::labs(dz) > rz_) return 0.0;
  const int slot = slot_of_offset_[static_cast<std::size_t>(
      offset_slot(static_cast<int>(dx), static_cast<int>(dy), static_cast<int>(dz)))];
  if (slot >= 0) return scale * bands_[static_cast<std::size_t>(slot)][row];
  const int mirror = slot_of_offset_[static_cast<std::size_t>(
      offset_slot(static_cast<int>(-dx), static_cast<int>(-dy), static_cast<int>(-dz)))];
  return scale * bands_[static_cast<std::size_t>(mirror)][col];
}

void WeightMatrix::set_pair(std::size_t a, std::size_t b, double w) {
  if (a == b) throw std::invalid_argument("set_pair: use diagonal() for diagonal entries");
  const std::size_t lo = std::min(a, b), hi = std::max(a, b);
  const auto nx = shape_.nx, ny = shape_.ny;
  const long dx = static_cast<long>(hi % nx) - static_cast<long>(lo % nx);
  const long dy = static_cast<long>((hi / nx) % ny) - static_cast<long>((lo / nx) % ny);
  const long dz = static_cast<long>(hi / (nx * ny)) - static_cast<long>(lo / (nx * ny));
  if (std::labs(dx) > rx_ || std::labs(dy) > ry_ || std::labs(dz) > rz_) {
    throw std::invalid_argument("set_pair: pixels are outside each other's search window");
  }
  const int slot = slot_of_offset_[static_cast<std::size_t>(
      offset_slot(static_cast<int>(dx), static_cast<int>(dy), static_cast<int>(dz)))];
  bands_[static_cast<std::size_t>(slot)][lo] = w;
}

void WeightMatrix::apply_kernel(std::span<const double> x, std::span<double> y) const {
  const auto nx = static_cast<int>(shape_.nx);
  const auto ny = static_cast<int>(shape_.ny);
  const auto nz = static_cast<int>(shape_.nz);
  const int lines = ny * nz;
  // Gather form, one output line per task: every y[s] is accumulated in the
  // same order regardless of thread count.
#pragma omp parallel for schedule(static)
  for (int line = 0; line < lines; ++line) {
    const int yy = line % ny;
    const int zz = line / ny;
    const auto base = static_cast<std::ptrdiff_t>(line) * nx;
    double* out = y.data() + base;
    const double* in = x.data();
    for (int i = 0; i < nx; ++i) out[i] = diag_[static_cast<std::size_t>(base + i)] * in[base + i];
    for (std::size_t o = 0; o < offsets_.size(); ++o) {
      const auto& off = offsets_[o];
      const double* b = bands_[o].data();
      const std::ptrdiff_t delta = off.linear;
      const int yf = yy + off.dy, zf = zz + off.dz;
      if (yf >= 0 && yf < ny && zf >= 0 && zf < nz) {
        const int x0 = std::max(0, -off.dx), x1 = nx - std::max(0, off.dx);
        for (int i = x0; i < x1; ++i) out[i] += b[base + i] * in[base + i + delta];
      }
      const int yb = yy - off.dy, zb = zz - off.dz;
      if (yb >= 0 && yb < ny && zb >= 0 && zb < nz) {
        const int x0 = std::max(0, off.dx), x1 = nx - std::max(0, -off.dx);
        for (int i = x0; i < x1; ++i) out[i] += b[base + i - delta] * in[base + i - delta];
      }
    }
  }
}

Image WeightMatrix::apply(const Image& x) const {
  if (x.size() != size()) {
    throw ShapeError("weight matrix of size " + std::to_string(size()) +
                     " applied to image with " + std::to_string(x.size()) + " pixels");
  }
  Image y(x.shape(), 0.0, x.pixel_pitch());
  apply_kernel(x.values(), y.values());
  if (!symmetric()) {
    for (std::size_t s = 0; s < size(); ++s) y[s] *= row_scale_[s];
  }
  return y;
}

Image WeightMatrix::apply_transpose(const Image& x) const {
  if (x.size() != size()) {
    throw ShapeError("weight matrix of size " + std::to_string(size()) +
                     " applied to image with " + std::to_string(x.size()) + " pixels");
  }
  if (symmetric()) return apply(x);
  Image scaled = x;
  for (std::size_t s = 0; s < size(); ++s) scaled[s] *= row_scale_[s];
  Image y(x.shape(), 0.0, x.pixel_pitch());
  apply_kernel(scaled.values(), y.values());
  return y;
}

std::vector<double> WeightMatrix::row_sums() const {
  return apply(Image(shape_, 1.0)).storage();
}

std::vector<double> WeightMatrix::column_sums() const {
  return apply_transpose(Image(shape_, 1.0)).storage();
}

std::size_t WeightMatrix::stored_pairs() const {
  std::size_t n = 0;
  for (std::size_t o = 0; o < offsets_.size(); ++o) for_each_valid(o, [&](std::size_t) { ++n; });
  return n;
}

void WeightMatrix::write_triplets(std::ostream& os) const {
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(17);
  for_each_entry([&](std::size_t r, std::size_t c, double w) { os << r << ' ' << c << ' ' << w << '\n'; });
  os.flags(flags);
  os.precision(precision);
}

Eigen::MatrixXd WeightMatrix::to_dense() const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  const bool sym = symmetric();
  for_each_entry([&](std::size_t r, std::size_t c, double w) {
    m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w;
    if (sym) m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = w;
  });
  return m;
}

}  // namespace pnp
