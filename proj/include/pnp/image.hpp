#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pnp {

/// Raised when two arrays that must agree in shape do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Extent of a dense raster. Row-major, x fastest: index = (z*ny + y)*nx + x.
struct Shape {
  std::size_t nx = 0;
  std::size_t ny = 1;
  std::size_t nz = 1;

  std::size_t size() const { return nx * ny * nz; }
  /// Number of axes with extent > 1 (a 1-row raster is one-dimensional).
  int active_dims() const { return (nx > 1) + (ny > 1) + (nz > 1); }
  std::string to_string() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense real-valued 2D/3D image with a physical pixel pitch.
class Image {
 public:
  Image() = default;
  explicit Image(Shape shape, double fill = 0.0, double pixel_pitch = 1.0);
  Image(Shape shape, std::vector<double> values, double pixel_pitch = 1.0);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t width() const { return shape_.nx; }
  std::size_t height() const { return shape_.ny; }
  std::size_t depth() const { return shape_.nz; }
  bool empty() const { return values_.empty(); }

  double pixel_pitch() const { return pitch_; }
  void set_pixel_pitch(double pitch) { pitch_ = pitch; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t x, std::size_t y, std::size_t z = 0) {
    return values_[(z * shape_.ny + y) * shape_.nx + x];
  }
  double at(std::size_t x, std::size_t y, std::size_t z = 0) const {
    return values_[(z * shape_.ny + y) * shape_.nx + x];
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& storage() { return values_; }
  const std::vector<double>& storage() const { return values_; }

  bool all_finite() const;
  double min() const;
  double max() const;

  Image& operator+=(const Image& other);
  Image& operator-=(const Image& other);
  Image& operator*=(double s);

  friend Image operator+(Image a, const Image& b) { return a += b; }
  friend Image operator-(Image a, const Image& b) { return a -= b; }
  friend Image operator*(Image a, double s) { return a *= s; }

 private:
  Shape shape_{};
  std::vector<double> values_;
  double pitch_ = 1.0;
};

/// Throws ShapeError naming `what` if the shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const std::string& what);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
inline double norm2(const Image& a) { return norm2(a.values()); }
/// ||a - b||_2 without materializing the difference.
double distance(const Image& a, const Image& b);

/// [x]_+ applied pixelwise.
Image clip_nonnegative(Image x);

double mean(const Image& x);
/// Pixel variance with denominator n.
double variance(const Image& x);

}  // namespace pnp
