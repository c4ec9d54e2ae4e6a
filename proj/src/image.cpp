#include "pnp/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pnp {

std::string Shape::to_string() const {
  std::ostringstream os;
  os << nx << "x" << ny;
  if (nz > 1) os << "x" << nz;
  return os.str();
}

Image::Image(Shape shape, double fill, double pixel_pitch)
    : shape_(shape), values_(shape.size(), fill), pitch_(pixel_pitch) {}

Image::Image(Shape shape, std::vector<double> values, double pixel_pitch)
    : shape_(shape), values_(std::move(values)), pitch_(pixel_pitch) {
  if (values_.size() != shape_.size()) {
    throw ShapeError("image payload has " + std::to_string(values_.size()) +
                     " values, shape " + shape_.to_string() + " needs " +
                     std::to_string(shape_.size()));
  }
}

bool Image::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

double Image::min() const {
  return values_.empty() ? 0.0 : *std::min_element(values_.begin(), values_.end());
}

double Image::max() const {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

Image& Image::operator+=(const Image& other) {
  require_same_shape(shape_, other.shape_, "image addition");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Image& Image::operator-=(const Image& other) {
  require_same_shape(shape_, other.shape_, "image subtraction");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (!(a == b)) {
    throw ShapeError(what + ": shape " + a.to_string() + " does not match " +
                     b.to_string());
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double distance(const Image& a, const Image& b) {
  require_same_shape(a.shape(), b.shape(), "distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Image clip_nonnegative(Image x) {
  for (double& v : x.values()) v = std::max(v, 0.0);
  return x;
}

double mean(const Image& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x.values()) s += v;
  return s / static_cast<double>(x.size());
}

double variance(const Image& x) {
  if (x.empty()) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x.values()) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

}  // namespace pnp
