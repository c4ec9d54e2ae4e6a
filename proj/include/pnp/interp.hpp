#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "pnp/admm.hpp"
#include "pnp/image.hpp"

namespace pnp {

/// Sparse pixel sampling y = A x + e. A picks pixel indices()[i] as
/// measurement i, so each row of A has exactly one unit entry and each column
/// at most one. Indices are kept sorted and distinct.
class SamplingMask {
 public:
  SamplingMask() = default;
  /// Values default to 0 when omitted; otherwise one per index.
  SamplingMask(Shape shape, std::vector<std::size_t> indices, std::vector<double> values = {},
               double sigma_w = 0.0);

  const Shape& shape() const { return shape_; }
  const std::vector<std::size_t>& indices() const { return indices_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t count() const { return indices_.size(); }
  double sigma_w() const { return sigma_w_; }

  /// I(j): 1 when pixel j is measured.
  bool sampled(std::size_t pixel) const { return slot_[pixel] >= 0; }
  /// Measured value at a sampled pixel.
  double value_at(std::size_t pixel) const;

  void set_values(std::vector<double> values, double sigma_w);

 private:
  Shape shape_{};
  std::vector<std::size_t> indices_;
  std::vector<double> values_;
  std::vector<std::int64_t> slot_;
  double sigma_w_ = 0.0;
};

/// Closed-form minimizer of ||y - A x||^2 / (2 sigma_w^2) + ||x - x~||^2 / (2 sigma_lambda^2)
/// over x >= 0. With sigma_w = 0 sampled pixels are pinned to [y]_+.
Image interp_prox(const Image& x_tilde, const SamplingMask& mask, double sigma_lambda);

/// Exactly round(fraction * N) distinct pixels, uniform without replacement.
SamplingMask random_mask(Shape shape, double fraction, std::uint64_t seed);

/// Fills the mask with truth values plus N(0, sigma_w^2) noise.
SamplingMask sample_image(const Image& truth, SamplingMask mask, double sigma_w,
                          std::uint64_t seed);

struct ShepardParams {
  double power = 2.0;
  double radius = std::numeric_limits<double>::infinity();
  std::size_t max_neighbors = 64;
};

/// Inverse-distance-weighted interpolation from the nearest samples. Sampled
/// pixels keep their measured values; a pixel with no sample inside `radius`
/// takes the value of its nearest sample.
Image shepard_interpolate(const SamplingMask& mask, Shape shape, const ShepardParams& params = {});

/// ||truth - x_hat|| / ||truth||.
double normalized_rmse(const Image& x_hat, const Image& truth);
/// sqrt(mean((truth - x_hat)^2)), in image units.
double rmse(const Image& x_hat, const Image& truth);

/// Mask file: `mask <width> <height> <count>` then `index value` lines, row-major indices.
void write_mask(const std::filesystem::path& path, const SamplingMask& mask);
SamplingMask read_mask(const std::filesystem::path& path, double sigma_w = 0.0);

/// Sparse-interpolation inversion operator for the P&P loop.
class InterpInversion final : public InversionOperator {
 public:
  explicit InterpInversion(SamplingMask mask) : mask_(std::move(mask)) {}
  std::string name() const override { return "interp"; }
  Image invert(const Image& x_tilde, double sigma_lambda) override;
  const SamplingMask& mask() const { return mask_; }

 private:
  SamplingMask mask_;
};

/// Affine map taking an image's [min, max] to [0, 255]; inverse restores it.
struct IntensityScaling {
  double offset = 0.0;
  double scale = 1.0;

  static IntensityScaling to_byte_range(const Image& img);
  Image apply(Image img) const;
  Image invert(Image img) const;
};

}  // namespace pnp
