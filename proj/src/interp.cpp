#include "pnp/interp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pnp/raster_io.hpp"

namespace pnp {

SamplingMask::SamplingMask(Shape shape, std::vector<std::size_t> indices,
                           std::vector<double> values, double sigma_w)
    : shape_(shape), indices_(std::move(indices)), slot_(shape.size(), -1) {
  if (values.empty()) values.assign(indices_.size(), 0.0);
  if (values.size() != indices_.size()) {
    throw ShapeError("sampling mask has " + std::to_string(indices_.size()) + " indices but " +
                     std::to_string(values.size()) + " values");
  }
  std::vector<std::size_t> order(indices_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return indices_[a] < indices_[b]; });
  std::vector<std::size_t> sorted(indices_.size());
  values_.resize(indices_.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    sorted[i] = indices_[order[i]];
    values_[i] = values[order[i]];
  }
  indices_ = std::move(sorted);
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] >= shape.size()) throw std::out_of_range("sample index outside the image");
    if (slot_[indices_[i]] >= 0) throw std::invalid_argument("duplicate sample index");
    slot_[indices_[i]] = static_cast<std::int64_t>(i);
  }
  if (sigma_w < 0.0) throw std::invalid_argument("sigma_w must be nonnegative");
  sigma_w_ = sigma_w;
}

double SamplingMask::value_at(std::size_t pixel) const {
  const auto slot = slot_[pixel];
  if (slot < 0) throw std::out_of_range("pixel is not sampled");
  return values_[static_cast<std::size_t>(slot)];
}

void SamplingMask::set_values(std::vector<double> values, double sigma_w) {
  if (values.size() != indices_.size()) throw ShapeError("sample value count mismatch");
  if (sigma_w < 0.0) throw std::invalid_argument("sigma_w must be nonnegative");
  values_ = std::move(values);
  sigma_w_ = sigma_w;
}

Image interp_prox(const Image& x_tilde, const SamplingMask& mask, double sigma_lambda) {
  require_same_shape(x_tilde.shape(), mask.shape(), "interp_prox");
  if (!(sigma_lambda > 0.0)) throw std::invalid_argument("sigma_lambda must be positive");
  Image out = clip_nonnegative(x_tilde);
  const double sw = mask.sigma_w();
  const auto& idx = mask.indices();
  const auto& y = mask.values();
  if (sw == 0.0) {
    for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = std::max(y[i], 0.0);
    return out;
  }
  const double a = 1.0 / (sw * sw);
  const double b = 1.0 / (sigma_lambda * sigma_lambda);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double v = (a * y[i] + b * x_tilde[idx[i]]) / (a + b);
    out[idx[i]] = std::max(v, 0.0);
  }
  return out;
}

Image InterpInversion::invert(const Image& x_tilde, double sigma_lambda) {
  return interp_prox(x_tilde, mask_, sigma_lambda);
}

SamplingMask random_mask(Shape shape, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("sampling fraction must lie in (0, 1]");
  }
  const std::size_t n = shape.size();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (count == 0) throw std::invalid_argument("sampling fraction selects no pixels");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(count);
  return SamplingMask(shape, std::move(all));
}

SamplingMask sample_image(const Image& truth, SamplingMask mask, double sigma_w,
                          std::uint64_t seed) {
  require_same_shape(truth.shape(), mask.shape(), "sample_image");
  std::vector<double> y(mask.count());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma_w > 0.0 ? sigma_w : 1.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = truth[mask.indices()[i]];
    if (sigma_w > 0.0) y[i] += noise(rng);
  }
  mask.set_values(std::move(y), sigma_w);
  return mask;
}

Image shepard_interpolate(const SamplingMask& mask, Shape shape, const ShepardParams& params) {
  require_same_shape(shape, mask.shape(), "shepard_interpolate");
  if (mask.count() == 0) throw std::invalid_argument("Shepard interpolation needs at least one sample");
  if (params.max_neighbors == 0) throw std::invalid_argument("max_neighbors must be positive");
  if (shape.nz > 1) throw std::invalid_argument("Shepard interpolation is 2D only");

  const auto nx = static_cast<long>(shape.nx);
  const auto ny = static_cast<long>(shape.ny);
  const long max_ring = std::max(nx, ny);
  Image out(shape);

#pragma omp parallel
  {
    std::vector<std::pair<double, std::size_t>> found;  // (squared distance, sample pixel)
#pragma omp for schedule(static)
    for (long py = 0; py < ny; ++py) {
      for (long px = 0; px < nx; ++px) {
        const auto pixel = static_cast<std::size_t>(py * nx + px);
        if (mask.sampled(pixel)) {
          out[pixel] = mask.value_at(pixel);
          continue;
        }
        // Grow Chebyshev rings until the k nearest samples are certain: after
        // ring r every unseen sample is at least r + 1 away.
        found.clear();
        for (long r = 1; r <= max_ring; ++r) {
          for (long dy = -r; dy <= r; ++dy) {
            const long y = py + dy;
            if (y < 0 || y >= ny) continue;
            const bool edge_row = (dy == -r || dy == r);
            const long step = edge_row ? 1 : 2 * r;
            for (long dx = -r; dx <= r; dx += step) {
              const long x = px + dx;
              if (x < 0 || x >= nx) continue;
              const auto q = static_cast<std::size_t>(y * nx + x);
              if (mask.sampled(q)) found.emplace_back(static_cast<double>(dx * dx + dy * dy), q);
            }
          }
          if (found.size() == mask.count()) break;
          if (!found.empty() && static_cast<double>(r) > params.radius) break;
          if (found.size() >= params.max_neighbors) {
            std::nth_element(found.begin(),
                             found.begin() + static_cast<long>(params.max_neighbors - 1),
                             found.end());
            if (found[params.max_neighbors - 1].first <= static_cast<double>((r + 1) * (r + 1))) {
              break;
            }
          }
        }
        std::sort(found.begin(), found.end());
        if (found.size() > params.max_neighbors) found.resize(params.max_neighbors);
        const double r2 = params.radius * params.radius;
        double wsum = 0.0, vsum = 0.0;
        for (const auto& [d2, q] : found) {
          if (d2 > r2) break;
          const double w = 1.0 / std::pow(std::sqrt(d2), params.power);
          wsum += w;
          vsum += w * mask.value_at(q);
        }
        out[pixel] = wsum > 0.0 ? vsum / wsum : mask.value_at(found.front().second);
      }
    }
  }
  return out;
}

double normalized_rmse(const Image& x_hat, const Image& truth) {
  const double n = norm2(truth);
  if (n == 0.0) throw std::domain_error("normalized RMSE against a zero-norm truth");
  return distance(truth, x_hat) / n;
}

double rmse(const Image& x_hat, const Image& truth) {
  if (truth.empty()) return 0.0;
  return distance(truth, x_hat) / std::sqrt(static_cast<double>(truth.size()));
}

void write_mask(const std::filesystem::path& path, const SamplingMask& mask) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string());
  os << "mask " << mask.shape().nx << " " << mask.shape().ny << " " << mask.count() << "\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < mask.count(); ++i) {
    os << mask.indices()[i] << " " << mask.values()[i] << "\n";
  }
}

SamplingMask read_mask(const std::filesystem::path& path, double sigma_w) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::string tag;
  Shape shape;
  std::size_t count = 0;
  is >> tag >> shape.nx >> shape.ny >> count;
  if (!is || tag != "mask") throw FormatError("malformed mask header in " + path.string());
  std::vector<std::size_t> idx(count);
  std::vector<double> val(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!(is >> idx[i] >> val[i])) {
      throw FormatError("mask file " + path.string() + " ends after " + std::to_string(i) +
                        " of " + std::to_string(count) + " samples");
    }
  }
  return SamplingMask(shape, std::move(idx), std::move(val), sigma_w);
}

IntensityScaling IntensityScaling::to_byte_range(const Image& img) {
  const double lo = img.min(), hi = img.max();
  IntensityScaling s;
  s.offset = lo;
  s.scale = hi > lo ? 255.0 / (hi - lo) : 1.0;
  return s;
}

Image IntensityScaling::apply(Image img) const {
  for (double& v : img.values()) v = (v - offset) * scale;
  return img;
}

Image IntensityScaling::invert(Image img) const {
  for (double& v : img.values()) v = v / scale + offset;
  return img;
}

}  // namespace pnp
