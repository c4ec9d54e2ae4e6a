#include "pnp/nlm.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace pnp {

namespace {

// Reflect-101 index on [0, n): -1 -> 1, n -> n - 2.
std::size_t mirror(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<long>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

struct PaddedImage {
  std::size_t px, py, pz;  // padding per axis
  std::size_t sx, sy, sz;  // padded extents
  std::vector<double> values;

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (z * sy + y) * sx + x;
  }
};

PaddedImage pad_mirror(const Image& img, int radius) {
  const Shape& s = img.shape();
  PaddedImage p;
  p.px = s.nx > 1 ? static_cast<std::size_t>(radius) : 0;
  p.py = s.ny > 1 ? static_cast<std::size_t>(radius) : 0;
  p.pz = s.nz > 1 ? static_cast<std::size_t>(radius) : 0;
  p.sx = s.nx + 2 * p.px;
  p.sy = s.ny + 2 * p.py;
  p.sz = s.nz + 2 * p.pz;
  p.values.resize(p.sx * p.sy * p.sz);
  for (std::size_t z = 0; z < p.sz; ++z) {
    const std::size_t iz = mirror(static_cast<long>(z) - static_cast<long>(p.pz), s.nz);
    for (std::size_t y = 0; y < p.sy; ++y) {
      const std::size_t iy = mirror(static_cast<long>(y) - static_cast<long>(p.py), s.ny);
      for (std::size_t x = 0; x < p.sx; ++x) {
        const std::size_t ix = mirror(static_cast<long>(x) - static_cast<long>(p.px), s.nx);
        p.values[p.index(x, y, z)] = img.at(ix, iy, iz);
      }
    }
  }
  return p;
}

// Patch distances ||P_s - P_{s+o}||^2 for one window offset, written into
// `dist` (indexed by lattice position s, valid pairs only). Separable box sums
// over the squared difference image of the padded raster.
void patch_distances(const PaddedImage& p, const Shape& shape, const LatticeOffset& off,
                     std::vector<double>& diff, std::vector<double>& tmp_x,
                     std::vector<double>& tmp_y, std::vector<double>& dist) {
  const long ox = off.dx, oy = off.dy, oz = off.dz;
  // Squared differences on the padded grid wherever the partner is inside it.
  for (std::size_t z = 0; z < p.sz; ++z) {
    const long zz = static_cast<long>(z) + oz;
    for (std::size_t y = 0; y < p.sy; ++y) {
      const long yy = static_cast<long>(y) + oy;
      double* d = diff.data() + p.index(0, y, z);
      if (zz < 0 || zz >= static_cast<long>(p.sz) || yy < 0 || yy >= static_cast<long>(p.sy)) {
        std::fill(d, d + p.sx, 0.0);
        continue;
      }
      const double* a = p.values.data() + p.index(0, y, z);
      const double* b = p.values.data() + p.index(0, static_cast<std::size_t>(yy),
                                                  static_cast<std::size_t>(zz));
      for (std::size_t x = 0; x < p.sx; ++x) {
        const long xx = static_cast<long>(x) + ox;
        if (xx < 0 || xx >= static_cast<long>(p.sx)) {
          d[x] = 0.0;
        } else {
          const double e = a[x] - b[xx];
          d[x] = e * e;
        }
      }
    }
  }
  // Box sum along x: tmp_x is nx * sy * sz.
  const std::size_t nx = shape.nx, ny = shape.ny, nz = shape.nz;
  for (std::size_t z = 0; z < p.sz; ++z) {
    for (std::size_t y = 0; y < p.sy; ++y) {
      const double* d = diff.data() + p.index(0, y, z);
      double* out = tmp_x.data() + (z * p.sy + y) * nx;
      for (std::size_t x = 0; x < nx; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k <= 2 * p.px; ++k) acc += d[x + k];
        out[x] = acc;
      }
    }
  }
  // Along y: tmp_y is nx * ny * sz.
  for (std::size_t z = 0; z < p.sz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) {
      double* out = tmp_y.data() + (z * ny + y) * nx;
      for (std::size_t x = 0; x < nx; ++x) out[x] = 0.0;
      for (std::size_t k = 0; k <= 2 * p.py; ++k) {
        const double* in = tmp_x.data() + (z * p.sy + y + k) * nx;
        for (std::size_t x = 0; x < nx; ++x) out[x] += in[x];
      }
    }
  }
  // Along z: dist is nx * ny * nz.
  for (std::size_t z = 0; z < nz; ++z) {
    double* out = dist.data() + z * ny * nx;
    for (std::size_t i = 0; i < nx * ny; ++i) out[i] = 0.0;
    for (std::size_t k = 0; k <= 2 * p.pz; ++k) {
      const double* in = tmp_y.data() + (z + k) * ny * nx;
      for (std::size_t i = 0; i < nx * ny; ++i) out[i] += in[i];
    }
  }
}

std::vector<double> kernel_row_sums(const WeightMatrix& w) {
  std::vector<double> sums(w.diagonal().begin(), w.diagonal().end());
  for (std::size_t o = 0; o < w.offsets().size(); ++o) {
    const auto band = w.band(o);
    const std::ptrdiff_t delta = w.offsets()[o].linear;
    w.for_each_valid(o, [&](std::size_t s) {
      sums[s] += band[s];
      sums[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s) + delta)] += band[s];
    });
  }
  return sums;
}

std::vector<double> off_diagonal_sums(const WeightMatrix& w) {
  std::vector<double> sums(w.size(), 0.0);
  for (std::size_t o = 0; o < w.offsets().size(); ++o) {
    const auto band = w.band(o);
    const std::ptrdiff_t delta = w.offsets()[o].linear;
    w.for_each_valid(o, [&](std::size_t s) {
      sums[s] += band[s];
      sums[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s) + delta)] += band[s];
    });
  }
  return sums;
}

}  // namespace

void NlmParams::validate() const {
  if (patch_radius < 0) throw std::invalid_argument("patch radius must be nonnegative");
  if (search_radius < 1) throw std::invalid_argument("search radius must be positive");
  if (!(sigma_n > 0.0) || !std::isfinite(sigma_n)) {
    throw std::invalid_argument("NLM sigma_n must be positive");
  }
}

WeightMatrix nlm_raw_weights(const Image& image, const NlmParams& params) {
  params.validate();
  if (!image.all_finite()) throw std::invalid_argument("NLM input image has non-finite values");
  const Shape& shape = image.shape();
  WeightMatrix w(shape, params.search_radius);
  std::fill(w.diagonal().begin(), w.diagonal().end(), 1.0);

  const PaddedImage padded = pad_mirror(image, params.patch_radius);
  const double patch_pixels =
      static_cast<double>((2 * padded.px + 1) * (2 * padded.py + 1) * (2 * padded.pz + 1));
  const double inv_denom = 1.0 / (2.0 * patch_pixels * params.sigma_n * params.sigma_n);

  const auto offsets = static_cast<long>(w.offsets().size());
#pragma omp parallel
  {
    std::vector<double> diff(padded.values.size());
    std::vector<double> tmp_x(shape.nx * padded.sy * padded.sz);
    std::vector<double> tmp_y(shape.nx * shape.ny * padded.sz);
    std::vector<double> dist(shape.size());
#pragma omp for schedule(dynamic)
    for (long o = 0; o < offsets; ++o) {
      const auto oi = static_cast<std::size_t>(o);
      patch_distances(padded, shape, w.offsets()[oi], diff, tmp_x, tmp_y, dist);
      auto band = w.band(oi);
      w.for_each_valid(oi, [&](std::size_t s) { band[s] = std::exp(-dist[s] * inv_denom); });
    }
  }
  return w;
}

WeightMatrix nlm_weights(const Image& image, const NlmParams& params) {
  WeightMatrix w = nlm_raw_weights(image, params);
  std::vector<double> scale = kernel_row_sums(w);
  for (double& v : scale) v = 1.0 / v;
  w.set_row_scale(std::move(scale));
  return w;
}

WeightMatrix dsg_normalize(WeightMatrix w, DsgStats* stats) {
  if (!w.symmetric()) throw std::invalid_argument("dsg_normalize needs symmetric raw weights");
  const std::vector<double> rows = kernel_row_sums(w);
  for (double r : rows) {
    if (!(r > 0.0)) throw std::domain_error("raw weight matrix has a row with zero sum");
  }

  for (std::size_t o = 0; o < w.offsets().size(); ++o) {
    auto band = w.band(o);
    const std::ptrdiff_t delta = w.offsets()[o].linear;
    w.for_each_valid(o, [&](std::size_t s) {
      const auto r = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s) + delta);
      band[s] /= std::sqrt(rows[s] * rows[r]);
    });
  }

  std::vector<double> off = off_diagonal_sums(w);
  std::size_t clamped = 0;
  for (double v : off) clamped += v > 1.0;
  if (clamped > 0) {
    for (std::size_t o = 0; o < w.offsets().size(); ++o) {
      auto band = w.band(o);
      const std::ptrdiff_t delta = w.offsets()[o].linear;
      w.for_each_valid(o, [&](std::size_t s) {
        const auto r = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s) + delta);
        const double f = std::min({1.0, 1.0 / off[s], 1.0 / off[r]});
        band[s] *= f;
      });
    }
    off = off_diagonal_sums(w);
  }
  auto diag = w.diagonal();
  for (std::size_t s = 0; s < w.size(); ++s) diag[s] = std::max(0.0, 1.0 - off[s]);
  if (stats != nullptr) stats->clamped_diagonals += clamped;
  return w;
}

WeightMatrix dsg_nlm_weights(const Image& image, const NlmParams& params, DsgStats* stats) {
  return dsg_normalize(nlm_raw_weights(image, params), stats);
}

Image apply_weights(const WeightMatrix& w, const Image& image) { return w.apply(image); }

std::string to_string(NlmVariant v) {
  return v == NlmVariant::plain ? "nlm" : "dsg-nlm";
}

NlmDenoiser::NlmDenoiser(NlmVariant variant, NlmParams params, FreezePolicy policy)
    : variant_(variant), params_(params), policy_(std::move(policy)) {
  params_.validate();
}

std::string NlmDenoiser::name() const { return to_string(variant_); }

WeightMatrix NlmDenoiser::compute(const Image& image) {
  ++computations_;
  if (variant_ == NlmVariant::plain) return nlm_weights(image, params_);
  DsgStats stats;
  WeightMatrix w = dsg_nlm_weights(image, params_, &stats);
  clamped_ += stats.clamped_diagonals;
  return w;
}

Image NlmDenoiser::denoise(const Image& v_tilde, double sigma_n, std::size_t iteration) {
  params_.sigma_n = sigma_n;
  return denoise(v_tilde, iteration);
}

Image NlmDenoiser::denoise(const Image& image, std::size_t iteration_index) {
  if (policy_.freeze_at && iteration_index >= *policy_.freeze_at) {
    if (!policy_.frozen) {
      policy_.cached = compute(image);
      policy_.frozen = true;
      last_.reset();
    }
    if (!policy_.cached) throw std::logic_error("frozen NLM weights missing from cache");
    return apply_weights(*policy_.cached, image);
  }
  last_ = compute(image);
  return apply_weights(*last_, image);
}

const WeightMatrix* NlmDenoiser::weight_matrix() const {
  if (policy_.frozen && policy_.cached) return &*policy_.cached;
  return last_ ? &*last_ : nullptr;
}

void NlmDenoiser::set_freeze_iteration(std::optional<std::size_t> iteration) {
  if (policy_.freeze_at != iteration) {
    policy_.freeze_at = iteration;
    policy_.frozen = false;
    policy_.cached.reset();
  }
}

}  // namespace pnp
