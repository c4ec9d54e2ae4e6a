#include "pnp/tomo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "pnp/raster_io.hpp"

namespace pnp {

void TiltSeries::validate() const {
  const std::size_t n = measurements();
  if (y.size() != n) {
    throw std::invalid_argument("tilt series has " + std::to_string(y.size()) +
                                " measurements, expected " + std::to_string(n));
  }
  if (weights.size() != n) throw std::invalid_argument("tilt series weight count mismatch");
  if (!counts.empty() && counts.size() != n) {
    throw std::invalid_argument("tilt series count vector length mismatch");
  }
  if (!blank_offsets.empty() && blank_offsets.size() != tilts()) {
    throw std::invalid_argument("tilt series needs one blank offset per tilt");
  }
  for (double a : angles_deg) {
    if (!(a >= -90.0 && a < 90.0)) {
      throw std::invalid_argument("tilt angle " + std::to_string(a) + " outside [-90, 90)");
    }
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("tilt weights must be positive");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw std::invalid_argument("tilt series holds a non-finite measurement");
  }
}

namespace {

void write_rows(const std::filesystem::path& path, const TiltSeries& ts,
                const std::vector<double>& rows) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string());
  os << "tilts " << ts.tilts() << " " << ts.bins << "\n" << std::setprecision(17);
  for (std::size_t k = 0; k < ts.tilts(); ++k) {
    os << ts.angles_deg[k];
    for (std::size_t i = 0; i < ts.bins; ++i) os << " " << rows[k * ts.bins + i];
    os << "\n";
  }
}

void read_rows(const std::filesystem::path& path, std::vector<double>& angles,
               std::size_t& bins, std::vector<double>& rows) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::string tag;
  std::size_t k_count = 0;
  is >> tag >> k_count >> bins;
  if (!is || tag != "tilts") throw FormatError("malformed sinogram header in " + path.string());
  angles.resize(k_count);
  rows.resize(k_count * bins);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (!(is >> angles[k])) {
      throw FormatError(path.string() + ": missing tilt " + std::to_string(k));
    }
    for (std::size_t i = 0; i < bins; ++i) {
      if (!(is >> rows[k * bins + i])) {
        throw FormatError(path.string() + ": tilt " + std::to_string(k) + " has " +
                          std::to_string(i) + " of " + std::to_string(bins) + " values");
      }
    }
  }
}

}  // namespace

void write_sinogram(const std::filesystem::path& path, const TiltSeries& ts) {
  write_rows(path, ts, ts.y);
}

void write_sinogram_weights(const std::filesystem::path& path, const TiltSeries& ts) {
  write_rows(path, ts, ts.weights);
}

TiltSeries read_sinogram(const std::filesystem::path& path,
                         const std::optional<std::filesystem::path>& weights_path,
                         double bin_spacing) {
  TiltSeries ts;
  ts.bin_spacing = bin_spacing;
  read_rows(path, ts.angles_deg, ts.bins, ts.y);
  if (weights_path) {
    std::vector<double> angles;
    std::size_t bins = 0;
    read_rows(*weights_path, angles, bins, ts.weights);
    if (angles.size() != ts.tilts() || bins != ts.bins) {
      throw FormatError("weights file layout differs from the sinogram");
    }
  } else {
    ts.weights.assign(ts.measurements(), 1.0);
  }
  ts.validate();
  return ts;
}

void HuberParams::validate() const {
  if (!(threshold > 0.0)) throw std::invalid_argument("Huber threshold must be positive");
  if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("Huber delta must lie in [0, 1]");
}

double generalized_huber(double e, const HuberParams& hp) {
  const double a = std::abs(e);
  const double t = hp.threshold;
  if (a < t) return e * e;
  return 2.0 * hp.delta * t * a + t * t * (1.0 - 2.0 * hp.delta);
}

double huber_surrogate_weight(double e, const HuberParams& hp) {
  const double a = std::abs(e);
  if (a < hp.threshold) return 1.0;
  return hp.delta * hp.threshold / a;
}

void NuisanceParams::validate(std::size_t tilts) const {
  if (offsets.size() != tilts) {
    throw std::invalid_argument("nuisance has " + std::to_string(offsets.size()) +
                                " offsets for " + std::to_string(tilts) + " tilts");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be positive");
}

std::vector<double> data_residual(const Image& x, const NuisanceParams& nuisance,
                                  const TiltSeries& ts, const SystemMatrix& a) {
  nuisance.validate(ts.tilts());
  if (a.measurements() != ts.measurements()) {
    throw ShapeError("system matrix rows do not match the tilt series");
  }
  std::vector<double> e = a.project(x);
  for (std::size_t k = 0; k < ts.tilts(); ++k) {
    for (std::size_t i = 0; i < ts.bins; ++i) {
      const std::size_t m = k * ts.bins + i;
      e[m] = ts.y[m] - e[m] - nuisance.offsets[k];
    }
  }
  return e;
}

double likelihood_from_residual(std::span<const double> residual, std::span<const double> weights,
                                double sigma, const HuberParams& hp) {
  double acc = 0.0;
  for (std::size_t m = 0; m < residual.size(); ++m) {
    acc += generalized_huber(residual[m] * std::sqrt(weights[m]) / sigma, hp);
  }
  return 0.5 * acc + static_cast<double>(residual.size()) * std::log(sigma);
}

double tomo_likelihood(const Image& x, const NuisanceParams& nuisance, const TiltSeries& ts,
                       const SystemMatrix& a, const HuberParams& hp) {
  const auto e = data_residual(x, nuisance, ts, a);
  return likelihood_from_residual(e, ts.weights, nuisance.sigma, hp);
}

namespace {

double prior_term(const Image& x, const Image& x_tilde, double sigma_lambda) {
  const double d = distance(x, x_tilde);
  return d * d / (2.0 * sigma_lambda * sigma_lambda);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

}  // namespace

double tomo_cost(const Image& x, const NuisanceParams& nuisance, const Image& x_tilde,
                 double sigma_lambda, const TiltSeries& ts, const SystemMatrix& a,
                 const HuberParams& hp) {
  return tomo_likelihood(x, nuisance, ts, a, hp) + prior_term(x, x_tilde, sigma_lambda);
}

std::vector<double> surrogate_coefficients(std::span<const double> residual,
                                           std::span<const double> weights, double sigma,
                                           const HuberParams& hp) {
  std::vector<double> c(residual.size());
  const double inv_s2 = 1.0 / (sigma * sigma);
  for (std::size_t m = 0; m < residual.size(); ++m) {
    const double z = residual[m] * std::sqrt(weights[m]) / sigma;
    c[m] = huber_surrogate_weight(z, hp) * weights[m] * inv_s2;
  }
  return c;
}

void icd_sweeps(Image& x, std::vector<double>& residual, std::span<const double> coeff,
                const SystemMatrix& a, const Image& x_tilde, double sigma_lambda,
                std::size_t sweeps) {
  const auto& mat = a.matrix();
  using It = SystemMatrix::Sparse::InnerIterator;
  const double prior = 1.0 / (sigma_lambda * sigma_lambda);
  for (std::size_t s = 0; s < sweeps; ++s) {
    for (Eigen::Index j = 0; j < mat.outerSize(); ++j) {
      double theta1 = 0.0, theta2 = 0.0;
      for (It it(mat, j); it; ++it) {
        const auto m = static_cast<std::size_t>(it.row());
        const double cv = coeff[m] * it.value();
        theta1 -= cv * residual[m];
        theta2 += cv * it.value();
      }
      const auto jj = static_cast<std::size_t>(j);
      theta1 += (x[jj] - x_tilde[jj]) * prior;
      theta2 += prior;
      const double next = std::max(0.0, x[jj] - theta1 / theta2);
      const double step = next - x[jj];
      if (step == 0.0) continue;
      for (It it(mat, j); it; ++it) residual[static_cast<std::size_t>(it.row())] -= it.value() * step;
      x[jj] = next;
    }
  }
}

void update_offsets(std::vector<double>& offsets, std::vector<double>& residual,
                    std::span<const double> coeff, std::size_t bins) {
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < bins; ++i) {
      num += coeff[k * bins + i] * residual[k * bins + i];
      den += coeff[k * bins + i];
    }
    if (den <= 0.0) continue;
    const double shift = num / den;
    offsets[k] += shift;
    for (std::size_t i = 0; i < bins; ++i) residual[k * bins + i] -= shift;
  }
}

double update_sigma(std::span<const double> residual, std::span<const double> weights,
                    double sigma, const HuberParams& hp) {
  if (residual.empty()) return sigma;
  auto f = [&](double u) { return likelihood_from_residual(residual, weights, std::exp(u), hp); };
  // The likelihood is convex in log sigma, so golden-section search converges.
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = std::log(sigma) + std::log(1e-6);
  double hi = std::log(sigma) + std::log(1e3);
  double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
  double fc = f(c), fd = f(d);
  while (hi - lo > 1e-12) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + phi * (hi - lo);
      fd = f(d);
    }
  }
  const double u = 0.5 * (lo + hi);
  return f(u) <= f(std::log(sigma)) ? std::exp(u) : sigma;
}

NuisanceParams initial_nuisance(const Image& x, const TiltSeries& ts, const SystemMatrix& a) {
  NuisanceParams nu;
  nu.offsets.assign(ts.tilts(), 0.0);
  std::vector<double> e = data_residual(x, nu, ts, a);
  for (std::size_t k = 0; k < ts.tilts(); ++k) {
    std::vector<double> row(e.begin() + static_cast<long>(k * ts.bins),
                            e.begin() + static_cast<long>((k + 1) * ts.bins));
    nu.offsets[k] = median_of(std::move(row));
    for (std::size_t i = 0; i < ts.bins; ++i) e[k * ts.bins + i] -= nu.offsets[k];
  }
  std::vector<double> scaled(e.size());
  for (std::size_t m = 0; m < e.size(); ++m) scaled[m] = std::abs(e[m]) * std::sqrt(ts.weights[m]);
  const double s = 1.4826 * median_of(std::move(scaled));
  nu.sigma = s > 0.0 && std::isfinite(s) ? s : 1.0;
  return nu;
}

std::string to_string(ProxStep s) {
  switch (s) {
    case ProxStep::start: return "start";
    case ProxStep::x_update: return "x-update";
    case ProxStep::offset_update: return "d-update";
    case ProxStep::sigma_update: return "sigma-update";
  }
  return "unknown";
}

std::size_t CostTrace::violations(double rel_tol) const {
  std::size_t n = 0;
  for (std::size_t i = 1; i < costs.size(); ++i) {
    if (costs[i] > costs[i - 1] + rel_tol * std::abs(costs[i - 1])) ++n;
  }
  return n;
}

TomoProxResult tomo_prox(const Image& x_tilde, const TiltSeries& ts, const SystemMatrix& a,
                         const HuberParams& hp, double sigma_lambda,
                         const NuisanceParams& nuisance, const Image* x_start,
                         const TomoProxOptions& opts) {
  if (!(sigma_lambda > 0.0)) throw std::invalid_argument("sigma_lambda must be positive");
  if (!x_tilde.all_finite()) throw NonFiniteError("tomo_prox input is not finite", 0);
  if (ts.tilts() == 0) return {clip_nonnegative(x_tilde), nuisance, {}};
  hp.validate();
  if (a.pixels() != x_tilde.size()) throw ShapeError("system matrix columns do not match the image");

  TomoProxResult out{x_start ? *x_start : clip_nonnegative(x_tilde), nuisance, {}};
  if (x_start) require_same_shape(x_start->shape(), x_tilde.shape(), "tomo_prox warm start");
  Image& x = out.x;
  NuisanceParams& nu = out.nuisance;
  std::vector<double> e = data_residual(x, nu, ts, a);

  auto record = [&](ProxStep step) {
    const double c = likelihood_from_residual(e, ts.weights, nu.sigma, hp) +
                     prior_term(x, x_tilde, sigma_lambda);
    if (!std::isfinite(c)) throw NonFiniteError("tomo_prox cost is not finite after " + to_string(step), 0);
    out.trace.record(step, c);
  };

  record(ProxStep::start);
  for (std::size_t pass = 0; pass < opts.passes; ++pass) {
    // The majorizer is refreshed before every sub-step so each one descends
    // the exact cost.
    for (std::size_t s = 0; s < opts.icd_sweeps; ++s) {
      const auto coeff = surrogate_coefficients(e, ts.weights, nu.sigma, hp);
      icd_sweeps(x, e, coeff, a, x_tilde, sigma_lambda, 1);
    }
    record(ProxStep::x_update);

    const auto coeff = surrogate_coefficients(e, ts.weights, nu.sigma, hp);
    update_offsets(nu.offsets, e, coeff, ts.bins);
    record(ProxStep::offset_update);

    nu.sigma = update_sigma(e, ts.weights, nu.sigma, hp);
    record(ProxStep::sigma_update);
  }
  return out;
}

TomoInversion::TomoInversion(std::shared_ptr<const TiltSeries> ts,
                             std::shared_ptr<const SystemMatrix> a, HuberParams hp,
                             NuisanceParams start, TomoProxOptions opts)
    : ts_(std::move(ts)), a_(std::move(a)), hp_(hp), nuisance_(std::move(start)), opts_(opts) {
  if (!ts_ || !a_) throw std::invalid_argument("tomography operator needs data and a projector");
  ts_->validate();
  hp_.validate();
  nuisance_.validate(ts_->tilts());
}

Image TomoInversion::invert(const Image& x_tilde, double sigma_lambda) {
  auto res = tomo_prox(x_tilde, *ts_, *a_, hp_, sigma_lambda, nuisance_,
                       previous_ ? &*previous_ : nullptr, opts_);
  ++calls_;
  const auto& c = res.trace.costs;
  for (std::size_t i = 1; i < c.size(); ++i) {
    const double rise = (c[i] - c[i - 1]) / std::max(std::abs(c[i - 1]), 1e-300);
    worst_increase_ = std::max(worst_increase_, rise);
  }
  violations_ += res.trace.violations();
  last_trace_ = std::move(res.trace);
  nuisance_ = std::move(res.nuisance);
  previous_ = res.x;
  return std::move(res.x);
}

}  // namespace pnp
