#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pnp/admm.hpp"
#include "pnp/image.hpp"
#include "pnp/projector.hpp"

namespace pnp {

/// Log-attenuation tilt series, tilt-major: entry k*bins + i is ray i of tilt k.
struct TiltSeries {
  std::vector<double> angles_deg;
  std::size_t bins = 0;
  double bin_spacing = 1.0;
  std::vector<double> y;
  std::vector<double> weights;        ///< Lambda diagonal
  std::vector<double> counts;         ///< raw counts when simulated
  std::vector<double> blank_offsets;  ///< nominal d_k when known
  std::vector<std::size_t> outliers;  ///< measurement indices corrupted on purpose

  std::size_t tilts() const { return angles_deg.size(); }
  std::size_t measurements() const { return angles_deg.size() * bins; }
  std::span<const double> tilt(std::size_t k) const { return {y.data() + k * bins, bins}; }

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

/// Sinogram text file: `tilts K M`, then `angle y_1 ... y_M` per tilt. The Lambda
/// companion has the same layout.
void write_sinogram(const std::filesystem::path& path, const TiltSeries& ts);
void write_sinogram_weights(const std::filesystem::path& path, const TiltSeries& ts);
/// Missing weights file means unit weights.
TiltSeries read_sinogram(const std::filesystem::path& path,
                         const std::optional<std::filesystem::path>& weights_path = std::nullopt,
                         double bin_spacing = 1.0);

struct HuberParams {
  double threshold = 3.0;  ///< T
  double delta = 0.5;

  void validate() const;
};

/// beta(e) = e^2 for |e| < T, 2 delta T |e| + T^2 (1 - 2 delta) otherwise.
double generalized_huber(double e, const HuberParams& hp);
/// Curvature of the quadratic majorizer touching beta at e.
double huber_surrogate_weight(double e, const HuberParams& hp);

struct NuisanceParams {
  std::vector<double> offsets;  ///< d_k
  double sigma = 1.0;

  void validate(std::size_t tilts) const;
};

/// e = y - A x - d.
std::vector<double> data_residual(const Image& x, const NuisanceParams& nuisance,
                                  const TiltSeries& ts, const SystemMatrix& a);

/// l(x, d, sigma) = 1/2 sum beta(e sqrt(Lambda) / sigma) + MK log sigma.
double tomo_likelihood(const Image& x, const NuisanceParams& nuisance, const TiltSeries& ts,
                       const SystemMatrix& a, const HuberParams& hp);
double likelihood_from_residual(std::span<const double> residual, std::span<const double> weights,
                                double sigma, const HuberParams& hp);

/// Likelihood plus ||x - x~||^2 / (2 sigma_lambda^2).
double tomo_cost(const Image& x, const NuisanceParams& nuisance, const Image& x_tilde,
                 double sigma_lambda, const TiltSeries& ts, const SystemMatrix& a,
                 const HuberParams& hp);

/// Surrogate curvatures q(z) Lambda / sigma^2 for the current residual.
std::vector<double> surrogate_coefficients(std::span<const double> residual,
                                           std::span<const double> weights, double sigma,
                                           const HuberParams& hp);

/// Coordinate-descent sweeps on 1/2 sum c (y - A x - d)^2 + ||x - x~||^2/(2 sigma_lambda^2)
/// over x >= 0, keeping `residual` equal to y - A x - d.
void icd_sweeps(Image& x, std::vector<double>& residual, std::span<const double> coeff,
                const SystemMatrix& a, const Image& x_tilde, double sigma_lambda,
                std::size_t sweeps);

/// Per-tilt weighted-mean offset shift; updates `offsets` and `residual`.
void update_offsets(std::vector<double>& offsets, std::vector<double>& residual,
                    std::span<const double> coeff, std::size_t bins);

/// Exact likelihood minimized over log sigma in [1e-6, 1e3] x sigma.
double update_sigma(std::span<const double> residual, std::span<const double> weights,
                    double sigma, const HuberParams& hp);

/// d_k = median(y_k - A_k x); sigma from the median absolute scaled residual.
NuisanceParams initial_nuisance(const Image& x, const TiltSeries& ts, const SystemMatrix& a);

enum class ProxStep { start, x_update, offset_update, sigma_update };
std::string to_string(ProxStep s);

struct CostTrace {
  std::vector<ProxStep> steps;
  std::vector<double> costs;

  void record(ProxStep s, double c) {
    steps.push_back(s);
    costs.push_back(c);
  }
  /// Sub-steps whose cost rose by more than rel_tol relative.
  std::size_t violations(double rel_tol = 1e-9) const;
};

struct TomoProxOptions {
  std::size_t passes = 3;
  std::size_t icd_sweeps = 5;
};

struct TomoProxResult {
  Image x;
  NuisanceParams nuisance;
  CostTrace trace;
};

/// Alternating (x, d, sigma) minimization of the tomography cost. Starts from
/// `x_start` when given, otherwise [x~]_+.
TomoProxResult tomo_prox(const Image& x_tilde, const TiltSeries& ts, const SystemMatrix& a,
                         const HuberParams& hp, double sigma_lambda,
                         const NuisanceParams& nuisance, const Image* x_start = nullptr,
                         const TomoProxOptions& opts = {});

/// Tomography inversion operator. Carries (x, d, sigma) across calls.
class TomoInversion final : public InversionOperator {
 public:
  TomoInversion(std::shared_ptr<const TiltSeries> ts, std::shared_ptr<const SystemMatrix> a,
                HuberParams hp, NuisanceParams start, TomoProxOptions opts = {});

  std::string name() const override { return "tomo"; }
  Image invert(const Image& x_tilde, double sigma_lambda) override;

  const NuisanceParams& nuisance() const { return nuisance_; }
  std::size_t calls() const { return calls_; }
  std::size_t descent_violations() const { return violations_; }
  double worst_relative_increase() const { return worst_increase_; }
  const CostTrace& last_trace() const { return last_trace_; }

 private:
  std::shared_ptr<const TiltSeries> ts_;
  std::shared_ptr<const SystemMatrix> a_;
  HuberParams hp_;
  NuisanceParams nuisance_;
  TomoProxOptions opts_;
  std::optional<Image> previous_;
  std::size_t calls_ = 0;
  std::size_t violations_ = 0;
  double worst_increase_ = 0.0;
  CostTrace last_trace_;
};

/// Ramp-filtered backprojection, clipped to >= 0. Offsets default to the
/// series' blank offsets, else a per-tilt estimate from the lowest readings.
Image fbp_reconstruct(const TiltSeries& ts, const ProjectionGeometry& geom,
                      const std::string& filter = "ram-lak",
                      std::span<const double> offsets = {});

/// Per-tilt offset guess for data with no blank scan: mean of the lowest tenth.
std::vector<double> background_offsets(const TiltSeries& ts);

}  // namespace pnp
