#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pnp/image.hpp"
#include "pnp/weight_matrix.hpp"

namespace pnp {

/// A non-finite value showed up in an iterate; carries the iteration index.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Plug-and-play parameters. The denoiser noise level is always derived as
/// sigma_n = sqrt(beta) * sigma_lambda.
struct PnPConfig {
  double beta = 1.0;
  double sigma_lambda = 1.0;
  std::size_t max_iterations = 150;
  double primal_tolerance = 0.0;
  double dual_tolerance = 0.0;
  /// Fixed iteration count unless this is set.
  bool early_stop = false;
  /// Iteration at which weight-adaptive denoisers stop adapting.
  std::optional<std::size_t> weight_freeze_iteration;

  double sigma_n() const;
  /// Throws std::invalid_argument on a non-positive scale or negative tolerance.
  void validate() const;
};

/// Inversion operator F(x~; sigma_lambda) = argmin_x l(x) + ||x - x~||^2 / (2 sigma_lambda^2).
class InversionOperator {
 public:
  virtual ~InversionOperator() = default;
  virtual std::string name() const = 0;
  virtual Image invert(const Image& x_tilde, double sigma_lambda) = 0;
};

/// Denoising operator H(v~; sigma_n). `iteration` is the zero-based P&P
/// iteration the call belongs to, which lets adaptive denoisers freeze.
class DenoisingOperator {
 public:
  virtual ~DenoisingOperator() = default;
  virtual std::string name() const = 0;
  virtual Image denoise(const Image& v_tilde, double sigma_n, std::size_t iteration) = 0;

  /// True when the Jacobian of the operator is an explicit WeightMatrix.
  virtual bool exposes_weight_matrix() const { return false; }
  /// Matrix used by the most recent denoise() call, or nullptr.
  virtual const WeightMatrix* weight_matrix() const { return nullptr; }
  /// Freeze the weights from this iteration on (nullopt: keep adapting).
  virtual void set_freeze_iteration(std::optional<std::size_t> /*iteration*/) {}
};

/// H(v) = v, with an explicit identity Jacobian.
class IdentityDenoiser final : public DenoisingOperator {
 public:
  std::string name() const override { return "identity"; }
  Image denoise(const Image& v_tilde, double sigma_n, std::size_t iteration) override;
  bool exposes_weight_matrix() const override { return true; }
  const WeightMatrix* weight_matrix() const override;

 private:
  std::optional<WeightMatrix> identity_;
};

struct ResidualRecord {
  std::size_t iteration = 0;
  double primal = 0.0;
  double dual = 0.0;
};

/// Unnormalized norms captured at the end of one iteration.
struct RawResidual {
  double primal_norm = 0.0;  ///< ||x^(k) - v^(k)||
  double dual_norm = 0.0;    ///< ||v^(k) - v^(k-1)||
  double u_norm = 0.0;       ///< ||u^(k)||
  double x_norm = 0.0;       ///< ||x^(k)||
};

/// Per-iteration primal/dual residual history. While a run is live the primal
/// residual is normalized by the current ||x^(k)||; renormalize() rewrites it
/// against the final reconstruction once that is known.
class ResidualLog {
 public:
  void append(std::size_t iteration, const RawResidual& raw);
  void renormalize(double final_x_norm);

  const std::vector<ResidualRecord>& records() const { return records_; }
  const std::vector<RawResidual>& raw() const { return raw_; }
  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }
  const ResidualRecord& back() const { return records_.back(); }

  /// `iteration,primal_residual,dual_residual`, 12-digit scientific notation.
  void write_csv(std::ostream& os) const;

 private:
  std::vector<ResidualRecord> records_;
  std::vector<RawResidual> raw_;
};

/// Complete ADMM iterate.
struct PnPState {
  Image x_hat;
  Image v_hat;
  Image u;
  std::size_t k = 0;
  ResidualLog residual_log;

  static PnPState initial(const Image& x_init);
};

struct PnPRun {
  PnPState state;
  ResidualLog residuals;  ///< renormalized against the final x_hat
};

/// One iteration:
///   x~ = v - u;  x = F(x~; sigma_lambda);  v~ = x + u;  v = H(v~; sigma_n);  u += x - v.
PnPState pnp_iterate(PnPState state, InversionOperator& inversion, DenoisingOperator& denoiser,
                     const PnPConfig& cfg);

/// Runs pnp_iterate from v = x_init, u = 0 for cfg.max_iterations iterations
/// (or until both tolerances hold, with cfg.early_stop).
PnPRun run_pnp(const Image& x_init, InversionOperator& inversion, DenoisingOperator& denoiser,
               const PnPConfig& cfg);

/// ||x_hat - v_hat|| / ||x_ref||. Throws std::domain_error("degenerate reference")
/// for a zero reference.
double primal_residual(const PnPState& state, const Image& x_ref);

/// ||v_k - v_km1|| / ||u_k||; 0 for 0/0 and +inf for a nonzero numerator over 0.
double dual_residual(const Image& v_k, const Image& v_km1, const Image& u_k);

struct SigmaEstimate {
  double value = 0.0;
  bool floored = false;
};

/// sigma_lambda from the pixel variance of a baseline reconstruction. The
/// result is floored at floor_fraction * data_range; without an explicit range
/// the baseline's own max - min (or 1 when that is 0) is used.
SigmaEstimate estimate_sigma_lambda(const Image& baseline_recon,
                                    std::optional<double> data_range = std::nullopt,
                                    double floor_fraction = 1e-6);

}  // namespace pnp
