#include "pnp/admm.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace pnp {

namespace {

// 0/0 -> 0, x/0 -> +inf, so CSV logs never carry NaN.
double safe_ratio(double num, double den) {
  if (den > 0.0) return num / den;
  return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

void require_finite(const Image& img, const char* what, std::size_t iteration) {
  if (!img.all_finite()) {
    throw NonFiniteError(std::string("non-finite value in ") + what + " at iteration " +
                             std::to_string(iteration),
                         iteration);
  }
}

}  // namespace

double PnPConfig::sigma_n() const { return std::sqrt(beta) * sigma_lambda; }

void PnPConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be positive");
  if (!(sigma_lambda > 0.0) || !std::isfinite(sigma_lambda)) {
    throw std::invalid_argument("sigma_lambda must be positive");
  }
  if (primal_tolerance < 0.0 || dual_tolerance < 0.0) {
    throw std::invalid_argument("tolerances must be nonnegative");
  }
}

Image IdentityDenoiser::denoise(const Image& v_tilde, double, std::size_t) {
  if (!identity_ || !(identity_->shape() == v_tilde.shape())) {
    identity_ = WeightMatrix::identity(v_tilde.shape());
  }
  return v_tilde;
}

const WeightMatrix* IdentityDenoiser::weight_matrix() const {
  return identity_ ? &*identity_ : nullptr;
}

void ResidualLog::append(std::size_t iteration, const RawResidual& raw) {
  raw_.push_back(raw);
  records_.push_back({iteration, safe_ratio(raw.primal_norm, raw.x_norm),
                      safe_ratio(raw.dual_norm, raw.u_norm)});
}

void ResidualLog::renormalize(double final_x_norm) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    records_[i].primal = safe_ratio(raw_[i].primal_norm, final_x_norm);
  }
}

void ResidualLog::write_csv(std::ostream& os) const {
  os << "iteration,primal_residual,dual_residual\n";
  char line[96];
  for (const auto& r : records_) {
    std::snprintf(line, sizeof line, "%zu,%.12e,%.12e\n", r.iteration, r.primal, r.dual);
    os << line;
  }
}

PnPState PnPState::initial(const Image& x_init) {
  PnPState s;
  s.x_hat = x_init;
  s.v_hat = x_init;
  s.u = Image(x_init.shape(), 0.0, x_init.pixel_pitch());
  return s;
}

PnPState pnp_iterate(PnPState state, InversionOperator& inversion, DenoisingOperator& denoiser,
                     const PnPConfig& cfg) {
  require_same_shape(state.x_hat.shape(), state.v_hat.shape(), "P&P state (x_hat vs v_hat)");
  require_same_shape(state.u.shape(), state.v_hat.shape(), "P&P state (u vs v_hat)");

  const Image x_tilde = state.v_hat - state.u;
  Image x_hat = inversion.invert(x_tilde, cfg.sigma_lambda);
  require_same_shape(x_hat.shape(), x_tilde.shape(),
                     "inversion operator '" + inversion.name() + "' output");

  const Image v_tilde = x_hat + state.u;
  Image v_hat = denoiser.denoise(v_tilde, cfg.sigma_n(), state.k);
  require_same_shape(v_hat.shape(), v_tilde.shape(),
                     "denoising operator '" + denoiser.name() + "' output");

  state.u += x_hat;
  state.u -= v_hat;

  RawResidual raw;
  raw.primal_norm = distance(x_hat, v_hat);
  raw.dual_norm = distance(v_hat, state.v_hat);
  raw.u_norm = norm2(state.u);
  raw.x_norm = norm2(x_hat);

  state.x_hat = std::move(x_hat);
  state.v_hat = std::move(v_hat);
  ++state.k;
  state.residual_log.append(state.k, raw);
  return state;
}

PnPRun run_pnp(const Image& x_init, InversionOperator& inversion, DenoisingOperator& denoiser,
               const PnPConfig& cfg) {
  cfg.validate();
  require_finite(x_init, "initial image", 0);
  if (cfg.weight_freeze_iteration && denoiser.exposes_weight_matrix()) {
    denoiser.set_freeze_iteration(cfg.weight_freeze_iteration);
  }

  PnPState state = PnPState::initial(x_init);
  while (state.k < cfg.max_iterations) {
    state = pnp_iterate(std::move(state), inversion, denoiser, cfg);
    require_finite(state.x_hat, "x_hat", state.k);
    require_finite(state.v_hat, "v_hat", state.k);
    require_finite(state.u, "u", state.k);
    if (cfg.early_stop) {
      const auto& last = state.residual_log.back();
      if (last.primal <= cfg.primal_tolerance && last.dual <= cfg.dual_tolerance) break;
    }
  }
  state.residual_log.renormalize(norm2(state.x_hat));
  PnPRun run{std::move(state), {}};
  run.residuals = run.state.residual_log;
  return run;
}

double primal_residual(const PnPState& state, const Image& x_ref) {
  const double ref = norm2(x_ref);
  if (ref == 0.0) throw std::domain_error("degenerate reference");
  return distance(state.x_hat, state.v_hat) / ref;
}

double dual_residual(const Image& v_k, const Image& v_km1, const Image& u_k) {
  return safe_ratio(distance(v_k, v_km1), norm2(u_k));
}

SigmaEstimate estimate_sigma_lambda(const Image& baseline_recon, std::optional<double> data_range,
                                    double floor_fraction) {
  double range = data_range.value_or(baseline_recon.max() - baseline_recon.min());
  if (!(range > 0.0)) range = 1.0;
  const double floor = floor_fraction * range;
  const double sigma = std::sqrt(variance(baseline_recon));
  if (sigma < floor) return {floor, true};
  return {sigma, false};
}

}  // namespace pnp
