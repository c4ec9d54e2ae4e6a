#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "pnp/admm.hpp"
#include "pnp/weight_matrix.hpp"

namespace pnp {

/// Measured deviations of a denoiser Jacobian from the doubly stochastic,
/// symmetric, non-expansive structure that guarantees P&P convergence.
struct ConditionReport {
  double tolerance = 0.0;
  bool explicit_matrix = true;  ///< false when the Jacobian came from finite differences
  std::size_t dimension = 0;
  double row_sum_deviation = 0.0;     ///< max_s |sum_r W(s,r) - 1|
  double column_sum_deviation = 0.0;  ///< max_r |sum_s W(s,r) - 1|
  double asymmetry = 0.0;             ///< max |W - W^T|
  std::size_t negative_entries = 0;   ///< entries below -tolerance
  double spectral_norm = 0.0;         ///< power-iteration estimate of ||W||_2
  /// Smallest eigenvalue of (W + W^T)/2, computed for small matrices only.
  /// Reported, not judged: a symmetric doubly stochastic matrix may have
  /// eigenvalues down to -1.
  std::optional<double> min_eigenvalue;

  bool rows_pass() const { return row_sum_deviation <= tolerance; }
  bool columns_pass() const { return column_sum_deviation <= tolerance; }
  bool symmetry_pass() const { return asymmetry <= tolerance; }
  bool nonnegative_pass() const { return negative_entries == 0; }
  bool nonexpansive_pass() const { return spectral_norm <= 1.0 + tolerance; }
  bool all_pass() const {
    return rows_pass() && columns_pass() && symmetry_pass() && nonnegative_pass() &&
           nonexpansive_pass();
  }

  std::string to_text() const;
};

/// Largest dimension for which dense eigenvalues / finite-difference Jacobians are formed.
inline constexpr std::size_t kDenseCheckLimit = 1024;

double spectral_norm_estimate(const WeightMatrix& w, std::size_t iterations = 200);

ConditionReport verify_weight_matrix(const WeightMatrix& w, double tol);
ConditionReport verify_dense_jacobian(const Eigen::MatrixXd& jacobian, double tol);

/// Central-difference Jacobian of H at `probe`, one column per pixel.
Eigen::MatrixXd finite_difference_jacobian(DenoisingOperator& denoiser, const Image& probe,
                                           double sigma_n, double step, std::size_t iteration);

/// Checks the denoiser at `probe`. Operators exposing a WeightMatrix are
/// checked on that matrix; others via a finite-difference Jacobian, which is
/// refused (std::length_error) above `max_fd_pixels` pixels.
ConditionReport verify_operator_conditions(DenoisingOperator& denoiser, const Image& probe,
                                           double sigma_n, double tol,
                                           std::size_t max_fd_pixels = kDenseCheckLimit);

}  // namespace pnp
