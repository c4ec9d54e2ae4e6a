#include "pnp/operator_check.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace pnp {

namespace {

double max_abs_deviation_from_one(const std::vector<double>& sums) {
  double dev = 0.0;
  for (double v : sums) dev = std::max(dev, std::abs(v - 1.0));
  return dev;
}

std::optional<double> min_symmetric_eigenvalue(const Eigen::MatrixXd& m) {
  if (static_cast<std::size_t>(m.rows()) > kDenseCheckLimit || m.rows() == 0) return std::nullopt;
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

}  // namespace

std::string ConditionReport::to_text() const {
  std::ostringstream os;
  os.precision(6);
  os << std::scientific;
  os << "jacobian_source " << (explicit_matrix ? "explicit" : "finite-difference") << "\n";
  os << "dimension " << dimension << "\n";
  os << "tolerance " << tolerance << "\n";
  os << "row_sums " << verdict(rows_pass()) << " max_deviation " << row_sum_deviation << "\n";
  os << "column_sums " << verdict(columns_pass()) << " max_deviation " << column_sum_deviation
     << "\n";
  os << "symmetry " << verdict(symmetry_pass()) << " max_asymmetry " << asymmetry << "\n";
  os << "nonnegativity " << verdict(nonnegative_pass()) << " negative_entries "
     << negative_entries << "\n";
  os << "nonexpansive " << verdict(nonexpansive_pass()) << " spectral_norm " << spectral_norm
     << "\n";
  if (min_eigenvalue) {
    os << "min_eigenvalue_symmetric_part " << *min_eigenvalue << "\n";
  } else {
    os << "min_eigenvalue_symmetric_part not_computed\n";
  }
  os << "overall " << verdict(all_pass()) << "\n";
  return os.str();
}

double spectral_norm_estimate(const WeightMatrix& w, std::size_t iterations) {
  if (w.size() == 0) return 0.0;
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Image x(w.shape());
  for (double& v : x.values()) v = dist(rng);
  double n = norm2(x);
  x *= 1.0 / n;
  double estimate = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    Image y = w.apply_transpose(w.apply(x));
    const double rayleigh = dot(x.values(), y.values());
    estimate = std::sqrt(std::max(rayleigh, 0.0));
    n = norm2(y);
    if (n == 0.0) return 0.0;
    x = std::move(y);
    x *= 1.0 / n;
  }
  return estimate;
}

ConditionReport verify_weight_matrix(const WeightMatrix& w, double tol) {
  ConditionReport r;
  r.tolerance = tol;
  r.explicit_matrix = true;
  r.dimension = w.size();
  r.row_sum_deviation = max_abs_deviation_from_one(w.row_sums());
  r.column_sum_deviation = max_abs_deviation_from_one(w.column_sums());
  double asym = 0.0;
  std::size_t negatives = 0;
  if (w.symmetric()) {
    w.for_each_entry([&](std::size_t, std::size_t, double v) {
      if (v < -tol) ++negatives;
    });
  } else {
    const auto scale = w.row_scale();
    w.for_each_entry([&](std::size_t row, std::size_t col, double v) {
      if (v < -tol) ++negatives;
      // W(row, col) = scale[row] K, W(col, row) = scale[col] K.
      if (row != col && scale[row] != 0.0) {
        asym = std::max(asym, std::abs(v - v / scale[row] * scale[col]));
      }
    });
  }
  r.asymmetry = asym;
  r.negative_entries = negatives;
  r.spectral_norm = spectral_norm_estimate(w);
  if (w.size() <= kDenseCheckLimit) r.min_eigenvalue = min_symmetric_eigenvalue(w.to_dense());
  return r;
}

ConditionReport verify_dense_jacobian(const Eigen::MatrixXd& j, double tol) {
  ConditionReport r;
  r.tolerance = tol;
  r.explicit_matrix = false;
  r.dimension = static_cast<std::size_t>(j.rows());
  const Eigen::VectorXd rows = j.rowwise().sum();
  const Eigen::VectorXd cols = j.colwise().sum().transpose();
  r.row_sum_deviation = (rows.array() - 1.0).abs().maxCoeff();
  r.column_sum_deviation = (cols.array() - 1.0).abs().maxCoeff();
  r.asymmetry = (j - j.transpose()).cwiseAbs().maxCoeff();
  r.negative_entries = static_cast<std::size_t>((j.array() < -tol).count());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
  r.spectral_norm = svd.singularValues()(0);
  r.min_eigenvalue = min_symmetric_eigenvalue(j);
  return r;
}

Eigen::MatrixXd finite_difference_jacobian(DenoisingOperator& denoiser, const Image& probe,
                                           double sigma_n, double step, std::size_t iteration) {
  const auto n = static_cast<Eigen::Index>(probe.size());
  Eigen::MatrixXd j(n, n);
  Image plus = probe;
  Image minus = probe;
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto i = static_cast<std::size_t>(c);
    plus[i] = probe[i] + step;
    minus[i] = probe[i] - step;
    const Image hp = denoiser.denoise(plus, sigma_n, iteration);
    const Image hm = denoiser.denoise(minus, sigma_n, iteration);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto k = static_cast<std::size_t>(r);
      j(r, c) = (hp[k] - hm[k]) / (2.0 * step);
    }
    plus[i] = probe[i];
    minus[i] = probe[i];
  }
  return j;
}

ConditionReport verify_operator_conditions(DenoisingOperator& denoiser, const Image& probe,
                                           double sigma_n, double tol,
                                           std::size_t max_fd_pixels) {
  if (denoiser.exposes_weight_matrix()) {
    denoiser.denoise(probe, sigma_n, 0);
    const WeightMatrix* w = denoiser.weight_matrix();
    if (w == nullptr) {
      throw std::logic_error("denoiser '" + denoiser.name() + "' exposed no weight matrix");
    }
    return verify_weight_matrix(*w, tol);
  }
  if (probe.size() > max_fd_pixels) {
    throw std::length_error("probe of " + std::to_string(probe.size()) +
                            " pixels is too large for a finite-difference Jacobian (limit " +
                            std::to_string(max_fd_pixels) +
                            "); use a denoiser that exposes its weight matrix");
  }
  double scale = std::max(std::abs(probe.max()), std::abs(probe.min()));
  if (scale == 0.0) scale = 1.0;
  return verify_dense_jacobian(
      finite_difference_jacobian(denoiser, probe, sigma_n, 1e-4 * scale, 0), tol);
}

}  // namespace pnp
