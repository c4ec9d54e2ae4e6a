#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pnp/admm.hpp"
#include "pnp/config.hpp"
#include "pnp/image.hpp"
#include "pnp/interp.hpp"
#include "pnp/tomo.hpp"

namespace pnp {

/// Denoiser run as a separate process: `<exe> <in.raster> <sigma_n> <out.raster>`.
/// The plugin must write a raster of the input's shape.
class ExternalDenoiser final : public DenoisingOperator {
 public:
  ExternalDenoiser(std::filesystem::path executable, std::filesystem::path work_dir);

  std::string name() const override { return "external:" + exe_.string(); }
  Image denoise(const Image& v_tilde, double sigma_n, std::size_t iteration) override;

 private:
  std::filesystem::path exe_;
  std::filesystem::path work_;
};

/// nlm | dsg-nlm | identity | external:<path>. Plugin scratch files go in work_dir.
std::unique_ptr<DenoisingOperator> make_denoiser(const ExperimentConfig& cfg,
                                                 const std::filesystem::path& work_dir);

struct ExperimentResult {
  ExperimentConfig resolved;  ///< with beta, sigma_lambda and baseline filled in
  Image recon;
  std::optional<Image> truth;
  std::optional<Image> baseline;
  ResidualLog residuals;
  std::vector<std::pair<std::string, std::string>> summary;

  std::optional<double> error_pnp;       ///< normalized RMSE (interp) or RMSE in nm^-1 (tomo)
  std::optional<double> error_baseline;
  std::size_t descent_violations = 0;    ///< tomography cost increases across prox sub-steps
  std::size_t prox_calls = 0;
  std::optional<SamplingMask> mask;
  std::optional<TiltSeries> series;
  std::string phantom_manifest;
  std::string report;                    ///< verify: full condition report
  bool checks_pass = true;               ///< verify: every probe passed

  double final_primal() const { return residuals.empty() ? 0.0 : residuals.back().primal; }
  std::string summary_text() const;
};

ExperimentResult run_interp(const ExperimentConfig& cfg);
ExperimentResult run_tomo(const ExperimentConfig& cfg);
ExperimentResult run_denoise(const ExperimentConfig& cfg);
ExperimentResult run_verify(const ExperimentConfig& cfg);

/// Dispatches on cfg.kind.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// recon.raster, residuals.csv, summary.txt and config.resolved in cfg.out_dir,
/// plus the inputs that were generated.
void write_artifacts(const ExperimentResult& result);

}  // namespace pnp
