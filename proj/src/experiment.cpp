#include "pnp/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <omp.h>

#include "pnp/nlm.hpp"
#include "pnp/operator_check.hpp"
#include "pnp/phantom.hpp"
#include "pnp/projector.hpp"
#include "pnp/raster_io.hpp"

namespace pnp {

namespace {

std::string show(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 12);
  return std::string(buf, end);
}

std::string quoted(const std::filesystem::path& p) {
  std::string out = "'";
  for (char c : p.string()) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

void set_threads(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
}

PnPConfig pnp_config(const ExperimentConfig& cfg) {
  PnPConfig p;
  p.beta = *cfg.beta;
  p.sigma_lambda = *cfg.sigma_lambda;
  p.max_iterations = cfg.iterations;
  p.primal_tolerance = cfg.primal_tolerance;
  p.dual_tolerance = cfg.dual_tolerance;
  p.early_stop = cfg.early_stop;
  // Only the doubly stochastic filter is frozen unless asked otherwise.
  if (cfg.denoiser == "dsg-nlm" || cfg.freeze_plain_nlm) p.weight_freeze_iteration = cfg.freeze_at;
  return p;
}

void add_run_summary(ExperimentResult& r, const DenoisingOperator& h) {
  auto& s = r.summary;
  s.emplace_back("denoiser", h.name());
  s.emplace_back("beta", show(*r.resolved.beta));
  s.emplace_back("sigma_lambda", show(*r.resolved.sigma_lambda));
  s.emplace_back("sigma_n", show(std::sqrt(*r.resolved.beta) * *r.resolved.sigma_lambda));
  s.emplace_back("iterations", std::to_string(r.residuals.size()));
  if (!r.residuals.empty()) {
    s.emplace_back("final_primal_residual", show(r.residuals.back().primal));
    s.emplace_back("final_dual_residual", show(r.residuals.back().dual));
  }
  if (const auto* nlm = dynamic_cast<const NlmDenoiser*>(&h)) {
    s.emplace_back("weight_computations", std::to_string(nlm->weight_computations()));
    s.emplace_back("clamped_diagonals", std::to_string(nlm->clamped_diagonals()));
  }
}

}  // namespace

ExternalDenoiser::ExternalDenoiser(std::filesystem::path executable, std::filesystem::path work_dir)
    : exe_(std::move(executable)), work_(std::move(work_dir)) {}

Image ExternalDenoiser::denoise(const Image& v_tilde, double sigma_n, std::size_t iteration) {
  std::filesystem::create_directories(work_);
  const auto in = work_ / "plugin_in.raster";
  const auto out = work_ / "plugin_out.raster";
  std::filesystem::remove(out);
  write_image(in, v_tilde);
  std::ostringstream cmd;
  cmd.precision(17);
  cmd << quoted(exe_) << " " << quoted(in) << " " << sigma_n << " " << quoted(out);
  const int status = std::system(cmd.str().c_str());
  if (status != 0) {
    throw std::runtime_error("external denoiser " + exe_.string() + " failed with status " +
                             std::to_string(status) + " at iteration " + std::to_string(iteration));
  }
  Image result = read_image(out, v_tilde.pixel_pitch());
  if (!(result.shape() == v_tilde.shape())) {
    throw ShapeError("external denoiser returned " + result.shape().to_string() + ", expected " +
                     v_tilde.shape().to_string());
  }
  return result;
}

std::unique_ptr<DenoisingOperator> make_denoiser(const ExperimentConfig& cfg,
                                                 const std::filesystem::path& work_dir) {
  const auto& d = cfg.denoiser;
  if (d == "nlm") return std::make_unique<NlmDenoiser>(NlmVariant::plain, cfg.nlm_params());
  if (d == "dsg-nlm") {
    return std::make_unique<NlmDenoiser>(NlmVariant::doubly_stochastic, cfg.nlm_params());
  }
  if (d == "identity") return std::make_unique<IdentityDenoiser>();
  if (d.rfind("external:", 0) == 0) {
    return std::make_unique<ExternalDenoiser>(d.substr(9), work_dir);
  }
  throw ConfigError("unknown denoiser '" + d + "'");
}

std::string ExperimentResult::summary_text() const {
  std::string out;
  for (const auto& [k, v] : summary) out += k + " = " + v + "\n";
  return out;
}

ExperimentResult run_interp(const ExperimentConfig& cfg_in) {
  cfg_in.validate();
  set_threads(cfg_in);
  ExperimentResult r;
  r.resolved = cfg_in;
  auto& cfg = r.resolved;

  Image truth;
  if (cfg.input_image) {
    truth = read_image(*cfg.input_image);
  } else {
    auto ph = superellipse_phantom({cfg.width, cfg.height, 1}, cfg.shapes, cfg.seed);
    r.phantom_manifest = ph.manifest_text();
    truth = std::move(ph.image);
  }
  SamplingMask mask = cfg.mask_file ? read_mask(*cfg.mask_file, cfg.sigma_w)
                                    : sample_image(truth, random_mask(truth.shape(), cfg.sample_fraction,
                                                                      cfg.seed + 1),
                                                   cfg.sigma_w, cfg.seed + 2);
  require_same_shape(mask.shape(), truth.shape(), "interp mask");

  Image init;
  if (cfg.baseline == "shepard") {
    init = shepard_interpolate(mask, truth.shape(), cfg.shepard);
    r.baseline = init;
  } else {
    init = Image(truth.shape());
    for (std::size_t i = 0; i < mask.count(); ++i) init[mask.indices()[i]] = mask.values()[i];
  }
  if (!cfg.sigma_lambda) {
    const auto& y = mask.values();
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const auto est = estimate_sigma_lambda(init, *hi - *lo);
    cfg.sigma_lambda = est.value;
    if (est.floored) r.summary.emplace_back("sigma_lambda_floored", "true");
  }
  if (!cfg.beta) cfg.beta = cfg.default_beta();

  InterpInversion inversion(mask);
  auto denoiser = make_denoiser(cfg, cfg.out_dir / "plugin");
  auto run = run_pnp(init, inversion, *denoiser, pnp_config(cfg));
  r.recon = std::move(run.state.x_hat);
  r.residuals = std::move(run.residuals);

  r.summary.emplace_back("experiment", "interp");
  r.summary.emplace_back("samples", std::to_string(mask.count()));
  add_run_summary(r, *denoiser);
  r.error_pnp = normalized_rmse(r.recon, truth);
  r.summary.emplace_back("rmse_pnp", show(*r.error_pnp));
  if (r.baseline) {
    r.error_baseline = normalized_rmse(*r.baseline, truth);
    r.summary.emplace_back("rmse_shepard", show(*r.error_baseline));
  }
  r.truth = std::move(truth);
  r.mask = std::move(mask);
  return r;
}

ExperimentResult run_tomo(const ExperimentConfig& cfg_in) {
  cfg_in.validate();
  set_threads(cfg_in);
  ExperimentResult r;
  r.resolved = cfg_in;
  auto& cfg = r.resolved;

  std::shared_ptr<TiltSeries> ts;
  std::optional<Image> truth;
  ProjectionGeometry geom = ProjectionGeometry::for_image(cfg.width, cfg.height, cfg.pixel_pitch);
  std::shared_ptr<SystemMatrix> a;
  if (cfg.sinogram_file) {
    ts = std::make_shared<TiltSeries>(read_sinogram(*cfg.sinogram_file, cfg.weights_file, cfg.pixel_pitch));
    geom.bins = ts->bins;
    a = std::make_shared<SystemMatrix>(geom, ts->angles_deg);
    if (cfg.input_image) truth = read_image(*cfg.input_image, cfg.pixel_pitch);
  } else {
    if (cfg.input_image) {
      truth = read_image(*cfg.input_image, cfg.pixel_pitch);
    } else {
      const auto disks = default_disk_layout(cfg.width, cfg.height, cfg.pixel_pitch);
      auto ph = disk_phantom({cfg.width, cfg.height, 1}, disks, cfg.pixel_pitch);
      r.phantom_manifest = ph.manifest_text();
      truth = std::move(ph.image);
    }
    const auto angles = equally_spaced_angles(cfg.tilts, cfg.tilt_min, cfg.tilt_max);
    a = std::make_shared<SystemMatrix>(geom, angles);
    TiltSimulation sim{cfg.dose, cfg.outlier_fraction, cfg.noise, cfg.seed};
    auto simulated = simulate_tilt_series(*truth, *a, sim);
    r.summary.emplace_back("clamped_counts", std::to_string(simulated.clamped));
    r.summary.emplace_back("outliers", std::to_string(simulated.series.outliers.size()));
    ts = std::make_shared<TiltSeries>(std::move(simulated.series));
  }
  if (truth) require_same_shape(truth->shape(), geom.image_shape(), "tomography truth");

  Image init(geom.image_shape(), 0.0, geom.pixel_pitch);
  if (cfg.baseline == "fbp") {
    init = fbp_reconstruct(*ts, geom);
    r.baseline = init;
  }
  if (!cfg.sigma_lambda) cfg.sigma_lambda = estimate_sigma_lambda(init).value;
  if (!cfg.beta) cfg.beta = cfg.default_beta();

  const auto start = initial_nuisance(init, *ts, *a);
  TomoInversion inversion(ts, a, cfg.huber, start, {cfg.prox_passes, cfg.icd_sweeps});
  auto denoiser = make_denoiser(cfg, cfg.out_dir / "plugin");
  auto run = run_pnp(init, inversion, *denoiser, pnp_config(cfg));
  r.recon = std::move(run.state.x_hat);
  r.residuals = std::move(run.residuals);
  r.descent_violations = inversion.descent_violations();
  r.prox_calls = inversion.calls();

  r.summary.emplace_back("experiment", "tomo");
  r.summary.emplace_back("tilts", std::to_string(ts->tilts()));
  r.summary.emplace_back("bins", std::to_string(ts->bins));
  add_run_summary(r, *denoiser);
  r.summary.emplace_back("prox_calls", std::to_string(inversion.calls()));
  r.summary.emplace_back("descent_violations", std::to_string(inversion.descent_violations()));
  r.summary.emplace_back("worst_relative_cost_increase", show(inversion.worst_relative_increase()));
  r.summary.emplace_back("final_sigma", show(inversion.nuisance().sigma));
  if (truth) {
    r.error_pnp = rmse(r.recon, *truth);
    r.summary.emplace_back("rmse_pnp", show(*r.error_pnp));
    if (r.baseline) {
      r.error_baseline = rmse(*r.baseline, *truth);
      r.summary.emplace_back("rmse_fbp", show(*r.error_baseline));
    }
  }
  r.truth = std::move(truth);
  r.series = *ts;
  return r;
}

ExperimentResult run_denoise(const ExperimentConfig& cfg_in) {
  cfg_in.validate();
  set_threads(cfg_in);
  ExperimentResult r;
  r.resolved = cfg_in;
  auto& cfg = r.resolved;

  Image input;
  if (cfg.input_image) {
    input = read_image(*cfg.input_image);
  } else {
    auto ph = superellipse_phantom({cfg.width, cfg.height, 1}, cfg.shapes, cfg.seed);
    r.phantom_manifest = ph.manifest_text();
    r.truth = ph.image;
    input = ph.image;
    std::mt19937_64 rng(cfg.seed + 3);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (double& v : input.values()) v += cfg.noise_sigma * noise(rng);
  }
  if (!cfg.sigma_n) cfg.sigma_n = cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0;
  auto denoiser = make_denoiser(cfg, cfg.out_dir / "plugin");
  r.recon = denoiser->denoise(input, *cfg.sigma_n, 0);
  r.baseline = input;

  r.summary.emplace_back("experiment", "denoise");
  r.summary.emplace_back("denoiser", denoiser->name());
  r.summary.emplace_back("sigma_n", show(*cfg.sigma_n));
  if (r.truth) {
    const double in_mse = std::pow(rmse(input, *r.truth), 2);
    const double out_mse = std::pow(rmse(r.recon, *r.truth), 2);
    r.error_baseline = in_mse;
    r.error_pnp = out_mse;
    r.summary.emplace_back("mse_input", show(in_mse));
    r.summary.emplace_back("mse_output", show(out_mse));
  }
  return r;
}

ExperimentResult run_verify(const ExperimentConfig& cfg_in) {
  cfg_in.validate();
  set_threads(cfg_in);
  ExperimentResult r;
  r.resolved = cfg_in;
  const auto& cfg = r.resolved;

  auto denoiser = make_denoiser(cfg, cfg.out_dir / "plugin");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> pixel(0.0, 255.0);
  std::ostringstream report;
  bool rows = true, cols = true, sym = true, nonneg = true, contract = true;
  double worst_rows = 0.0, worst_cols = 0.0, worst_asym = 0.0, worst_norm = 0.0;
  for (std::size_t p = 0; p < cfg.probes; ++p) {
    Image probe({cfg.probe_size, cfg.probe_size, 1});
    for (double& v : probe.values()) v = pixel(rng);
    const double sigma_n = cfg.sigma_n ? *cfg.sigma_n : std::sqrt(variance(probe));
    const auto rep = verify_operator_conditions(*denoiser, probe, sigma_n, cfg.tolerance);
    report << "[probe " << p << "]\n" << rep.to_text() << "\n";
    rows = rows && rep.rows_pass();
    cols = cols && rep.columns_pass();
    sym = sym && rep.symmetry_pass();
    nonneg = nonneg && rep.nonnegative_pass();
    contract = contract && rep.nonexpansive_pass();
    worst_rows = std::max(worst_rows, rep.row_sum_deviation);
    worst_cols = std::max(worst_cols, rep.column_sum_deviation);
    worst_asym = std::max(worst_asym, rep.asymmetry);
    worst_norm = std::max(worst_norm, rep.spectral_norm);
    if (p + 1 == cfg.probes) r.recon = denoiser->denoise(probe, sigma_n, 0);
  }
  auto verdict = [](bool ok) { return std::string(ok ? "pass" : "fail"); };
  auto& s = r.summary;
  s.emplace_back("experiment", "verify");
  s.emplace_back("denoiser", denoiser->name());
  s.emplace_back("probes", std::to_string(cfg.probes));
  s.emplace_back("tolerance", show(cfg.tolerance));
  s.emplace_back("row_stochastic", verdict(rows) + " (max deviation " + show(worst_rows) + ")");
  s.emplace_back("column_stochastic", verdict(cols) + " (max deviation " + show(worst_cols) + ")");
  s.emplace_back("symmetric", verdict(sym) + " (max asymmetry " + show(worst_asym) + ")");
  s.emplace_back("nonnegative", verdict(nonneg));
  s.emplace_back("nonexpansive", verdict(contract) + " (max spectral norm " + show(worst_norm) + ")");
  r.checks_pass = rows && cols && sym && nonneg && contract;
  s.emplace_back("all_conditions", verdict(r.checks_pass));
  r.report = report.str();
  return r;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::interp: return run_interp(cfg);
    case ExperimentKind::tomo: return run_tomo(cfg);
    case ExperimentKind::denoise: return run_denoise(cfg);
    case ExperimentKind::verify: return run_verify(cfg);
  }
  throw ConfigError("unknown experiment kind");
}

void write_artifacts(const ExperimentResult& result) {
  const auto& dir = result.resolved.out_dir;
  std::filesystem::create_directories(dir);
  auto open = [](const std::filesystem::path& p) {
    std::ofstream os(p);
    if (!os) throw FormatError("cannot open " + p.string());
    return os;
  };
  if (!result.recon.empty()) write_image(dir / "recon.raster", result.recon);
  {
    auto os = open(dir / "residuals.csv");
    result.residuals.write_csv(os);
  }
  open(dir / "summary.txt") << result.summary_text();
  open(dir / "config.resolved") << result.resolved.to_text();
  if (result.truth) write_image(dir / "truth.raster", *result.truth);
  if (result.baseline) write_image(dir / "baseline.raster", *result.baseline);
  if (!result.phantom_manifest.empty()) open(dir / "phantom.manifest") << result.phantom_manifest;
  if (result.mask) write_mask(dir / "mask.txt", *result.mask);
  if (result.series) {
    write_sinogram(dir / "sinogram.txt", *result.series);
    write_sinogram_weights(dir / "sinogram_weights.txt", *result.series);
  }
  if (!result.report.empty()) open(dir / "verify_report.txt") << result.report;
}

}  // namespace pnp
