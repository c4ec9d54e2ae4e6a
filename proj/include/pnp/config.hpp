#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pnp/admm.hpp"
#include "pnp/interp.hpp"
#include "pnp/nlm.hpp"
#include "pnp/phantom.hpp"
#include "pnp/tomo.hpp"

namespace pnp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { interp, tomo, denoise, verify };

std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& s);

/// Everything one run needs. Optional fields left unset are resolved from the
/// data or from per-denoiser defaults when the experiment starts.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::interp;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  int threads = 0;  ///< 0: all cores

  // Plug-and-play loop.
  std::size_t iterations = 150;
  std::optional<double> beta;
  std::optional<double> sigma_lambda;
  std::optional<std::size_t> freeze_at;
  bool freeze_plain_nlm = false;
  double primal_tolerance = 0.0;
  double dual_tolerance = 0.0;
  bool early_stop = false;

  // Denoiser: nlm | dsg-nlm | identity | external:<path>.
  std::string denoiser = "dsg-nlm";
  int patch_radius = 2;
  int search_radius = 10;
  std::string baseline;  ///< shepard | fbp | none; empty picks the kind's default

  // Inputs. A missing truth image means a generated phantom.
  std::optional<std::filesystem::path> input_image;
  std::optional<std::filesystem::path> mask_file;
  std::optional<std::filesystem::path> sinogram_file;
  std::optional<std::filesystem::path> weights_file;

  std::size_t width = 256;
  std::size_t height = 256;

  // Interpolation.
  double sample_fraction = 0.1;
  double sigma_w = 0.0;
  SuperellipseParams shapes;
  ShepardParams shepard;

  // Tomography.
  double pixel_pitch = 1.0;
  std::size_t tilts = 47;
  double tilt_min = -70.0;
  double tilt_max = 70.0;
  double dose = 1e4;
  double outlier_fraction = 0.05;
  bool noise = true;
  HuberParams huber;
  std::size_t prox_passes = 3;
  std::size_t icd_sweeps = 5;

  // Denoise / verify.
  std::optional<double> sigma_n;
  double noise_sigma = 25.0;  ///< noise added to a generated denoise input
  std::size_t probes = 10;
  std::size_t probe_size = 16;
  double tolerance = 1e-10;

  /// Ordered key=value view; parse(resolved text) reproduces the config.
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  std::string to_text() const;

  /// Sets one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void apply(const std::map<std::string, std::string>& overrides);

  /// Default config for a kind: iteration count, freeze point and tomography scales.
  static ExperimentConfig defaults(ExperimentKind kind);

  /// Throws ConfigError when a parameter required by the kind is missing or invalid.
  void validate() const;

  NlmParams nlm_params() const;
  /// Denoiser beta when none was configured.
  double default_beta() const;
};

/// Flat `key = value` lines; `#` starts a comment.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// defaults(kind) with the file's keys, then `overrides`, applied in that order.
ExperimentConfig load_config(ExperimentKind kind, const std::optional<std::filesystem::path>& file,
                             const std::map<std::string, std::string>& overrides = {});

}  // namespace pnp
