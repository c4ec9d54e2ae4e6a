#include "pnp/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace pnp {

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::interp: return "interp";
    case ExperimentKind::tomo: return "tomo";
    case ExperimentKind::denoise: return "denoise";
    case ExperimentKind::verify: return "verify";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::interp, ExperimentKind::tomo, ExperimentKind::denoise,
                 ExperimentKind::verify}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown experiment kind '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string show(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string show(bool v) { return v ? "true" : "false"; }
std::string show(std::size_t v) { return std::to_string(v); }
std::string show(std::uint64_t v, int) { return std::to_string(v); }

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* first = v.data();
  const auto* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

template <typename T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

bool is_unset(const std::string& v) { return v == "auto" || v == "none" || v == "never" || v.empty(); }

std::string show_levels(const std::vector<double>& levels) {
  std::string out;
  for (std::size_t i = 0; i < levels.size(); ++i) out += (i ? "," : "") + show(levels[i]);
  return out;
}

std::vector<double> parse_levels(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> ExperimentConfig::to_pairs() const {
  auto opt_d = [](const std::optional<double>& v, const char* unset) {
    return v ? show(*v) : std::string(unset);
  };
  auto opt_p = [](const std::optional<std::filesystem::path>& p) {
    return p ? p->string() : std::string("none");
  };
  return {
      {"kind", to_string(kind)},
      {"out_dir", out_dir.string()},
      {"seed", show(seed, 0)},
      {"threads", std::to_string(threads)},
      {"iterations", show(iterations)},
      {"beta", opt_d(beta, "auto")},
      {"sigma_lambda", opt_d(sigma_lambda, "auto")},
      {"freeze_at", freeze_at ? show(*freeze_at) : "never"},
      {"freeze_plain_nlm", show(freeze_plain_nlm)},
      {"primal_tolerance", show(primal_tolerance)},
      {"dual_tolerance", show(dual_tolerance)},
      {"early_stop", show(early_stop)},
      {"denoiser", denoiser},
      {"patch_radius", std::to_string(patch_radius)},
      {"search_radius", std::to_string(search_radius)},
      {"baseline", baseline},
      {"input_image", opt_p(input_image)},
      {"mask_file", opt_p(mask_file)},
      {"sinogram_file", opt_p(sinogram_file)},
      {"weights_file", opt_p(weights_file)},
      {"width", show(width)},
      {"height", show(height)},
      {"sample_fraction", show(sample_fraction)},
      {"sigma_w", show(sigma_w)},
      {"shape_count", show(shapes.count)},
      {"shape_exponent_min", show(shapes.exponent_min)},
      {"shape_exponent_max", show(shapes.exponent_max)},
      {"shape_size_min", show(shapes.size_min)},
      {"shape_size_max", show(shapes.size_max)},
      {"shape_levels", show_levels(shapes.levels)},
      {"shape_gap", show(shapes.gap)},
      {"shepard_power", show(shepard.power)},
      {"shepard_neighbors", show(shepard.max_neighbors)},
      {"shepard_radius", show(shepard.radius)},
      {"pixel_pitch", show(pixel_pitch)},
      {"tilts", show(tilts)},
      {"tilt_min", show(tilt_min)},
      {"tilt_max", show(tilt_max)},
      {"dose", show(dose)},
      {"outlier_fraction", show(outlier_fraction)},
      {"noise", show(noise)},
      {"huber_threshold", show(huber.threshold)},
      {"huber_delta", show(huber.delta)},
      {"prox_passes", show(prox_passes)},
      {"icd_sweeps", show(icd_sweeps)},
      {"sigma_n", opt_d(sigma_n, "auto")},
      {"noise_sigma", show(noise_sigma)},
      {"probes", show(probes)},
      {"probe_size", show(probe_size)},
      {"tolerance", show(tolerance)},
  };
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_pairs()) out += k + " = " + v + "\n";
  return out;
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto opt_path = [&](std::optional<std::filesystem::path>& p) {
    if (is_unset(v)) p.reset();
    else p = v;
  };
  auto opt_double = [&](std::optional<double>& d) {
    if (is_unset(v)) d.reset();
    else d = parse_double(key, v);
  };
  using Setter = std::function<void()>;
  const std::map<std::string, Setter> table{
      {"kind", [&] { kind = parse_experiment_kind(v); }},
      {"out_dir", [&] { out_dir = v; }},
      {"seed", [&] { seed = parse_integer<std::uint64_t>(key, v); }},
      {"threads", [&] { threads = parse_integer<int>(key, v); }},
      {"iterations", [&] { iterations = parse_integer<std::size_t>(key, v); }},
      {"beta", [&] { opt_double(beta); }},
      {"sigma_lambda", [&] { opt_double(sigma_lambda); }},
      {"freeze_at",
       [&] {
         if (is_unset(v)) freeze_at.reset();
         else freeze_at = parse_integer<std::size_t>(key, v);
       }},
      {"freeze_plain_nlm", [&] { freeze_plain_nlm = parse_bool(key, v); }},
      {"primal_tolerance", [&] { primal_tolerance = parse_double(key, v); }},
      {"dual_tolerance", [&] { dual_tolerance = parse_double(key, v); }},
      {"early_stop", [&] { early_stop = parse_bool(key, v); }},
      {"denoiser", [&] { denoiser = v; }},
      {"patch_radius", [&] { patch_radius = parse_integer<int>(key, v); }},
      {"search_radius", [&] { search_radius = parse_integer<int>(key, v); }},
      {"baseline", [&] { baseline = v; }},
      {"input_image", [&] { opt_path(input_image); }},
      {"mask_file", [&] { opt_path(mask_file); }},
      {"sinogram_file", [&] { opt_path(sinogram_file); }},
      {"weights_file", [&] { opt_path(weights_file); }},
      {"width", [&] { width = parse_integer<std::size_t>(key, v); }},
      {"height", [&] { height = parse_integer<std::size_t>(key, v); }},
      {"sample_fraction", [&] { sample_fraction = parse_double(key, v); }},
      {"sigma_w", [&] { sigma_w = parse_double(key, v); }},
      {"shape_count", [&] { shapes.count = parse_integer<std::size_t>(key, v); }},
      {"shape_exponent_min", [&] { shapes.exponent_min = parse_double(key, v); }},
      {"shape_exponent_max", [&] { shapes.exponent_max = parse_double(key, v); }},
      {"shape_size_min", [&] { shapes.size_min = parse_double(key, v); }},
      {"shape_size_max", [&] { shapes.size_max = parse_double(key, v); }},
      {"shape_levels", [&] { shapes.levels = parse_levels(key, v); }},
      {"shape_gap", [&] { shapes.gap = parse_double(key, v); }},
      {"shepard_power", [&] { shepard.power = parse_double(key, v); }},
      {"shepard_neighbors", [&] { shepard.max_neighbors = parse_integer<std::size_t>(key, v); }},
      {"shepard_radius", [&] { shepard.radius = parse_double(key, v); }},
      {"pixel_pitch", [&] { pixel_pitch = parse_double(key, v); }},
      {"tilts", [&] { tilts = parse_integer<std::size_t>(key, v); }},
      {"tilt_min", [&] { tilt_min = parse_double(key, v); }},
      {"tilt_max", [&] { tilt_max = parse_double(key, v); }},
      {"dose", [&] { dose = parse_double(key, v); }},
      {"outlier_fraction", [&] { outlier_fraction = parse_double(key, v); }},
      {"noise", [&] { noise = parse_bool(key, v); }},
      {"huber_threshold", [&] { huber.threshold = parse_double(key, v); }},
      {"huber_delta", [&] { huber.delta = parse_double(key, v); }},
      {"prox_passes", [&] { prox_passes = parse_integer<std::size_t>(key, v); }},
      {"icd_sweeps", [&] { icd_sweeps = parse_integer<std::size_t>(key, v); }},
      {"sigma_n", [&] { opt_double(sigma_n); }},
      {"noise_sigma", [&] { noise_sigma = parse_double(key, v); }},
      {"probes", [&] { probes = parse_integer<std::size_t>(key, v); }},
      {"probe_size", [&] { probe_size = parse_integer<std::size_t>(key, v); }},
      {"tolerance", [&] { tolerance = parse_double(key, v); }},
  };
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second();
}

void ExperimentConfig::apply(const std::map<std::string, std::string>& overrides) {
  // `kind` first so a file can never be half-applied to the wrong kind.
  if (auto it = overrides.find("kind"); it != overrides.end()) set("kind", it->second);
  for (const auto& [k, v] : overrides) {
    if (k != "kind") set(k, v);
  }
}

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::interp:
      c.iterations = 150;
      c.freeze_at = 12;
      c.baseline = "shepard";
      break;
    case ExperimentKind::tomo:
      c.iterations = 200;
      c.freeze_at = 20;
      c.baseline = "fbp";
      break;
    case ExperimentKind::denoise:
      c.iterations = 0;
      c.width = 128;
      c.height = 128;
      c.shapes.count = 4;
      c.shapes.size_min = 12.0;
      c.shapes.size_max = 22.0;
      c.baseline = "none";
      break;
    case ExperimentKind::verify:
      c.iterations = 0;
      c.baseline = "none";
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  auto check = [](auto&& validate_part) {
    try {
      validate_part();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  };
  const bool known_denoiser = denoiser == "nlm" || denoiser == "dsg-nlm" ||
                              denoiser == "identity" || denoiser.rfind("external:", 0) == 0;
  if (!known_denoiser) fail("unknown denoiser '" + denoiser + "'");
  if (denoiser == "external:") fail("external denoiser needs a path after 'external:'");
  if (patch_radius < 0 || search_radius < 1) fail("patch_radius >= 0 and search_radius >= 1 required");
  if (beta && !(*beta > 0.0)) fail("beta must be positive");
  if (sigma_lambda && !(*sigma_lambda > 0.0)) fail("sigma_lambda must be positive");
  if (sigma_n && !(*sigma_n > 0.0)) fail("sigma_n must be positive");
  if (threads < 0) fail("threads must be nonnegative");
  if (width == 0 || height == 0) fail("image extent must be positive");
  const std::string base = baseline;
  switch (kind) {
    case ExperimentKind::interp:
      if (base != "shepard" && base != "none") fail("interp baseline must be shepard or none");
      if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) fail("sample_fraction must lie in (0, 1]");
      if (sigma_w < 0.0) fail("sigma_w must be nonnegative");
      if (iterations == 0) fail("iterations must be positive");
      check([&] { shapes.validate(); });
      break;
    case ExperimentKind::tomo:
      if (base != "fbp" && base != "none") fail("tomo baseline must be fbp or none");
      if (!sinogram_file && tilts < 2) fail("tomography needs at least 2 tilts");
      if (!(dose > 0.0)) fail("dose must be positive");
      if (!(pixel_pitch > 0.0)) fail("pixel_pitch must be positive");
      if (iterations == 0) fail("iterations must be positive");
      check([&] { huber.validate(); });
      break;
    case ExperimentKind::denoise:
      if (noise_sigma < 0.0) fail("noise_sigma must be nonnegative");
      break;
    case ExperimentKind::verify:
      if (probes == 0 || probe_size == 0) fail("verify needs at least one nonempty probe");
      if (!(tolerance > 0.0)) fail("tolerance must be positive");
      break;
  }
}

NlmParams ExperimentConfig::nlm_params() const {
  NlmParams p;
  p.patch_radius = patch_radius;
  p.search_radius = search_radius;
  if (sigma_n) p.sigma_n = *sigma_n;
  return p;
}

double ExperimentConfig::default_beta() const {
  if (kind == ExperimentKind::tomo) return 3.68;
  if (denoiser == "dsg-nlm") return 0.79;
  if (denoiser == "nlm") return 0.9;
  return 1.0;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_key_values(ss.str());
}

ExperimentConfig load_config(ExperimentKind kind, const std::optional<std::filesystem::path>& file,
                             const std::map<std::string, std::string>& overrides) {
  ExperimentConfig cfg = ExperimentConfig::defaults(kind);
  if (file) {
    auto kv = read_key_values(*file);
    if (auto it = kv.find("kind"); it != kv.end() && parse_experiment_kind(it->second) != kind) {
      throw ConfigError("config file is for '" + it->second + "', not '" + to_string(kind) + "'");
    }
    cfg.apply(kv);
  }
  cfg.apply(overrides);
  cfg.validate();
  return cfg;
}

}  // namespace pnp
