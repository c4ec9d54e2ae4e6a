#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "pnp/config.hpp"
#include "pnp/experiment.hpp"
#include "pnp/raster_io.hpp"

namespace fs = std::filesystem;
using namespace pnp;

namespace {

const fs::path kScratch = fs::temp_directory_path() / "pnp_experiment";

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PNP_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallInterp =
    "--iterations 8 --freeze-at 3 --set width=40 --set height=40 --set shape_count=2 "
    "--set shape_size_min=5 --set shape_size_max=9 --set search_radius=4";
const char* kSmallTomo =
    "--iterations 4 --freeze-at 2 --set width=32 --set height=32 --set tilts=9 "
    "--set search_radius=3 --set prox_passes=1 --set icd_sweeps=2";

}  // namespace

TEST_CASE("CLI runs are bit-reproducible for a fixed config") {
  for (const std::string cmd : {"interp", "tomo"}) {
    const std::string extra = cmd == "interp" ? kSmallInterp : kSmallTomo;
    const auto a = kScratch / (cmd + "_a"), b = kScratch / (cmd + "_b");
    fs::remove_all(a);
    fs::remove_all(b);
    REQUIRE(run_cli(cmd + " " + extra + " --seed 3 --out " + a.string()) == 0);
    REQUIRE(run_cli(cmd + " " + extra + " --seed 3 --out " + b.string()) == 0);
    for (const char* f : {"recon.raster", "residuals.csv", "summary.txt"}) {
      REQUIRE(fs::exists(a / f));
      CHECK(slurp(a / f) == slurp(b / f));
    }
  }
}

TEST_CASE("interp artifacts and resolved config") {
  const auto dir = kScratch / "interp_art";
  fs::remove_all(dir);
  REQUIRE(run_cli(std::string("interp ") + kSmallInterp + " --out " + dir.string()) == 0);
  for (const char* f : {"truth.raster", "baseline.raster", "mask.txt", "phantom.manifest", "summary.txt"}) {
    CHECK(fs::exists(dir / f));
  }
  const auto kv = read_key_values(dir / "config.resolved");
  CHECK(kv.at("beta") == "0.79");
  CHECK(kv.at("sigma_lambda") != "auto");
  const auto cfg = load_config(ExperimentKind::interp, dir / "config.resolved");
  CHECK(cfg.iterations == 8);
  const auto csv = slurp(dir / "residuals.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= 8);
  const Image recon = read_image(dir / "recon.raster");
  CHECK(recon.width() == 40);
}

TEST_CASE("re-running from config.resolved reproduces the reconstruction") {
  const auto first = kScratch / "resolved_a", second = kScratch / "resolved_b";
  fs::remove_all(first);
  fs::remove_all(second);
  REQUIRE(run_cli(std::string("interp ") + kSmallInterp + " --out " + first.string()) == 0);
  REQUIRE(run_cli("interp --config " + (first / "config.resolved").string() + " --out " + second.string()) == 0);
  CHECK(slurp(first / "recon.raster") == slurp(second / "recon.raster"));
}

TEST_CASE("tomography artifacts include the tilt series") {
  const auto dir = kScratch / "tomo_art";
  fs::remove_all(dir);
  REQUIRE(run_cli(std::string("tomo ") + kSmallTomo + " --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "sinogram.txt"));
  CHECK(fs::exists(dir / "sinogram_weights.txt"));
  CHECK(slurp(dir / "summary.txt").find("descent_violations = 0") != std::string::npos);
}

TEST_CASE("verify exit status reflects the conditions") {
  const auto dir = kScratch / "verify";
  const std::string small = " --set probes=2 --set probe_size=8 --set search_radius=3 --out " + dir.string();
  CHECK(run_cli("verify --denoiser dsg-nlm" + small) == 0);
  CHECK(slurp(dir / "summary.txt").find("all_conditions = pass") != std::string::npos);
  CHECK(run_cli("verify --denoiser nlm" + small) == 3);
  CHECK(slurp(dir / "verify_report.txt").find("column_sums FAIL") != std::string::npos);
  CHECK(run_cli("verify --set no_such=1") == 1);
}

TEST_CASE("denoise reduces error on a generated image") {
  auto cfg = ExperimentConfig::defaults(ExperimentKind::denoise);
  cfg.width = cfg.height = 48;
  cfg.shapes.count = 2;
  cfg.shapes.size_min = 5.0;
  cfg.shapes.size_max = 9.0;
  cfg.search_radius = 4;
  cfg.out_dir = kScratch / "denoise";
  const auto r = run_experiment(cfg);
  REQUIRE(r.error_pnp.has_value());
  CHECK(*r.error_pnp < *r.error_baseline);
}

TEST_CASE("external denoiser plugin") {
  const auto dir = kScratch / "plugin";
  fs::create_directories(dir);
  const auto ok = dir / "copy.sh";
  std::ofstream(ok) << "#!/bin/sh\ncp \"$1\" \"$3\"\ncp \"$1.hdr\" \"$3.hdr\"\n";
  fs::permissions(ok, fs::perms::owner_all);
  write_image(dir / "tiny.raster", Image({3, 3, 1}, 1.0));
  const auto bad = dir / "wrong.sh";
  std::ofstream(bad) << "#!/bin/sh\ncp \"" << (dir / "tiny.raster").string() << "\" \"$3\"\ncp \""
                     << (dir / "tiny.raster.hdr").string() << "\" \"$3.hdr\"\n";
  fs::permissions(bad, fs::perms::owner_all);

  ExternalDenoiser copy(ok, dir / "work");
  Image v({6, 5, 1});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) * 0.5;
  const Image out = copy.denoise(v, 2.0, 0);
  CHECK(out.storage() == v.storage());

  ExternalDenoiser wrong(bad, dir / "work");
  CHECK_THROWS_AS(wrong.denoise(v, 2.0, 0), ShapeError);
  ExternalDenoiser missing(dir / "absent.sh", dir / "work");
  CHECK_THROWS_AS(missing.denoise(v, 2.0, 0), std::runtime_error);
}
