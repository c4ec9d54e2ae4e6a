#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pnp/image.hpp"
#include "pnp/projector.hpp"
#include "pnp/tomo.hpp"

namespace pnp {

/// Attenuation of aluminum at the simulated beam energy, nm^-1.
inline constexpr double kAluminumAttenuation = 7.45e-3;

/// Generated image plus the parameters that produced it, as ordered key=value pairs.
struct Phantom {
  Image image;
  std::vector<std::pair<std::string, std::string>> manifest;

  std::string manifest_text() const;
  void write_manifest(const std::filesystem::path& path) const;
};

/// |u/a|^n + |v/b|^n <= 1 in a frame rotated by `angle` about (cx, cy).
/// Coordinates are in pixels from the image origin.
struct Superellipse {
  double cx = 0.0;
  double cy = 0.0;
  double a = 1.0;
  double b = 1.0;
  double exponent = 2.0;
  double angle = 0.0;  ///< radians
  double level = 255.0;

  bool contains(double x, double y) const;
  double bounding_radius() const { return std::max(a, b); }
};

struct SuperellipseParams {
  std::size_t count = 6;
  double exponent_min = 2.0;
  double exponent_max = 6.0;
  double size_min = 25.0;  ///< semi-axis, pixels
  double size_max = 42.0;
  std::vector<double> levels{64.0, 128.0, 192.0, 255.0};
  double gap = 2.0;  ///< minimum clearance between shapes, pixels
  std::size_t max_attempts = 20000;  ///< per shape

  void validate() const;
};

/// Paints the shapes on a zero background, pixel centers tested for inclusion.
Image render_superellipses(Shape shape, std::span<const Superellipse> shapes);

/// Random non-overlapping super-ellipses. Throws std::runtime_error naming the
/// achieved count when placement fails.
Phantom superellipse_phantom(Shape shape, const SuperellipseParams& params, std::uint64_t seed);

/// Disk in the projector's centered frame, nm.
struct Disk {
  double cx = 0.0;
  double cz = 0.0;
  double radius = 1.0;
  double mu = kAluminumAttenuation;
};

/// Sum of disk indicators times attenuation, pixel centers in the centered frame.
Phantom disk_phantom(Shape shape, std::span<const Disk> disks, double pixel_pitch = 1.0);

/// Layout of aluminum disks of varying radii for an nx x nz slice.
std::vector<Disk> default_disk_layout(std::size_t nx, std::size_t nz, double pixel_pitch = 1.0);

struct TiltSimulation {
  double dose = 1e4;              ///< blank-scan counts per ray
  double outlier_fraction = 0.0;
  bool noise = true;
  std::uint64_t seed = 0;
};

struct SimulatedTilts {
  TiltSeries series;
  std::size_t clamped = 0;  ///< counts raised to 1 before the log
};

/// Bright-field counts dose * exp(-A x) with variance-equals-mean Gaussian
/// noise and a set of attenuated outliers; y = -log(counts), Lambda = counts.
SimulatedTilts simulate_tilt_series(const Image& phantom, const SystemMatrix& a,
                                    const TiltSimulation& sim);

}  // namespace pnp
