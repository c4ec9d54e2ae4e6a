#include "pnp/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pnp/raster_io.hpp"

namespace pnp {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string Phantom::manifest_text() const {
  std::string out;
  for (const auto& [k, v] : manifest) out += k + "=" + v + "\n";
  return out;
}

void Phantom::write_manifest(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string());
  os << manifest_text();
}

bool Superellipse::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = (c * dx + s * dy) / a;
  const double v = (-s * dx + c * dy) / b;
  return std::pow(std::abs(u), exponent) + std::pow(std::abs(v), exponent) <= 1.0;
}

void SuperellipseParams::validate() const {
  if (count < 1) throw std::invalid_argument("super-ellipse count must be at least 1");
  if (!(exponent_min > 0.0 && exponent_min <= exponent_max)) {
    throw std::invalid_argument("bad super-ellipse exponent range");
  }
  if (!(size_min > 0.0 && size_min <= size_max)) throw std::invalid_argument("bad super-ellipse size range");
  if (levels.empty()) throw std::invalid_argument("super-ellipse fill levels are empty");
  for (double l : levels) {
    if (l < 0.0 || l > 255.0) throw std::invalid_argument("fill levels must lie in [0, 255]");
  }
}

Image render_superellipses(Shape shape, std::span<const Superellipse> shapes) {
  Image img(shape);
  for (const auto& e : shapes) {
    const double r = e.bounding_radius();
    const long x0 = std::max(0L, static_cast<long>(std::floor(e.cx - r)));
    const long x1 = std::min(static_cast<long>(shape.nx) - 1, static_cast<long>(std::ceil(e.cx + r)));
    const long y0 = std::max(0L, static_cast<long>(std::floor(e.cy - r)));
    const long y1 = std::min(static_cast<long>(shape.ny) - 1, static_cast<long>(std::ceil(e.cy + r)));
    for (long y = y0; y <= y1; ++y) {
      for (long x = x0; x <= x1; ++x) {
        if (e.contains(static_cast<double>(x), static_cast<double>(y))) {
          img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = e.level;
        }
      }
    }
  }
  return img;
}

Phantom superellipse_phantom(Shape shape, const SuperellipseParams& params, std::uint64_t seed) {
  params.validate();
  if (shape.nz > 1) throw std::invalid_argument("super-ellipse phantoms are 2D");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_level(0, params.levels.size() - 1);

  // Pixel-exact placement: a candidate is rejected when any of its pixels lies
  // within `gap` of an already placed shape.
  const long nx = static_cast<long>(shape.nx), ny = static_cast<long>(shape.ny);
  std::vector<char> blocked(shape.size(), 0);
  const long g = static_cast<long>(std::ceil(params.gap));
  // Sizes are drawn up front and placed largest first so small shapes fill gaps.
  std::vector<std::pair<double, double>> axes(params.count);
  for (auto& [a, b] : axes) {
    a = params.size_min + (params.size_max - params.size_min) * unit(rng);
    b = params.size_min + (params.size_max - params.size_min) * unit(rng);
  }
  std::stable_sort(axes.begin(), axes.end(),
                   [](const auto& l, const auto& r) { return l.first * l.second > r.first * r.second; });

  std::vector<Superellipse> placed;
  std::vector<std::size_t> pixels;
  std::size_t attempts = 0;  // for the current shape
  while (placed.size() < params.count && attempts < params.max_attempts) {
    ++attempts;
    Superellipse e;
    e.a = axes[placed.size()].first;
    e.b = axes[placed.size()].second;
    e.exponent = params.exponent_min + (params.exponent_max - params.exponent_min) * unit(rng);
    e.angle = std::numbers::pi * unit(rng);
    e.level = params.levels[pick_level(rng)];
    const double r = e.bounding_radius();
    e.cx = static_cast<double>(nx - 1) * unit(rng);
    e.cy = static_cast<double>(ny - 1) * unit(rng);

    pixels.clear();
    bool clear = true;
    const long x0 = static_cast<long>(std::floor(e.cx - r)), x1 = static_cast<long>(std::ceil(e.cx + r));
    const long y0 = static_cast<long>(std::floor(e.cy - r)), y1 = static_cast<long>(std::ceil(e.cy + r));
    for (long y = y0; y <= y1 && clear; ++y) {
      for (long x = x0; x <= x1; ++x) {
        if (!e.contains(static_cast<double>(x), static_cast<double>(y))) continue;
        if (x < 0 || y < 0 || x >= nx || y >= ny) {
          clear = false;
          break;
        }
        const auto q = static_cast<std::size_t>(y * nx + x);
        if (blocked[q]) {
          clear = false;
          break;
        }
        pixels.push_back(q);
      }
    }
    if (!clear || pixels.empty()) continue;
    for (std::size_t q : pixels) {
      const long px = static_cast<long>(q) % nx, py = static_cast<long>(q) / nx;
      for (long dy = -g; dy <= g; ++dy) {
        for (long dx = -g; dx <= g; ++dx) {
          const long x = px + dx, y = py + dy;
          if (x >= 0 && y >= 0 && x < nx && y < ny && dx * dx + dy * dy <= g * g) {
            blocked[static_cast<std::size_t>(y * nx + x)] = 1;
          }
        }
      }
    }
    placed.push_back(e);
    attempts = 0;
  }
  if (placed.size() < params.count) {
    throw std::runtime_error("placed only " + std::to_string(placed.size()) + " of " +
                             std::to_string(params.count) + " super-ellipses without overlap");
  }

  Phantom p{render_superellipses(shape, placed), {}};
  auto& m = p.manifest;
  m.emplace_back("kind", "superellipse");
  m.emplace_back("width", std::to_string(shape.nx));
  m.emplace_back("height", std::to_string(shape.ny));
  m.emplace_back("seed", std::to_string(seed));
  m.emplace_back("count", std::to_string(params.count));
  m.emplace_back("exponent_range", fmt(params.exponent_min) + "," + fmt(params.exponent_max));
  m.emplace_back("size_range", fmt(params.size_min) + "," + fmt(params.size_max));
  m.emplace_back("gap", fmt(params.gap));
  for (std::size_t i = 0; i < placed.size(); ++i) {
    const auto& e = placed[i];
    m.emplace_back("shape" + std::to_string(i),
                   fmt(e.cx) + "," + fmt(e.cy) + "," + fmt(e.a) + "," + fmt(e.b) + "," +
                       fmt(e.exponent) + "," + fmt(e.angle) + "," + fmt(e.level));
  }
  return p;
}

Phantom disk_phantom(Shape shape, std::span<const Disk> disks, double pixel_pitch) {
  Image img(shape, 0.0, pixel_pitch);
  const auto geom = ProjectionGeometry{shape.nx, shape.ny, pixel_pitch, 1, pixel_pitch};
  for (std::size_t iz = 0; iz < shape.ny; ++iz) {
    const double z = geom.pixel_z(iz);
    for (std::size_t ix = 0; ix < shape.nx; ++ix) {
      const double x = geom.pixel_x(ix);
      double v = 0.0;
      for (const auto& d : disks) {
        if ((x - d.cx) * (x - d.cx) + (z - d.cz) * (z - d.cz) <= d.radius * d.radius) v += d.mu;
      }
      img.at(ix, iz) = v;
    }
  }
  Phantom p{std::move(img), {}};
  p.manifest.emplace_back("kind", "disks");
  p.manifest.emplace_back("width", std::to_string(shape.nx));
  p.manifest.emplace_back("height", std::to_string(shape.ny));
  p.manifest.emplace_back("pixel_pitch_nm", fmt(pixel_pitch));
  for (std::size_t i = 0; i < disks.size(); ++i) {
    const auto& d = disks[i];
    p.manifest.emplace_back("disk" + std::to_string(i), fmt(d.cx) + "," + fmt(d.cz) + "," +
                                                            fmt(d.radius) + "," + fmt(d.mu));
  }
  return p;
}

std::vector<Disk> default_disk_layout(std::size_t nx, std::size_t nz, double pixel_pitch) {
  // (cx, cz, r) as fractions of the half-extent.
  static constexpr double layout[][3] = {
      {-0.45, -0.40, 0.14}, {0.05, -0.50, 0.10}, {0.50, -0.35, 0.16}, {-0.55, 0.15, 0.10},
      {-0.10, 0.05, 0.20},  {0.45, 0.25, 0.12},  {-0.30, 0.55, 0.13}, {0.25, 0.60, 0.09},
  };
  const double half = 0.5 * static_cast<double>(std::min(nx, nz)) * pixel_pitch;
  std::vector<Disk> out;
  for (const auto& l : layout) out.push_back({l[0] * half, l[1] * half, l[2] * half, kAluminumAttenuation});
  return out;
}

SimulatedTilts simulate_tilt_series(const Image& phantom, const SystemMatrix& a,
                                    const TiltSimulation& sim) {
  if (!(sim.dose > 0.0)) throw std::invalid_argument("dose must be positive");
  if (!(sim.outlier_fraction >= 0.0 && sim.outlier_fraction <= 1.0)) {
    throw std::invalid_argument("outlier fraction must lie in [0, 1]");
  }
  const auto& geom = a.geometry();
  SimulatedTilts out;
  TiltSeries& ts = out.series;
  ts.angles_deg = a.angles();
  ts.bins = geom.bins;
  ts.bin_spacing = geom.bin_spacing;
  ts.blank_offsets.assign(ts.tilts(), -std::log(sim.dose));

  const auto line = a.project(phantom);
  const std::size_t n = line.size();
  std::mt19937_64 rng(sim.seed);
  std::vector<double> counts(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t m = 0; m < n; ++m) {
    const double lambda = sim.dose * std::exp(-line[m]);
    counts[m] = sim.noise ? lambda + std::sqrt(lambda) * gauss(rng) : lambda;
  }

  const auto n_out = static_cast<std::size_t>(std::llround(sim.outlier_fraction * static_cast<double>(n)));
  if (n_out > 0) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::uniform_real_distribution<double> factor(0.1, 0.5);
    for (std::size_t i = 0; i < n_out; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
      counts[idx[i]] *= factor(rng);
    }
    idx.resize(n_out);
    std::sort(idx.begin(), idx.end());
    ts.outliers = std::move(idx);
  }

  ts.y.resize(n);
  ts.weights.resize(n);
  for (std::size_t m = 0; m < n; ++m) {
    if (counts[m] < 1.0) {
      counts[m] = 1.0;
      ++out.clamped;
    }
    ts.y[m] = -std::log(counts[m]);
    ts.weights[m] = counts[m];
  }
  ts.counts = std::move(counts);
  return out;
}

}  // namespace pnp
