#include "speckle/synth.hpp"

#include "speckle/textio.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace speckle {

DistortionFamily parse_family(const std::string &name) {
  if (name == "none")
    return DistortionFamily::None;
  if (name == "affine")
    return DistortionFamily::Affine;
  if (name == "barrel")
    return DistortionFamily::Barrel;
  if (name == "poly" || name == "polynomial")
    return DistortionFamily::Polynomial;
  throw std::invalid_argument("unknown distortion family '" + name + "' (none|affine|barrel|poly)");
}

std::string to_string(DistortionFamily family) {
  switch (family) {
  case DistortionFamily::None: return "none";
  case DistortionFamily::Affine: return "affine";
  case DistortionFamily::Barrel: return "barrel";
  case DistortionFamily::Polynomial: return "poly";
  }
  return "?";
}

namespace {

struct Jacobian {
  double xx, xy, yx, yy;
};

Jacobian warp_jacobian(const PolyWarp &w, double x, double y) {
  Jacobian j{0, 0, 0, 0};
  for (int n = 1; n <= w.degree(); ++n)
    for (int k = 0; k <= n; ++k) {
      const int l = n - k;
      const int i = monomial_index(k, l);
      const double dx = k > 0 ? k * std::pow(x, k - 1) * std::pow(y, l) : 0.0;
      const double dy = l > 0 ? l * std::pow(x, k) * std::pow(y, l - 1) : 0.0;
      j.xx += w.cx()[i] * dx;
      j.xy += w.cx()[i] * dy;
      j.yx += w.cy()[i] * dx;
      j.yy += w.cy()[i] * dy;
    }
  return j;
}

// Displacement field in normalized coordinates u, v in [-1, 1].
struct Displacement {
  int degree = 1;
  std::vector<double> ax, ay; // monomial order as PolyWarp

  Point at(double u, double v) const {
    Point d{0, 0};
    for (int n = 0; n <= degree; ++n)
      for (int k = 0; k <= n; ++k) {
        const double m = std::pow(u, k) * std::pow(v, n - k);
        d.x += ax[monomial_index(k, n - k)] * m;
        d.y += ay[monomial_index(k, n - k)] * m;
      }
    return d;
  }
};

Displacement random_displacement(const SynthSpec &spec, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Displacement d;
  switch (spec.family) {
  case DistortionFamily::None: d.degree = 1; break;
  case DistortionFamily::Affine: d.degree = 1; break;
  case DistortionFamily::Barrel: d.degree = 3; break;
  case DistortionFamily::Polynomial:
    if (spec.degree < 1 || spec.degree > 3)
      throw std::invalid_argument("synth: polynomial degree must be 1..3");
    d.degree = spec.degree;
    break;
  }
  const auto m = static_cast<std::size_t>(monomial_count(d.degree));
  d.ax.assign(m, 0.0);
  d.ay.assign(m, 0.0);
  if (spec.family == DistortionFamily::None || spec.magnitude == 0.0)
    return d;
  if (spec.family == DistortionFamily::Barrel) {
    // (u, v) * (u^2 + v^2)
    d.ax[monomial_index(3, 0)] = 1.0;
    d.ax[monomial_index(1, 2)] = 1.0;
    d.ay[monomial_index(2, 1)] = 1.0;
    d.ay[monomial_index(0, 3)] = 1.0;
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      d.ax[i] = uni(rng);
      d.ay[i] = uni(rng);
    }
  }
  // Scale so the largest displacement along the boundary equals magnitude.
  double peak = 0.0;
  const int samples = 4 * std::max(spec.width, spec.height);
  for (int i = 0; i <= samples; ++i) {
    const double t = -1.0 + 2.0 * i / samples;
    for (const Point &b : {Point{t, -1.0}, Point{t, 1.0}, Point{-1.0, t}, Point{1.0, t}}) {
      const Point p = d.at(b.x, b.y);
      peak = std::max(peak, std::hypot(p.x, p.y));
    }
  }
  if (peak > 0.0)
    for (std::size_t i = 0; i < m; ++i) {
      d.ax[i] *= spec.magnitude / peak;
      d.ay[i] *= spec.magnitude / peak;
    }
  return d;
}

// Expresses identity + displacement as a PolyWarp in pixel coordinates by an
// exact fit on a dense grid.
PolyWarp to_pixel_warp(const Displacement &d, int width, int height) {
  if (std::all_of(d.ax.begin(), d.ax.end(), [](double c) { return c == 0.0; }) &&
      std::all_of(d.ay.begin(), d.ay.end(), [](double c) { return c == 0.0; }))
    return PolyWarp::identity(d.degree);
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  const int k = 4 * (d.degree + 1);
  std::vector<Point> src, dst;
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < k; ++i) {
      const double x = (width - 1) * static_cast<double>(i) / (k - 1);
      const double y = (height - 1) * static_cast<double>(j) / (k - 1);
      const Point disp = d.at((x - cx) / cx, (y - cy) / cy);
      src.push_back({x, y});
      dst.push_back({x + disp.x, y + disp.y});
    }
  return PolyFitter(src, d.degree).fit(dst);
}

class DiskIndex {
public:
  DiskIndex(const std::vector<Disk> &disks, int width, int height, double cell)
      : disks_(disks), cell_(cell), nx_(static_cast<int>(width / cell) + 1), ny_(static_cast<int>(height / cell) + 1),
        buckets_(static_cast<std::size_t>(nx_) * ny_) {
    for (std::size_t i = 0; i < disks.size(); ++i) {
      const auto &d = disks[i];
      for (int by = bucket(d.y - d.r, ny_); by <= bucket(d.y + d.r, ny_); ++by)
        for (int bx = bucket(d.x - d.r, nx_); bx <= bucket(d.x + d.r, nx_); ++bx)
          buckets_[static_cast<std::size_t>(by) * nx_ + bx].push_back(i);
    }
  }

  bool contains(double x, double y) const {
    if (!std::isfinite(x) || !std::isfinite(y))
      return false;
    // Disks may poke past the raster edge; clamping sends outside points to
    // the edge buckets, which hold those disks.
    const int bx = bucket(x, nx_), by = bucket(y, ny_);
    for (auto i : buckets_[static_cast<std::size_t>(by) * nx_ + bx]) {
      const auto &d = disks_[i];
      if ((x - d.x) * (x - d.x) + (y - d.y) * (y - d.y) <= d.r * d.r)
        return true;
    }
    return false;
  }

private:
  int bucket(double v, int n) const { return std::clamp(static_cast<int>(std::floor(v / cell_)), 0, n - 1); }

  const std::vector<Disk> &disks_;
  double cell_;
  int nx_, ny_;
  std::vector<std::vector<std::size_t>> buckets_;
};

std::vector<Disk> place_disks(const SynthSpec &spec, std::mt19937_64 &rng) {
  if (spec.disks < 0 || !(spec.radius_min > 0.0) || spec.radius_max < spec.radius_min)
    throw std::invalid_argument("synth: invalid disk count or radius range");
  std::uniform_real_distribution<double> ur(spec.radius_min, spec.radius_max);
  std::uniform_real_distribution<double> ux(0.0, spec.width - 1.0);
  std::uniform_real_distribution<double> uy(0.0, spec.height - 1.0);
  std::vector<Disk> disks;
  const long long max_attempts = 2000LL * std::max(spec.disks, 1);
  long long attempts = 0;
  while (static_cast<int>(disks.size()) < spec.disks) {
    if (++attempts > max_attempts)
      throw std::runtime_error("synth: cannot place " + std::to_string(spec.disks) +
                               " disks (too dense); placed " + std::to_string(disks.size()));
    const Disk d{ux(rng), uy(rng), ur(rng)};
    bool ok = true;
    for (const auto &o : disks)
      if (std::hypot(d.x - o.x, d.y - o.y) < d.r + o.r + spec.gap) {
        ok = false;
        break;
      }
    if (ok)
      disks.push_back(d);
  }
  return disks;
}

} // namespace

Point SynthResult::truth_map(double x, double y) const {
  Point p = truth.eval(x, y);
  if (spec.drift != 0.0)
    p.x += spec.drift * std::exp(-y / (spec.drift_decay * spec.height));
  return p;
}

std::string SynthResult::truth_text() const {
  std::string comment = "synthetic ground truth; family=" + to_string(spec.family) +
                        " drift_px=" + format_double(spec.drift) + " drift_decay=" + format_double(spec.drift_decay);
  return to_text(truth, comment);
}

SynthResult synth(const SynthSpec &spec) {
  if (spec.width < 2 || spec.height < 2)
    throw std::invalid_argument("synth: raster must be at least 2x2");
  if (!(spec.drift_decay > 0.0))
    throw std::invalid_argument("synth: drift_decay must be positive");
  std::mt19937_64 rng(spec.seed);
  SynthResult out;
  out.spec = spec;
  out.disks = place_disks(spec, rng);
  const Displacement disp = random_displacement(spec, rng);
  out.truth = to_pixel_warp(disp, spec.width, spec.height);

  const int w = spec.width, h = spec.height;
  const DiskIndex index(out.disks, w, h, 16.0);
  std::vector<char> clean(static_cast<std::size_t>(w) * h), distorted(clean.size());
  const double drift_len = spec.drift_decay * h;

#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      clean[i] = index.contains(x, y);
      // Invert T by Newton iteration, starting from the first-order guess.
      const Point t0 = out.truth_map(x, y);
      double px = 2.0 * x - t0.x, py = 2.0 * y - t0.y;
      bool converged = false;
      for (int it = 0; it < 30; ++it) {
        const Point t = out.truth_map(px, py);
        const double rx = t.x - x, ry = t.y - y;
        if (std::abs(rx) < 1e-9 && std::abs(ry) < 1e-9) {
          converged = true;
          break;
        }
        Jacobian j = warp_jacobian(out.truth, px, py);
        if (spec.drift != 0.0)
          j.xy += -spec.drift / drift_len * std::exp(-py / drift_len);
        const double det = j.xx * j.yy - j.xy * j.yx;
        if (!(std::abs(det) > 1e-12))
          break;
        px -= (j.yy * rx - j.xy * ry) / det;
        py -= (-j.yx * rx + j.xx * ry) / det;
      }
      distorted[i] = converged && index.contains(px, py);
    }
  }

  auto to_raster = [&](const std::vector<char> &bits) {
    BinaryRaster r(w, h, spec.pixel_size);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (bits[static_cast<std::size_t>(y) * w + x])
          r.set(x, y, true);
    return r;
  };
  out.clean = to_raster(clean);
  out.distorted = to_raster(distorted);
  return out;
}

} // namespace speckle
