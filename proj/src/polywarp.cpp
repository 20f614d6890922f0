#include "speckle/polywarp.hpp"

#include "speckle/similarity.hpp"
#include "speckle/textio.hpp"

#include "backward_map.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace speckle {

PolyWarp::PolyWarp(int degree, std::vector<double> cx, std::vector<double> cy)
    : degree_(degree), cx_(std::move(cx)), cy_(std::move(cy)) {
  if (degree < 1)
    throw std::invalid_argument("polywarp: degree must be >= 1");
  const auto m = static_cast<std::size_t>(monomial_count(degree));
  if (cx_.size() != m || cy_.size() != m)
    throw std::invalid_argument("polywarp: coefficient list length must be (P+1)(P+2)/2");
  for (std::size_t i = 0; i < m; ++i)
    if (!std::isfinite(cx_[i]) || !std::isfinite(cy_[i]))
      throw std::invalid_argument("polywarp: non-finite coefficient");
}

PolyWarp PolyWarp::identity(int degree) { return translation(degree, 0.0, 0.0); }

PolyWarp PolyWarp::translation(int degree, double dx, double dy) {
  const auto m = static_cast<std::size_t>(monomial_count(std::max(degree, 1)));
  std::vector<double> cx(m, 0.0), cy(m, 0.0);
  cx[0] = dx;
  cy[0] = dy;
  cx[monomial_index(1, 0)] = 1.0;
  cy[monomial_index(0, 1)] = 1.0;
  return PolyWarp(degree, std::move(cx), std::move(cy));
}

void PolyWarp::row_coefficients(double y, std::span<double> ax, std::span<double> ay) const {
  std::fill(ax.begin(), ax.begin() + degree_ + 1, 0.0);
  std::fill(ay.begin(), ay.begin() + degree_ + 1, 0.0);
  double ypow = 1.0;
  for (int l = 0; l <= degree_; ++l) {
    for (int k = 0; k + l <= degree_; ++k) {
      const int i = monomial_index(k, l);
      ax[k] += cx_[i] * ypow;
      ay[k] += cy_[i] * ypow;
    }
    ypow *= y;
  }
}

Point PolyWarp::eval(double x, double y) const {
  std::array<double, 16> buf{};
  std::vector<double> heap;
  std::span<double> ax, ay;
  if (degree_ + 1 <= 8) {
    ax = std::span<double>(buf.data(), degree_ + 1);
    ay = std::span<double>(buf.data() + 8, degree_ + 1);
  } else {
    heap.assign(2 * (degree_ + 1), 0.0);
    ax = std::span<double>(heap.data(), degree_ + 1);
    ay = std::span<double>(heap.data() + degree_ + 1, degree_ + 1);
  }
  row_coefficients(y, ax, ay);
  double px = ax[degree_], py = ay[degree_];
  for (int k = degree_ - 1; k >= 0; --k) {
    px = px * x + ax[k];
    py = py * x + ay[k];
  }
  return {px, py};
}

namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i)
    r = r * (n - k + i) / i;
  return r;
}

struct Normalization {
  double cx, sx, cy, sy; // u = (x - cx) / sx
};

Normalization normalization_of(std::span<const Point> pts) {
  auto [xmin, xmax] = std::minmax_element(pts.begin(), pts.end(), [](auto &a, auto &b) { return a.x < b.x; });
  auto [ymin, ymax] = std::minmax_element(pts.begin(), pts.end(), [](auto &a, auto &b) { return a.y < b.y; });
  Normalization n{0.5 * (xmin->x + xmax->x), 0.5 * (xmax->x - xmin->x), 0.5 * (ymin->y + ymax->y),
                  0.5 * (ymax->y - ymin->y)};
  if (!(n.sx > 0.0))
    n.sx = 1.0;
  if (!(n.sy > 0.0))
    n.sy = 1.0;
  return n;
}

// Column j holds the raw-basis expansion of normalized monomial j.
Eigen::MatrixXd raw_basis_transform(int degree, const Normalization &nm) {
  const int m = monomial_count(degree);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
  for (int n = 0; n <= degree; ++n)
    for (int k = 0; k <= n; ++k) {
      const int l = n - k;
      const int col = monomial_index(k, l);
      const double scale = 1.0 / (std::pow(nm.sx, k) * std::pow(nm.sy, l));
      for (int i = 0; i <= k; ++i)
        for (int j = 0; j <= l; ++j) {
          const double c = binomial(k, i) * std::pow(-nm.cx, k - i) * binomial(l, j) * std::pow(-nm.cy, l - j);
          t(monomial_index(i, j), col) += c * scale;
        }
    }
  return t;
}

} // namespace

PolyFitter::PolyFitter(std::span<const Point> source, int degree) : degree_(degree), n_points_(source.size()) {
  if (degree < 1)
    throw std::invalid_argument("fit: degree must be >= 1");
  const int m = monomial_count(degree);
  if (source.size() < static_cast<std::size_t>(m))
    throw std::invalid_argument("fit: underdetermined system (need at least " + std::to_string(m) + " points, got " +
                                std::to_string(source.size()) + ")");
  const auto nm = normalization_of(source);
  Eigen::MatrixXd v(static_cast<Eigen::Index>(source.size()), m);
  for (std::size_t r = 0; r < source.size(); ++r) {
    const double u = (source[r].x - nm.cx) / nm.sx;
    const double w = (source[r].y - nm.cy) / nm.sy;
    for (int n = 0; n <= degree; ++n)
      for (int k = 0; k <= n; ++k)
        v(static_cast<Eigen::Index>(r), monomial_index(k, n - k)) = std::pow(u, k) * std::pow(w, n - k);
  }
  qr_.setThreshold(1e-10);
  qr_.compute(v);
  if (qr_.rank() < m)
    throw std::invalid_argument("fit: rank-deficient design matrix (degenerate mesh geometry)");
  to_raw_ = raw_basis_transform(degree, nm);
}

PolyWarp PolyFitter::fit(std::span<const Point> target) const {
  if (target.size() != n_points_)
    throw std::invalid_argument("fit: source and target point counts differ");
  Eigen::MatrixXd b(static_cast<Eigen::Index>(target.size()), 2);
  for (std::size_t r = 0; r < target.size(); ++r) {
    b(static_cast<Eigen::Index>(r), 0) = target[r].x;
    b(static_cast<Eigen::Index>(r), 1) = target[r].y;
  }
  const Eigen::MatrixXd coef = to_raw_ * qr_.solve(b);
  const auto m = static_cast<std::size_t>(coef.rows());
  std::vector<double> cx(m), cy(m);
  for (std::size_t i = 0; i < m; ++i) {
    cx[i] = coef(static_cast<Eigen::Index>(i), 0);
    cy[i] = coef(static_cast<Eigen::Index>(i), 1);
  }
  return PolyWarp(degree_, std::move(cx), std::move(cy));
}

PolyWarp fit(const ControlMesh &source, const ControlMesh &target, int degree) {
  if (source.size() != target.size())
    throw std::invalid_argument("fit: source and target point counts differ");
  return PolyFitter(source, degree).fit(target);
}

double fit_residual(const PolyWarp &warp, std::span<const Point> source, std::span<const Point> target) {
  if (source.size() != target.size())
    throw std::invalid_argument("fit_residual: point counts differ");
  double r = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto p = warp.eval(source[i].x, source[i].y);
    r += (p.x - target[i].x) * (p.x - target[i].x) + (p.y - target[i].y) * (p.y - target[i].y);
  }
  return r;
}

namespace {

constexpr int kMaxKernelDegree = 7;

// Degree is a template parameter so the Horner loops fully unroll for the
// common P <= 4 cases; Degree == 0 means "use warp.degree() at runtime".
template <int Degree>
class PolySampler {
public:
  PolySampler(const BinaryRaster &src, const PolyWarp &warp)
      : src_(src), warp_(warp), degree_(Degree > 0 ? Degree : warp.degree()) {}

  struct Row {
    std::array<double, kMaxKernelDegree + 1> ax;
    std::array<double, kMaxKernelDegree + 1> ay;
  };
  Row row(int y) const {
    Row r{};
    warp_.row_coefficients(y, std::span<double>(r.ax.data(), degree_ + 1), std::span<double>(r.ay.data(), degree_ + 1));
    return r;
  }
  bool sample(const Row &r, int x) const {
    const int d = Degree > 0 ? Degree : degree_;
    const double xd = x;
    double px = r.ax[d], py = r.ay[d];
    for (int k = d - 1; k >= 0; --k) {
      px = px * xd + r.ax[k];
      py = py * xd + r.ay[k];
    }
    return src_.sample(px, py);
  }

private:
  const BinaryRaster &src_;
  const PolyWarp &warp_;
  const int degree_;
};

template <class Sampler>
double sampled_dice(const Sampler &sampler, const BinaryRaster &reference) {
  const int w = reference.width();
  const int h = reference.height();
  std::size_t overlap = 0, count = 0;
#pragma omp parallel for reduction(+ : overlap, count) schedule(static)
  for (int y = 0; y < h; ++y) {
    const auto row = sampler.row(y);
    const auto ref = reference.words();
    const std::size_t base = static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      if (!sampler.sample(row, x))
        continue;
      const std::size_t i = base + x;
      ++count;
      overlap += (ref[i >> 6] >> (i & 63)) & 1u;
    }
  }
  return dice_from_counts(overlap, count, reference.count());
}

template <class Fn>
auto dispatch_degree(const BinaryRaster &src, const PolyWarp &warp, Fn &&fn) {
  if (warp.degree() > kMaxKernelDegree)
    throw std::invalid_argument("polywarp: degree above " + std::to_string(kMaxKernelDegree) + " is not supported");
  switch (warp.degree()) {
  case 1: return fn(PolySampler<1>(src, warp));
  case 2: return fn(PolySampler<2>(src, warp));
  case 3: return fn(PolySampler<3>(src, warp));
  case 4: return fn(PolySampler<4>(src, warp));
  default: return fn(PolySampler<0>(src, warp));
  }
}

} // namespace

BinaryRaster warp_raster(const BinaryRaster &speckle, const PolyWarp &warp) {
  return dispatch_degree(speckle, warp, [&](const auto &sampler) {
    return detail::backward_map(speckle.width(), speckle.height(), speckle.pixel_size(), sampler);
  });
}

double warped_dice(const BinaryRaster &moving, const PolyWarp &warp, const BinaryRaster &reference) {
  if (moving.width() != reference.width() || moving.height() != reference.height())
    throw std::invalid_argument("dice: dimension mismatch");
  if (moving.count() == 0 && reference.count() == 0)
    throw std::invalid_argument("dice: both speckles are empty");
  return dispatch_degree(moving, warp, [&](const auto &sampler) { return sampled_dice(sampler, reference); });
}

std::string to_text(const PolyWarp &warp, std::string_view comment) {
  std::string out = "# polywarp\n";
  if (!comment.empty())
    out += "# " + std::string(comment) + "\n";
  out += "degree " + std::to_string(warp.degree()) + "\n";
  char buf[40];
  for (const auto &[name, coefs] : {std::pair{"cx", warp.cx()}, std::pair{"cy", warp.cy()}}) {
    out += name;
    for (double c : coefs) {
      std::snprintf(buf, sizeof(buf), " %.17g", c);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

PolyWarp warp_from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int degree = -1;
  std::vector<double> cx, cy;
  bool have_cx = false, have_cy = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key.front() == '#')
      continue;
    if (key == "degree") {
      if (!(ls >> degree))
        throw std::runtime_error("warp file: bad degree line");
    } else if (key == "cx" || key == "cy") {
      auto &dst = key == "cx" ? cx : cy;
      (key == "cx" ? have_cx : have_cy) = true;
      double v;
      while (ls >> v)
        dst.push_back(v);
      if (!ls.eof())
        throw std::runtime_error("warp file: bad coefficient in " + key);
    } else {
      throw std::runtime_error("warp file: unknown key '" + key + "'");
    }
  }
  if (degree < 1 || !have_cx || !have_cy)
    throw std::runtime_error("warp file: missing degree or coefficients");
  try {
    return PolyWarp(degree, std::move(cx), std::move(cy));
  } catch (const std::invalid_argument &e) {
    throw std::runtime_error(std::string("warp file: ") + e.what());
  }
}

void write_warp(const PolyWarp &warp, const std::filesystem::path &path, std::string_view comment) {
  write_file_atomic(path, to_text(warp, comment));
}

PolyWarp read_warp(const std::filesystem::path &path) {
  if (!std::filesystem::is_regular_file(path))
    throw std::invalid_argument("no such file: " + path.string());
  return warp_from_text(read_file(path));
}

} // namespace speckle
