#include "speckle/polywarp.hpp"
#include "speckle/reference.hpp"
#include "speckle/similarity.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace speckle;

namespace {

// Coefficients that keep |displacement| at a few pixels on a ~100 px raster.
PolyWarp random_warp(int degree, std::mt19937_64 &rng, double scale = 3.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int m = monomial_count(degree);
  std::vector<double> cx(m), cy(m);
  for (int n = 0; n <= degree; ++n)
    for (int k = 0; k <= n; ++k) {
      const double s = scale / std::pow(100.0, n);
      cx[monomial_index(k, n - k)] = s * u(rng);
      cy[monomial_index(k, n - k)] = s * u(rng);
    }
  cx[monomial_index(1, 0)] += 1.0;
  cy[monomial_index(0, 1)] += 1.0;
  return PolyWarp(degree, cx, cy);
}

// Direct evaluation of sum c_kl x^k y^l, independent of the Horner form.
Point naive_eval(const PolyWarp &w, double x, double y) {
  Point p;
  for (int n = 0; n <= w.degree(); ++n)
    for (int k = 0; k <= n; ++k) {
      const double m = std::pow(x, k) * std::pow(y, n - k);
      p.x += w.cx()[monomial_index(k, n - k)] * m;
      p.y += w.cy()[monomial_index(k, n - k)] * m;
    }
  return p;
}

} // namespace

TEST_SUITE("polywarp") {

TEST_CASE("monomial ordering") {
  CHECK(monomial_count(1) == 3);
  CHECK(monomial_count(3) == 10);
  CHECK(monomial_index(0, 0) == 0);
  CHECK(monomial_index(0, 1) == 1); // y
  CHECK(monomial_index(1, 0) == 2); // x
  CHECK(monomial_index(0, 2) == 3);
  CHECK(monomial_index(1, 1) == 4);
  CHECK(monomial_index(2, 0) == 5);
  CHECK(monomial_index(3, 0) == 9);
}

TEST_CASE("identity and translation") {
  const auto id = PolyWarp::identity(3);
  CHECK(id.eval(12.5, -4.0) == Point{12.5, -4.0});
  const auto t = PolyWarp::translation(2, 1.5, -2.0);
  CHECK(t.eval(10, 20) == Point{11.5, 18.0});
}

TEST_CASE("construction validates its input") {
  CHECK_THROWS_AS(PolyWarp(0, {0}, {0}), std::invalid_argument);
  CHECK_THROWS_AS(PolyWarp(1, {0, 0}, {0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(PolyWarp(1, {0, 0, NAN}, {0, 0, 0}), std::invalid_argument);
}

TEST_CASE("eval agrees with direct monomial summation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int d = 1; d <= 6; ++d) {
    const auto w = random_warp(d, rng);
    for (int i = 0; i < 50; ++i) {
      const double x = u(rng), y = u(rng);
      const Point a = w.eval(x, y), b = naive_eval(w, x, y);
      REQUIRE(a.x == doctest::Approx(b.x).epsilon(1e-12));
      REQUIRE(a.y == doctest::Approx(b.y).epsilon(1e-12));
    }
  }
}

TEST_CASE("fit recovers the generating polynomial") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 99.0);
  for (int d = 1; d <= 5; ++d) {
    const auto mesh = regular_mesh(8, 8, 100, 100);
    for (int trial = 0; trial < 10; ++trial) {
      const auto truth = random_warp(d, rng);
      std::vector<Point> target;
      for (const auto &p : mesh.points())
        target.push_back(truth.eval(p.x, p.y));
      const auto fitted = PolyFitter(mesh, d).fit(target);
      for (int i = 0; i < 50; ++i) {
        const double x = u(rng), y = u(rng);
        const Point a = fitted.eval(x, y), b = truth.eval(x, y);
        REQUIRE(std::hypot(a.x - b.x, a.y - b.y) < 1e-6);
      }
    }
  }
}

TEST_CASE("identity fit has negligible residual") {
  const auto mesh = regular_mesh(25, 25, 1500, 2000);
  for (int d = 1; d <= 4; ++d) {
    const auto w = fit(mesh, mesh, d);
    CHECK(fit_residual(w, mesh.points(), mesh.points()) < 1e-9);
  }
}

TEST_CASE("fit is the least-squares minimizer") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 2.0);
  const auto mesh = regular_mesh(6, 7, 120, 90);
  std::vector<Point> target;
  for (const auto &p : mesh.points())
    target.push_back({p.x + noise(rng), p.y + noise(rng)});
  const auto w = PolyFitter(mesh, 2).fit(target);
  const double best = fit_residual(w, mesh.points(), target);
  // Any coefficient perturbation increases the residual.
  std::normal_distribution<double> tiny(0.0, 1e-4);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> cx(w.cx().begin(), w.cx().end()), cy(w.cy().begin(), w.cy().end());
    for (auto &c : cx)
      c += tiny(rng) / 100.0;
    for (auto &c : cy)
      c += tiny(rng) / 100.0;
    CHECK(fit_residual(PolyWarp(2, cx, cy), mesh.points(), target) >= best);
  }
  // Normal equations solved independently agree.
  const int m = monomial_count(2);
  Eigen::MatrixXd A(mesh.size(), m);
  Eigen::VectorXd bx(mesh.size()), by(mesh.size());
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    const auto p = mesh.points()[i];
    for (int n = 0; n <= 2; ++n)
      for (int k = 0; k <= n; ++k)
        A(i, monomial_index(k, n - k)) = std::pow(p.x, k) * std::pow(p.y, n - k);
    bx(i) = target[i].x;
    by(i) = target[i].y;
  }
  const Eigen::VectorXd sx = (A.transpose() * A).ldlt().solve(A.transpose() * bx);
  const Eigen::VectorXd sy = (A.transpose() * A).ldlt().solve(A.transpose() * by);
  for (int i = 0; i < m; ++i) {
    CHECK(w.cx()[i] == doctest::Approx(sx(i)).epsilon(1e-6).scale(1e-6));
    CHECK(w.cy()[i] == doctest::Approx(sy(i)).epsilon(1e-6).scale(1e-6));
  }
}

TEST_CASE("fit rejects underdetermined and degenerate systems") {
  const std::vector<Point> two{{0, 0}, {1, 1}};
  CHECK_THROWS_WITH_AS(PolyFitter(two, 1), doctest::Contains("underdetermined"), std::invalid_argument);
  std::vector<Point> line;
  for (int i = 0; i < 10; ++i)
    line.push_back({static_cast<double>(i), 2.0 * i});
  CHECK_THROWS_WITH_AS(PolyFitter(line, 1), doctest::Contains("rank-deficient"), std::invalid_argument);
  // Degree 3 on a 3x3 grid: 9 points, 10 unknowns.
  CHECK_THROWS_AS(PolyFitter(regular_mesh(3, 3, 10, 10), 3), std::invalid_argument);
  const PolyFitter ok(regular_mesh(3, 3, 10, 10), 1);
  CHECK_THROWS_AS(ok.fit(two), std::invalid_argument);
}

TEST_CASE("warp_raster with identity and whole-pixel translation") {
  std::mt19937_64 rng(17);
  const auto r = testing::random_speckle(50, 30, 0.3, rng);
  CHECK(warp_raster(r, PolyWarp::identity(3)) == r);
  const auto shifted = warp_raster(r, PolyWarp::translation(2, 3.0, -2.0));
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 50; ++x)
      REQUIRE(shifted.get(x, y) == (r.in_bounds(x + 3, y - 2) && r.get(x + 3, y - 2)));
}

TEST_CASE("parallel warp kernels match the serial reference exactly") {
  std::mt19937_64 rng(23);
  for (int d = 1; d <= 7; ++d)
    for (int trial = 0; trial < 4; ++trial) {
      const auto a = testing::random_speckle(97, 61, 0.35, rng);
      const auto b = testing::random_speckle(97, 61, 0.35, rng);
      const auto w = random_warp(d, rng, 6.0);
      const auto warped = warp_raster(a, w);
      REQUIRE(warped == reference::warp_raster(a, w));
      REQUIRE(warped_dice(a, w, b) == dice(warped, b));
      REQUIRE(warped_dice(a, w, b) == reference::warped_dice(a, w, b));
    }
  CHECK_THROWS_AS(warp_raster(BinaryRaster(4, 4), PolyWarp::identity(8)), std::invalid_argument);
}

TEST_CASE("warp text round trip is bit exact") {
  std::mt19937_64 rng(31);
  const auto w = random_warp(3, rng);
  const auto text = to_text(w, "note");
  CHECK(text.find("# note") != std::string::npos);
  CHECK(warp_from_text(text) == w);
  testing::TempDir dir("warp");
  write_warp(w, dir / "w.txt");
  CHECK(read_warp(dir / "w.txt") == w);
  CHECK_THROWS_AS(read_warp(dir / "none.txt"), std::invalid_argument);
}

TEST_CASE("malformed warp text") {
  CHECK_THROWS_AS(warp_from_text("degree 1\ncx 0 1 0\n"), std::runtime_error);
  CHECK_THROWS_AS(warp_from_text("degree 1\ncx 0 1 0\ncy 0 0\n"), std::runtime_error);
  CHECK_THROWS_AS(warp_from_text("degree 1\ncx 0 1 zz\ncy 0 0 1\n"), std::runtime_error);
  CHECK_THROWS_AS(warp_from_text("degree 1\nfoo 1\n"), std::runtime_error);
  CHECK(warp_from_text("# x\ndegree 1\ncx 0 0 1\ncy 0 1 0\n") == PolyWarp::identity(1));
}

} // TEST_SUITE
