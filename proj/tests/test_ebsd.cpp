#include "speckle/ebsd.hpp"
#include "speckle/reference.hpp"
#include "speckle/textio.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace speckle;

namespace {

const char *kSmall = "# TEM_PIXperUM          1.000000\n"
                     "# GRID: SqrGrid\n"
                     "# XSTEP: 0.5\n"
                     "# YSTEP: 0.5\n"
                     "# NCOLS_ODD: 3\n"
                     "# NCOLS_EVEN: 3\n"
                     "# NROWS: 2\n"
                     "1.0 0.5 2.0 0.0 0.0 100.0 0.9 1 0 1.2\n"
                     "1.1 0.5 2.0 0.5 0.0 40.0 0.02 2 0 1.2\n"
                     "1.2 0.5 2.0 1.0 0.0 110.0 0.8 1 0 1.2\n"
                     "1.3 0.5 2.0 0.0 0.5 120.0 0.7 1 0 1.2\n"
                     "1.4 0.5 2.0 0.5 0.5 50.0 0.01 2 0 1.2\n"
                     "1.5 0.5 2.0 1.0 0.5 130.0 0.6 1 0 1.2\n";

PolyWarp random_warp(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> cx(6), cy(6);
  for (int i = 0; i < 6; ++i) {
    cx[i] = u(rng) * (i == 0 ? 4.0 : i < 3 ? 0.05 : 0.0005);
    cy[i] = u(rng) * (i == 0 ? 4.0 : i < 3 ? 0.05 : 0.0005);
  }
  cx[monomial_index(1, 0)] += 1.0;
  cy[monomial_index(0, 1)] += 1.0;
  return PolyWarp(2, cx, cy);
}

} // namespace

TEST_SUITE("ebsd") {

TEST_CASE("parse a small square-grid map") {
  const auto m = parse_ebsd(kSmall);
  CHECK(m.cols == 3);
  CHECK(m.rows == 2);
  CHECK(m.step == 0.5);
  CHECK(m.header.size() == 7);
  CHECK(m.at(1, 0).phase == 2);
  CHECK(m.at(1, 0).iq == 40.0);
  CHECK(m.at(2, 1).phi1 == 1.5);
  CHECK(m.at(2, 1).ci == 0.6);
}

TEST_CASE("text round trip keeps records and header") {
  const auto m = parse_ebsd(kSmall);
  const auto text = to_text(m, "provenance line");
  CHECK(text.starts_with("# TEM_PIXperUM"));
  CHECK(text.find("# provenance line\n") != std::string::npos);
  const auto back = parse_ebsd(text);
  CHECK(back.records == m.records);
  CHECK(back.cols == m.cols);
  CHECK(back.step == m.step);

  std::mt19937_64 rng(1);
  const auto syn = synthetic_map(testing::random_speckle(20, 15, 0.3, rng, 0.2), 0.2, 4);
  const auto again = parse_ebsd(to_text(syn));
  REQUIRE(again.records.size() == syn.records.size());
  for (std::size_t i = 0; i < syn.records.size(); ++i) {
    REQUIRE(again.records[i].phase == syn.records[i].phase);
    REQUIRE(again.records[i].phi1 == doctest::Approx(syn.records[i].phi1).epsilon(1e-6));
  }
  CHECK(to_text(again) == to_text(parse_ebsd(to_text(again))));
}

TEST_CASE("malformed maps are rejected") {
  std::string s = kSmall;
  auto replace = [&](const std::string &from, const std::string &to) {
    std::string t = s;
    t.replace(t.find(from), from.size(), to);
    return t;
  };
  CHECK_THROWS_WITH_AS(parse_ebsd(replace("SqrGrid", "HexGrid")), doctest::Contains("HexGrid"), std::runtime_error);
  CHECK_THROWS_AS(parse_ebsd(replace("# NROWS: 2", "# NROWS: 3")), std::runtime_error);
  CHECK_THROWS_AS(parse_ebsd(replace("# GRID: SqrGrid\n", "")), std::runtime_error);
  CHECK_THROWS_AS(parse_ebsd(replace("# YSTEP: 0.5", "# YSTEP: 0.6")), std::runtime_error);
  CHECK_THROWS_AS(parse_ebsd(replace("1.1 0.5 2.0 0.5 0.0", "1.1 0.5 2.0 0.7 0.0")), std::runtime_error);
  CHECK_THROWS_AS(parse_ebsd(replace("40.0 0.02", "4x.0 0.02")), std::runtime_error);
  CHECK_THROWS_AS(parse_ebsd(replace("40.0 0.02 2 0 1.2", "40.0")), std::runtime_error);
  CHECK_THROWS_AS(read_ebsd("/nonexistent/map.ang"), std::invalid_argument);
}

TEST_CASE("speckle rules") {
  const auto m = parse_ebsd(kSmall);
  const auto by_phase = ebsd_speckle(m, SpeckleRule::parse("phase=2"));
  CHECK(by_phase.count() == 2);
  CHECK(by_phase.get(1, 0));
  CHECK(by_phase.pixel_size() == 0.5);
  CHECK(ebsd_speckle(m, SpeckleRule::parse("ci<0.05")) == by_phase);
  CHECK(ebsd_speckle(m, SpeckleRule::parse("iq<60")) == by_phase);
  CHECK_THROWS_AS(ebsd_speckle(m, SpeckleRule::parse("phase=7")), std::invalid_argument);
  CHECK_THROWS_AS(SpeckleRule::parse("bogus"), std::invalid_argument);
  CHECK_THROWS_AS(SpeckleRule::parse("ci<abc"), std::invalid_argument);
  CHECK(SpeckleRule::parse("ci<0.1").to_string() == "ci<0.1");
}

TEST_CASE("regenerate through the identity only rewrites phases") {
  std::mt19937_64 rng(2);
  const auto sp = testing::random_speckle(30, 20, 0.3, rng);
  const auto map = synthetic_map(sp, 1.0, 3);
  const auto phases = testing::random_speckle(30, 20, 0.2, rng);
  const auto out = regenerate(map, PolyWarp::identity(3), phases, {5, 4});
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 30; ++c) {
      auto expect = map.at(c, r);
      expect.phase = phases.get(c, r) ? 5 : 4;
      REQUIRE(out.at(c, r) == expect);
    }
}

TEST_CASE("cells mapped off-grid get the zero record") {
  std::mt19937_64 rng(4);
  const auto map = synthetic_map(testing::random_speckle(10, 8, 0.5, rng), 1.0, 1);
  const auto out = regenerate(map, PolyWarp::translation(1, 3.0, -2.0), BinaryRaster(10, 8));
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 10; ++c) {
      const auto &e = out.at(c, r);
      if (c + 3 >= 10 || r - 2 < 0) {
        CHECK(e.phi1 == 0.0);
        CHECK(e.Phi == 0.0);
        CHECK(e.phi2 == 0.0);
        CHECK(e.ci == 0.0);
        CHECK(e.iq == 0.0);
      } else {
        CHECK(e.phi1 == map.at(c + 3, r - 2).phi1);
      }
      CHECK(e.phase == 1);
    }
}

TEST_CASE("parallel regenerate matches the serial reference and keeps the phase fraction") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto map = synthetic_map(testing::random_speckle(45, 33, 0.3, rng), 0.5, i);
    const auto phases = testing::blob_speckle(45, 33, 6, rng);
    const auto w = random_warp(rng);
    const auto out = regenerate(map, w, phases);
    REQUIRE(out.records == reference::regenerate(map, w, phases).records);
    CHECK(phase_fraction(out, 2) == static_cast<double>(phases.count()) / phases.size());
  }
  CHECK_THROWS_AS(regenerate(synthetic_map(BinaryRaster(4, 4), 1.0, 0), PolyWarp::identity(1), BinaryRaster(5, 4)),
                  std::invalid_argument);
}

TEST_CASE("write_ebsd writes atomically and round trips") {
  testing::TempDir dir("ebsd");
  const auto m = parse_ebsd(kSmall);
  write_ebsd(m, dir / "m.ang", "speckle-forge test");
  CHECK(read_ebsd(dir / "m.ang").records == m.records);
  CHECK_FALSE(std::filesystem::exists(dir / "m.ang.tmp"));
}

} // TEST_SUITE
