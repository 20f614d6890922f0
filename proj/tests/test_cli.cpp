#include "speckle/cli.hpp"
#include "speckle/textio.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace speckle;
using speckle::cli::CliError;
using speckle::cli::parse_args;

namespace {

const std::string kBin = SPECKLE_FORGE_BIN;

testing::CommandResult forge(const std::string &args, const std::filesystem::path &cwd) {
  return testing::run_command("cd '" + cwd.string() + "' && '" + kBin + "' " + args + " 2>stderr.txt");
}

// One synthetic fixture per test binary run, shared by the end-to-end cases.
const testing::TempDir &fixtures() {
  static testing::TempDir dir("cli");
  static bool made = false;
  if (!made) {
    const auto r = forge("synth --width 128 --height 96 --disks 25 --magnitude 3 --seed 9 --ang --out-dir fx", dir.path());
    REQUIRE(r.exit_code == 0);
    made = true;
  }
  return dir;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("parse: score") {
  const auto inv = parse_args({"score", "a.pgm", "b.pgm"});
  CHECK(inv.subcommand == "score");
  CHECK(inv.score_a == "a.pgm");
  CHECK(inv.score_b == "b.pgm");
  CHECK(inv.threads == -1);
}

TEST_CASE("parse: optimize reference parameters") {
  const auto inv = parse_args({"optimize", "--mesh", "25x25", "--sigma0", "20", "--degree", "3"});
  CHECK(inv.run.settings.mesh_rows == 25);
  CHECK(inv.run.settings.mesh_cols == 25);
  CHECK(inv.run.settings.sigma0 == 20.0);
  CHECK(inv.run.settings.degree == 3);
  const auto defaults = parse_args({"optimize"});
  CHECK(defaults.run.settings.mesh_rows == 25);
  CHECK(defaults.run.settings.sigma0 == 20.0);
  CHECK(defaults.run.settings.degree == 3);
  CHECK(defaults.run.settings.budget == 5000);
}

TEST_CASE("parse: ranges, mesh and thresholds") {
  const auto inv = parse_args({"align", "--tx", "-15:15:1", "--ty=-3:3", "--rot", "-1:1:0.5", "--bse-threshold", "0:90",
                               "--bse-invert", "--ebsd-rule", "ci<0.1"});
  CHECK(inv.run.settings.ranges.tx.values().size() == 31);
  CHECK(inv.run.settings.ranges.ty.values().size() == 7);
  CHECK(inv.run.settings.ranges.theta.values().size() == 5);
  CHECK(inv.run.bse_high == 90);
  CHECK(inv.run.bse_invert);
  CHECK(inv.run.ebsd_rule.kind == SpeckleRule::Kind::CiBelow);
  CHECK(parse_args({"optimize", "--mesh", "4x7"}).run.settings.mesh_cols == 7);
}

TEST_CASE("parse: validation errors exit with code 1") {
  const std::vector<std::vector<std::string>> bad{
      {"optimize", "--degree", "0"},   {"optimize", "--mesh", "25"},     {"optimize", "--sigma0", "abc"},
      {"optimize", "--bogus", "1"},    {"frobnicate"},                   {},
      {"score", "a.pgm"},              {"align", "--tx", "5:1"},         {"repeat", "--runs", "1"},
      {"synth", "--family", "twist"},  {"optimize", "--resume", "t.csv"}, {"apply", "--map", "m.ang"},
      {"optimize", "--threads", "-3"}, {"optimize", "--budget", "0"}};
  for (const auto &args : bad) {
    CAPTURE(args.size());
    try {
      parse_args(args);
      FAIL("expected a parse error");
    } catch (const CliError &e) {
      CHECK(e.code == 1);
    }
  }
}

TEST_CASE("parse: last flag wins and config is overridden by flags") {
  CHECK(parse_args({"optimize", "--seed", "1", "--seed", "7"}).run.settings.seed == 7);
  testing::TempDir dir("cli");
  std::ofstream(dir / "run.cfg") << "# lab notebook\nseed = 4\nbudget = 900\nmesh = 10x10\ndiagonal = true\n";
  const auto cfg = (dir / "run.cfg").string();
  const auto a = parse_args({"optimize", "--config", cfg});
  CHECK(a.run.settings.seed == 4);
  CHECK(a.run.settings.budget == 900);
  CHECK(a.run.settings.mesh_rows == 10);
  CHECK(a.run.settings.diagonal);
  const auto b = parse_args({"optimize", "--seed", "8", "--config", cfg});
  CHECK(b.run.settings.seed == 8);
  CHECK(b.run.settings.budget == 900);
  CHECK(b.resolved_config.find("seed=8") != std::string::npos);

  std::ofstream(dir / "bad.cfg") << "not_a_flag = 3\n";
  CHECK_THROWS_AS(parse_args({"optimize", "--config", (dir / "bad.cfg").string()}), CliError);
  CHECK_THROWS_AS(parse_args({"optimize", "--config", (dir / "none.cfg").string()}), CliError);
}

TEST_CASE("parse: help documents the defaults") {
  const auto inv = parse_args({"optimize", "--help"});
  CHECK(inv.help);
  CHECK(inv.help_text.find("25x25") != std::string::npos);
  CHECK(inv.help_text.find("--sigma0") != std::string::npos);
}

TEST_CASE("threads come from the flag, then the environment") {
  auto inv = parse_args({"score", "a", "b", "--threads", "2"});
  CHECK(cli::resolve_threads(inv) == 2);
  inv = parse_args({"score", "a", "b"});
  setenv("SPECKLE_FORGE_THREADS", "3", 1);
  CHECK(cli::resolve_threads(inv) == 3);
  setenv("SPECKLE_FORGE_THREADS", "junk", 1);
  CHECK(cli::resolve_threads(inv) == 0);
  unsetenv("SPECKLE_FORGE_THREADS");
  CHECK(cli::resolve_threads(inv) == 0);
}

TEST_CASE("e2e: synth writes three files") {
  testing::TempDir dir("cli");
  const auto r = forge("synth --width 64 --height 64 --disks 8 --seed 1 --out-dir s", dir.path());
  CHECK(r.exit_code == 0);
  for (const char *f : {"clean.pgm", "distorted.pgm", "truth.txt"})
    CHECK(std::filesystem::exists(dir / "s" / f));
  CHECK(r.out.find("truth=") != std::string::npos);
  CHECK(read_file(dir / "stderr.txt").find("resolved config") != std::string::npos);
}

TEST_CASE("e2e: score prints a six-decimal dice") {
  const auto &dir = fixtures();
  auto r = forge("score fx/clean.pgm fx/clean.pgm", dir.path());
  CHECK(r.exit_code == 0);
  CHECK(r.out == "1.000000\n");
  r = forge("score fx/clean.pgm fx/distorted.pgm", dir.path());
  CHECK(r.exit_code == 0);
  CHECK(r.out.size() == 9);
  r = forge("score fx/clean.pgm fx/nothing.pgm", dir.path());
  CHECK(r.exit_code == 1);
}

TEST_CASE("e2e: align writes parameters") {
  const auto &dir = fixtures();
  const auto r = forge("align --ebsd-map fx/distorted.ang --bse-mask fx/clean.pgm --tx=-3:3 --ty=-3:3 --out al.txt "
                       "--aligned al.pgm",
                       dir.path());
  REQUIRE(r.exit_code == 0);
  const auto kv = parse_key_values(r.out);
  CHECK(kv.count("tx"));
  CHECK(kv.count("score"));
  CHECK(read_file(dir / "al.txt") == r.out);
  CHECK(std::filesystem::exists(dir / "al.pgm"));
}

TEST_CASE("e2e: optimize, then apply the saved warp") {
  const auto &dir = fixtures();
  std::ofstream(dir / "opt.cfg") << "ebsd-map = fx/distorted.ang\nbse-mask = fx/clean.pgm\nmesh = 4x4\n"
                                     "sigma0 = 2\nbudget = 200\ntx = -3:3\nty = -3:3\n";
  auto r = forge("optimize --config opt.cfg --out-dir o1 --threads 1", dir.path());
  REQUIRE(r.exit_code == 0);
  const auto kv = parse_key_values(r.out);
  CHECK(kv.at("evaluations") == "210");
  CHECK(kv.count("wall_seconds"));
  r = forge("optimize --config opt.cfg --out-dir o2 --threads 2", dir.path());
  REQUIRE(r.exit_code == 0);
  CHECK(read_file(dir / "o1/warp.txt") == read_file(dir / "o2/warp.txt"));
  CHECK(read_file(dir / "o1/corrected.ang") == read_file(dir / "o2/corrected.ang"));

  r = forge("apply --map fx/distorted.ang --warp o1/warp.txt --phases o1/aligned_bse.pgm --out applied.ang", dir.path());
  REQUIRE(r.exit_code == 0);
  // Same records as optimize's own output; only the provenance comment differs.
  const auto a = read_ebsd(dir / "applied.ang"), b = read_ebsd(dir / "o1/corrected.ang");
  CHECK(a.records == b.records);

  r = forge("apply --map fx/distorted.ang --warp missing.txt --phases o1/aligned_bse.pgm --out x.ang", dir.path());
  CHECK(r.exit_code == 1);
  std::ofstream(dir / "garbage.txt") << "degree two\n";
  r = forge("apply --map fx/distorted.ang --warp garbage.txt --phases o1/aligned_bse.pgm --out x.ang", dir.path());
  CHECK(r.exit_code == 2);
}

TEST_CASE("e2e: repeat writes stats and heatmap") {
  const auto &dir = fixtures();
  const auto r = forge("repeat --ebsd-mask fx/distorted.pgm --bse-mask fx/clean.pgm --mesh 3x3 --degree 1 "
                       "--sigma0 1 --budget 60 --runs 2 --tx=-2:2 --ty=-2:2 --out-dir rep",
                       dir.path());
  REQUIRE(r.exit_code == 0);
  const auto kv = parse_key_values(r.out);
  CHECK(kv.at("runs") == "2");
  CHECK(std::filesystem::exists(dir / "rep/heatmap.pgm"));
  const auto stats = read_file(dir / "rep/stats.csv");
  CHECK(std::count(stats.begin(), stats.end(), '\n') == 3);
}

TEST_CASE("e2e: failures map to exit codes") {
  const auto &dir = fixtures();
  CHECK(forge("optimize --ebsd-map fx/none.ang --bse-mask fx/clean.pgm", dir.path()).exit_code == 1);
  CHECK(forge("optimize --resume trace.csv", dir.path()).exit_code == 1);
  CHECK(forge("optimize --degree 0", dir.path()).exit_code == 1);
  CHECK(forge("nonsense", dir.path()).exit_code == 1);
  std::ofstream(dir / "broken.ang") << "# GRID: HexGrid\n";
  CHECK(forge("optimize --ebsd-map broken.ang --bse-mask fx/clean.pgm --out-dir z", dir.path()).exit_code == 2);
  CHECK(forge("--help", dir.path()).exit_code == 0);
  CHECK(forge("optimize --help", dir.path()).out.find("--mesh") != std::string::npos);
}

} // TEST_SUITE
