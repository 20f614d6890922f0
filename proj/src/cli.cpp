#include "speckle/cli.hpp"

#include "speckle/ebsd.hpp"
#include "speckle/log.hpp"
#include "speckle/similarity.hpp"
#include "speckle/textio.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <iostream>

namespace speckle::cli {

namespace fs = std::filesystem;

namespace {

// "RxC" -> (rows, cols)
std::pair<int, int> parse_mesh(const std::string &s) {
  const auto x = s.find('x');
  int r = 0, c = 0;
  if (x == std::string::npos)
    throw std::invalid_argument("--mesh '" + s + "': expected ROWSxCOLS");
  const auto [p1, e1] = std::from_chars(s.data(), s.data() + x, r);
  const auto [p2, e2] = std::from_chars(s.data() + x + 1, s.data() + s.size(), c);
  if (e1 != std::errc() || e2 != std::errc() || p1 != s.data() + x || p2 != s.data() + s.size())
    throw std::invalid_argument("--mesh '" + s + "': expected ROWSxCOLS");
  return {r, c};
}

// "low:high" -> band
std::pair<int, int> parse_band(const std::string &s) {
  const auto colon = s.find(':');
  int lo = 0, hi = 0;
  if (colon == std::string::npos)
    throw std::invalid_argument("--bse-threshold '" + s + "': expected LOW:HIGH");
  const auto [p1, e1] = std::from_chars(s.data(), s.data() + colon, lo);
  const auto [p2, e2] = std::from_chars(s.data() + colon + 1, s.data() + s.size(), hi);
  if (e1 != std::errc() || e2 != std::errc() || p1 != s.data() + colon || p2 != s.data() + s.size())
    throw std::invalid_argument("--bse-threshold '" + s + "': expected LOW:HIGH");
  return {lo, hi};
}

// Raw option text, converted after CLI11 has run.
struct RawRun {
  std::string ebsd_map, ebsd_mask, ebsd_rule = "phase=2";
  std::string bse, bse_mask, bse_threshold = "128:65535";
  bool bse_invert = false;
  double bse_pixel_size = 0.0;
  std::string tx = "-20:20:1", ty = "-20:20:1", rot = "0";
  std::string mesh = "25x25";
  std::string out_dir = ".";
  std::string resume;
};

void add_inputs(CLI::App *app, RawRun &raw) {
  app->add_option("--ebsd-map", raw.ebsd_map, "EBSD map (TSL-style text, square grid)");
  app->add_option("--ebsd-mask", raw.ebsd_mask, "EBSD speckle as a graymap (instead of --ebsd-map)");
  app->add_option("--ebsd-rule", raw.ebsd_rule, "Cells forming the EBSD speckle: phase=ID, ci<T or iq<T")
      ->capture_default_str();
  app->add_option("--bse", raw.bse, "BSE grayscale image to threshold");
  app->add_option("--bse-mask", raw.bse_mask, "BSE speckle as a graymap (instead of --bse)");
  app->add_option("--bse-threshold", raw.bse_threshold, "Gray band LOW:HIGH segmented as speckle")
      ->capture_default_str();
  app->add_flag("--bse-invert", raw.bse_invert, "Segment pixels outside the band instead");
  app->add_option("--bse-pixel-size", raw.bse_pixel_size, "Override the BSE pixel size in um (0 = from file)")
      ->capture_default_str();
  app->add_option("--tx", raw.tx, "Alignment x shifts a:b:step (EBSD pixels)")->capture_default_str();
  app->add_option("--ty", raw.ty, "Alignment y shifts a:b:step (EBSD pixels)")->capture_default_str();
  app->add_option("--rot", raw.rot, "Alignment rotations a:b:step (degrees)")->capture_default_str();
}

void add_optimizer(CLI::App *app, RawRun &raw, RunConfig &run) {
  auto &s = run.settings;
  app->add_option("--mesh", raw.mesh, "Control mesh ROWSxCOLS (reference setting 25x25)")->capture_default_str();
  app->add_option("--sigma0", s.sigma0, "Initial step size in pixels (reference setting 20)")->capture_default_str();
  app->add_option("--degree", s.degree, "Polynomial order (reference setting 3)")->capture_default_str();
  app->add_option("--budget", s.budget, "Fitness evaluations")->capture_default_str();
  app->add_option("--lambda", s.lambda, "Population size (0 = 4 + floor(3 ln n))")->capture_default_str();
  app->add_option("--seed", s.seed, "Random seed")->capture_default_str();
  app->add_flag("--diagonal", s.diagonal, "Diagonal covariance only (cheaper for large meshes)");
  app->add_option("--precipitate-phase", run.phases.precipitate, "Phase id written for speckle cells")
      ->capture_default_str();
  app->add_option("--matrix-phase", run.phases.matrix, "Phase id written for other cells")->capture_default_str();
  app->add_option("--out-dir", raw.out_dir, "Output directory")->capture_default_str();
  app->add_option("--resume", raw.resume, "Not supported: runs cannot be resumed from a trace");
}

void finish_run(const RawRun &raw, RunConfig &run) {
  run.ebsd_map = raw.ebsd_map;
  run.ebsd_mask = raw.ebsd_mask;
  run.ebsd_rule = SpeckleRule::parse(raw.ebsd_rule);
  run.bse_image = raw.bse;
  run.bse_mask = raw.bse_mask;
  std::tie(run.bse_low, run.bse_high) = parse_band(raw.bse_threshold);
  run.bse_invert = raw.bse_invert;
  if (raw.bse_pixel_size < 0.0)
    throw std::invalid_argument("--bse-pixel-size must be positive");
  if (raw.bse_pixel_size > 0.0)
    run.bse_pixel_size = raw.bse_pixel_size;
  run.settings.ranges.tx = Range::parse(raw.tx);
  run.settings.ranges.ty = Range::parse(raw.ty);
  run.settings.ranges.theta = Range::parse(raw.rot);
  std::tie(run.settings.mesh_rows, run.settings.mesh_cols) = parse_mesh(raw.mesh);
  run.out_dir = raw.out_dir;
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
    v = v.substr(1, v.size() - 2);
  return v;
}

// Splices `--key=value` tokens from a config file right after the
// subcommand, so anything given on the command line wins.
std::vector<std::string> expand_config(const std::vector<std::string> &args) {
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      path = args[i + 1];
    else if (args[i].starts_with("--config="))
      path = args[i].substr(9);
  }
  if (!path || args.empty())
    return args;
  if (!fs::is_regular_file(*path))
    throw CliError(1, "config file not found: " + *path);
  KeyValues kv;
  try {
    kv = parse_key_values(read_file(*path));
  } catch (const std::exception &e) {
    throw CliError(1, "config " + *path + ": " + e.what());
  }
  std::vector<std::string> out{args.front()};
  for (const auto &[k, v] : kv) {
    if (k == "config")
      throw CliError(1, "config " + *path + ": nested config is not allowed");
    out.push_back("--" + k + "=" + unquote(v));
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

std::string help_for(const CLI::App &app) {
  for (const auto *sub : app.get_subcommands())
    return sub->help();
  return app.help();
}

} // namespace

CliInvocation parse_args(const std::vector<std::string> &args_in) {
  CliInvocation inv;
  RawRun raw;
  std::string config_path;

  CLI::App app("speckle-forge: EBSD distortion correction by speckle matching", "speckle-forge");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", SPECKLE_VERSION);

  auto common = [&](CLI::App *sub) {
    sub->add_option("--threads", inv.threads, "Worker threads (0 = all cores; default: $SPECKLE_FORGE_THREADS or 0)");
    sub->add_option("--config", config_path, "File of key = value lines; command-line flags override it");
  };

  auto *score = app.add_subcommand("score", "Dice similarity of two speckle graymaps");
  score->add_option("a", inv.score_a, "First speckle")->required();
  score->add_option("b", inv.score_b, "Second speckle")->required();
  common(score);

  auto *align = app.add_subcommand("align", "Rigid grid-search alignment of the BSE speckle onto the EBSD speckle");
  add_inputs(align, raw);
  align->add_option("--out", inv.align_out, "Write tx/ty/theta/score to this file");
  align->add_option("--aligned", inv.aligned_image, "Write the moved BSE speckle here");
  common(align);

  auto *optimize = app.add_subcommand("optimize", "Prealign, then optimize the control mesh with CMA-ES");
  add_inputs(optimize, raw);
  add_optimizer(optimize, raw, inv.run);
  common(optimize);

  auto *repeat = app.add_subcommand("repeat", "Repeat the optimization with seeds seed..seed+runs-1");
  add_inputs(repeat, raw);
  add_optimizer(repeat, raw, inv.run);
  repeat->add_option("--runs", inv.runs, "Number of runs (>= 2)")->capture_default_str();
  common(repeat);

  auto *apply = app.add_subcommand("apply", "Regenerate an EBSD map through a saved warp");
  apply->add_option("--map", inv.apply_map, "Input EBSD map")->required();
  apply->add_option("--warp", inv.apply_warp, "Warp file from optimize")->required();
  apply->add_option("--phases", inv.apply_phases, "Aligned BSE speckle graymap on the map grid")->required();
  apply->add_option("--out", inv.apply_out, "Output EBSD map")->required();
  apply->add_option("--precipitate-phase", inv.run.phases.precipitate, "Phase id for speckle cells")
      ->capture_default_str();
  apply->add_option("--matrix-phase", inv.run.phases.matrix, "Phase id for other cells")->capture_default_str();
  common(apply);

  auto *syn = app.add_subcommand("synth", "Generate a synthetic speckle pair with a known distortion");
  std::string family = to_string(inv.synth.family);
  syn->add_option("--width", inv.synth.width)->capture_default_str();
  syn->add_option("--height", inv.synth.height)->capture_default_str();
  syn->add_option("--disks", inv.synth.disks)->capture_default_str();
  syn->add_option("--rmin", inv.synth.radius_min, "Minimum disk radius (px)")->capture_default_str();
  syn->add_option("--rmax", inv.synth.radius_max, "Maximum disk radius (px)")->capture_default_str();
  syn->add_option("--gap", inv.synth.gap, "Minimum clearance between disks (px)")->capture_default_str();
  syn->add_option("--family", family, "none | affine | barrel | poly")->capture_default_str();
  syn->add_option("--degree", inv.synth.degree, "Degree of the poly family (1..3)")->capture_default_str();
  syn->add_option("--magnitude", inv.synth.magnitude, "Max boundary displacement (px)")->capture_default_str();
  syn->add_option("--drift", inv.synth.drift, "Row drift amplitude at the top row (px)")->capture_default_str();
  syn->add_option("--drift-decay", inv.synth.drift_decay, "Drift decay length / height")->capture_default_str();
  syn->add_option("--pixel-size", inv.synth.pixel_size, "Pixel size (um)")->capture_default_str();
  syn->add_option("--seed", inv.synth.seed)->capture_default_str();
  syn->add_option("--out-dir", inv.synth_dir, "Output directory")->capture_default_str();
  syn->add_flag("--ang", inv.synth_ang, "Also write distorted.ang, an EBSD map built on the distorted speckle");
  common(syn);

  std::vector<std::string> args = expand_config(args_in);
  std::reverse(args.begin(), args.end()); // CLI11 consumes from the back
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp &) {
    inv.help = true;
    inv.help_text = help_for(app);
    return inv;
  } catch (const CLI::CallForVersion &) {
    inv.help = true;
    inv.help_text = std::string(SPECKLE_VERSION) + "\n";
    return inv;
  } catch (const CLI::ParseError &e) {
    throw CliError(1, e.what());
  }

  const CLI::App *sub = app.get_subcommands().front();
  inv.subcommand = sub->get_name();
  inv.resolved_config = sub->config_to_str(true, false);
  try {
    if (inv.subcommand == "align" || inv.subcommand == "optimize" || inv.subcommand == "repeat") {
      finish_run(raw, inv.run);
      if (!raw.resume.empty())
        throw std::invalid_argument("--resume is not supported; rerun with the same seed to reproduce a run");
      if (inv.subcommand != "align")
        inv.run.settings.validate();
      if (inv.subcommand == "repeat" && inv.runs < 2)
        throw std::invalid_argument("--runs must be at least 2");
    } else if (inv.subcommand == "synth") {
      inv.synth.family = parse_family(family);
    }
    if (inv.threads < -1)
      throw std::invalid_argument("--threads must be >= 0");
  } catch (const std::invalid_argument &e) {
    throw CliError(1, e.what());
  }
  return inv;
}

int resolve_threads(const CliInvocation &inv) {
  if (inv.threads >= 0)
    return inv.threads;
  if (const char *env = std::getenv("SPECKLE_FORGE_THREADS")) {
    int n = 0;
    const std::string_view s(env);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec == std::errc() && p == s.data() + s.size() && n >= 0)
      return n;
    log::warn("ignoring SPECKLE_FORGE_THREADS='" + std::string(s) + "'");
  }
  return 0;
}

namespace {

void run_subcommand(const CliInvocation &inv) {
  const auto &cmd = inv.subcommand;
  if (cmd == "score") {
    const double d = dice(read_mask(inv.score_a), read_mask(inv.score_b));
    std::printf("%.6f\n", d);
  } else if (cmd == "align") {
    RunConfig cfg = inv.run;
    cfg.settings = {};
    cfg.settings.ranges = inv.run.settings.ranges;
    cfg.validate();
    const BinaryRaster ebsd = cfg.ebsd_map.empty() ? read_mask(cfg.ebsd_mask)
                                                   : ebsd_speckle(read_ebsd(cfg.ebsd_map), cfg.ebsd_rule);
    const BinaryRaster bse =
        cfg.bse_image.empty()
            ? read_mask(cfg.bse_mask, cfg.bse_pixel_size)
            : threshold(read_raster(cfg.bse_image, cfg.bse_pixel_size), static_cast<std::uint16_t>(cfg.bse_low),
                        static_cast<std::uint16_t>(cfg.bse_high), cfg.bse_invert);
    const auto pre = prealign(ebsd, bse, cfg.settings.ranges);
    const std::string kv = to_key_values(pre.align);
    if (!inv.align_out.empty())
      write_file_atomic(inv.align_out, kv);
    if (!inv.aligned_image.empty())
      write_raster(pre.reference, inv.aligned_image);
    std::fputs(kv.c_str(), stdout);
  } else if (cmd == "optimize") {
    const auto rep = run_correction(inv.run);
    std::fputs(rep.to_text(true).c_str(), stdout);
  } else if (cmd == "repeat") {
    const auto rep = run_repeat(inv.run, inv.runs);
    std::fputs(rep.to_text(true).c_str(), stdout);
  } else if (cmd == "apply") {
    const EbsdMap map = read_ebsd(inv.apply_map);
    const PolyWarp warp = read_warp(inv.apply_warp);
    const BinaryRaster phases = read_mask(inv.apply_phases);
    const EbsdMap out = regenerate(map, warp, phases, inv.run.phases);
    write_ebsd(out, inv.apply_out, std::string("speckle-forge ") + SPECKLE_VERSION + " apply");
    std::printf("map=%s\n", inv.apply_out.string().c_str());
  } else if (cmd == "synth") {
    const SynthResult r = synth(inv.synth);
    fs::create_directories(inv.synth_dir);
    const auto clean = inv.synth_dir / "clean.pgm", distorted = inv.synth_dir / "distorted.pgm",
               truth = inv.synth_dir / "truth.txt";
    write_raster(r.clean, clean);
    write_raster(r.distorted, distorted);
    write_file_atomic(truth, r.truth_text());
    std::printf("clean=%s\ndistorted=%s\ntruth=%s\n", clean.string().c_str(), distorted.string().c_str(),
                truth.string().c_str());
    if (inv.synth_ang) {
      const auto ang = inv.synth_dir / "distorted.ang";
      write_ebsd(synthetic_map(r.distorted, inv.synth.pixel_size, inv.synth.seed), ang);
      std::printf("map=%s\n", ang.string().c_str());
    }
  }
}

} // namespace

int execute(const CliInvocation &inv) {
  if (inv.help) {
    std::fputs(inv.help_text.c_str(), stdout);
    return 0;
  }
  const int threads = resolve_threads(inv);
  if (threads > 0)
    omp_set_num_threads(threads);
  log::info("speckle-forge " + std::string(SPECKLE_VERSION) + " " + inv.subcommand + ", threads=" +
            (threads > 0 ? std::to_string(threads) : "auto") + "\nresolved config:\n" + inv.resolved_config);
  try {
    run_subcommand(inv);
  } catch (const std::invalid_argument &e) {
    log::error(e.what());
    return 1;
  } catch (const std::exception &e) {
    log::error(e.what());
    return 2;
  }
  std::fflush(stdout);
  return 0;
}

int main(int argc, char **argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  CliInvocation inv;
  try {
    inv = parse_args(args);
  } catch (const CliError &e) {
    log::error(e.what());
    if (!args.empty())
      std::fputs("run with --help for usage\n", stderr);
    return e.code;
  }
  return execute(inv);
}

} // namespace speckle::cli
