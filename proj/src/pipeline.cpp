#include "speckle/pipeline.hpp"

#include "speckle/log.hpp"
#include "speckle/similarity.hpp"
#include "speckle/textio.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace speckle {

namespace fs = std::filesystem;

namespace {

// Runs one stage, prefixing any error with the stage name while keeping the
// validation/runtime distinction.
template <class F>
auto stage(const char *name, F &&f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::invalid_argument &e) {
    throw std::invalid_argument(std::string(name) + ": " + e.what());
  } catch (const std::exception &e) {
    throw std::runtime_error(std::string(name) + ": " + e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

void CorrectionSettings::validate() const {
  if (mesh_rows < 2 || mesh_cols < 2)
    throw std::invalid_argument("mesh must be at least 2x2");
  if (degree < 1)
    throw std::invalid_argument("polynomial degree must be >= 1");
  if (monomial_count(degree) > mesh_rows * mesh_cols)
    throw std::invalid_argument("mesh has fewer points than the polynomial has coefficients");
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0))
    throw std::invalid_argument("sigma0 must be positive");
  if (budget <= 0)
    throw std::invalid_argument("budget must be positive");
  if (lambda < 0 || lambda == 1)
    throw std::invalid_argument("lambda must be 0 (default) or >= 2");
}

Prealignment prealign(const BinaryRaster &ebsd, const BinaryRaster &bse, const AlignmentRanges &ranges) {
  const BinaryRaster moving = fit_to(rescale_nearest(bse, ebsd.pixel_size()), ebsd.width(), ebsd.height());
  Prealignment out;
  out.align = grid_search_align(moving, ebsd, ranges.tx, ranges.ty, ranges.theta);
  out.reference = apply_affine(moving, out.align.params);
  return out;
}

MeshOptimization optimize_mesh(const BinaryRaster &ebsd, const BinaryRaster &reference,
                               const CorrectionSettings &settings) {
  settings.validate();
  if (ebsd.width() != reference.width() || ebsd.height() != reference.height())
    throw std::invalid_argument("optimize: speckle dimensions differ");
  const int rows = settings.mesh_rows, cols = settings.mesh_cols;
  MeshOptimization out;
  out.regular = regular_mesh(rows, cols, ebsd.width(), ebsd.height());
  const PolyFitter fitter(out.regular, settings.degree);

  auto params = CmaParams::defaults(2 * rows * cols, settings.sigma0, settings.budget, settings.seed, settings.lambda);
  params.diagonal = settings.diagonal;
  const FitnessFn fitness = [&](std::span<const double> x) {
    return warped_dice(ebsd, fitter.fit(ControlMesh::unflatten(rows, cols, x).rounded()), reference);
  };
  const auto m0 = out.regular.flatten();
  const auto result = optimize(fitness, params, Eigen::Map<const Eigen::VectorXd>(m0.data(), m0.size()));

  out.mesh = ControlMesh::unflatten(rows, cols, std::span<const double>(result.mean.data(), result.mean.size())).rounded();
  out.warp = fitter.fit(out.mesh);
  out.corrected = warp_raster(ebsd, out.warp);
  out.final_score = dice(out.corrected, reference);
  out.best_score = result.best_fitness;
  out.trace = result.trace;
  out.evaluations = result.evaluations;
  out.repairs = result.repairs;
  return out;
}

Correction correct_speckles(const BinaryRaster &ebsd, const BinaryRaster &bse, const CorrectionSettings &settings) {
  settings.validate();
  Correction c;
  c.pre = stage("align", [&] { return prealign(ebsd, bse, settings.ranges); });
  c.opt = stage("optimize", [&] { return optimize_mesh(ebsd, c.pre.reference, settings); });
  return c;
}

GrayRaster RepeatResult::heatmap_raster() const {
  GrayRaster g(width, height, 1.0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      g.set(x, y, static_cast<std::uint16_t>(std::lround(255.0 * heatmap[static_cast<std::size_t>(y) * width + x])));
  return g;
}

RepeatResult repeat_speckles(const BinaryRaster &ebsd, const BinaryRaster &bse, const CorrectionSettings &settings,
                             int runs) {
  if (runs < 2)
    throw std::invalid_argument("repeat: need at least 2 runs");
  settings.validate();
  const auto pre = stage("align", [&] { return prealign(ebsd, bse, settings.ranges); });
  RepeatResult out;
  out.align = pre.align;
  out.width = ebsd.width();
  out.height = ebsd.height();
  for (int i = 0; i < runs; ++i) {
    CorrectionSettings s = settings;
    s.seed = settings.seed + static_cast<std::uint64_t>(i);
    log::info("repeat: run " + std::to_string(i + 1) + "/" + std::to_string(runs) + " seed " + std::to_string(s.seed));
    out.seeds.push_back(s.seed);
    out.runs.push_back(stage("optimize", [&] { return optimize_mesh(ebsd, pre.reference, s); }));
  }

  double sum = 0.0;
  for (const auto &r : out.runs)
    sum += r.final_score;
  out.mean_score = sum / runs;
  double ss = 0.0;
  for (const auto &r : out.runs)
    ss += (r.final_score - out.mean_score) * (r.final_score - out.mean_score);
  out.std_score = std::sqrt(ss / (runs - 1));

  double pair_sum = 0.0;
  int pairs = 0;
  for (int i = 0; i < runs; ++i)
    for (int j = i + 1; j < runs; ++j) {
      const auto &a = out.runs[i].corrected, &b = out.runs[j].corrected;
      pair_sum += (a.count() + b.count() == 0) ? 1.0 : dice(a, b);
      ++pairs;
    }
  out.mean_pairwise = pair_sum / pairs;

  std::vector<int> hits(ebsd.size(), 0);
  for (const auto &r : out.runs)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        hits[static_cast<std::size_t>(y) * out.width + x] += r.corrected.get(x, y);
  out.heatmap.resize(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i)
    out.heatmap[i] = static_cast<double>(hits[i]) / runs;
  return out;
}

ColorRaster render_overlay(const BinaryRaster &ebsd, const BinaryRaster &bse) {
  if (ebsd.width() != bse.width() || ebsd.height() != bse.height())
    throw std::invalid_argument("overlay: dimension mismatch");
  ColorRaster out{ebsd.width(), ebsd.height(), {}};
  out.rgb.resize(3 * ebsd.size());
  std::size_t i = 0;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x, i += 3) {
      std::uint8_t r = 0, g = 0, b = 255;
      if (ebsd.get(x, y)) {
        r = 255;
        b = 0;
      } else if (bse.get(x, y)) {
        r = g = 255;
      }
      out.rgb[i] = r;
      out.rgb[i + 1] = g;
      out.rgb[i + 2] = b;
    }
  return out;
}

WarpError warp_error(const PolyWarp &fitted, const std::function<Point(double, double)> &truth, int width, int height,
                     double margin, int stride) {
  if (stride < 1)
    throw std::invalid_argument("warp_error: stride must be positive");
  const double x0 = margin * width, x1 = (1.0 - margin) * width;
  const double y0 = margin * height, y1 = (1.0 - margin) * height;
  double in_sum = 0.0, out_sum = 0.0;
  std::size_t in_n = 0, out_n = 0;
  WarpError e;
  for (int y = 0; y < height; y += stride)
    for (int x = 0; x < width; x += stride) {
      const Point a = fitted.eval(x, y), b = truth(x, y);
      const double d = std::hypot(a.x - b.x, a.y - b.y);
      e.max = std::max(e.max, d);
      if (x >= x0 && x <= x1 && y >= y0 && y <= y1) {
        in_sum += d;
        ++in_n;
      } else {
        out_sum += d;
        ++out_n;
      }
    }
  e.interior = in_n ? in_sum / in_n : 0.0;
  e.border = out_n ? out_sum / out_n : 0.0;
  return e;
}

void RunConfig::validate() const {
  settings.validate();
  if (ebsd_map.empty() == ebsd_mask.empty())
    throw std::invalid_argument("exactly one of the EBSD map or EBSD mask inputs is required");
  if (bse_image.empty() == bse_mask.empty())
    throw std::invalid_argument("exactly one of the BSE image or BSE mask inputs is required");
  for (const auto *p : {&ebsd_map, &ebsd_mask, &bse_image, &bse_mask})
    if (!p->empty() && !fs::is_regular_file(*p))
      throw std::invalid_argument("no such file: " + p->string());
  if (bse_low < 0 || bse_high > 65535 || bse_low > bse_high)
    throw std::invalid_argument("BSE threshold band must satisfy 0 <= low <= high <= 65535");
  if (bse_pixel_size && !(*bse_pixel_size > 0.0))
    throw std::invalid_argument("BSE pixel size must be positive");
  if (phases.precipitate == phases.matrix)
    throw std::invalid_argument("precipitate and matrix phase ids must differ");
}

namespace {

struct Inputs {
  std::optional<EbsdMap> map;
  BinaryRaster ebsd;
  BinaryRaster bse;
};

Inputs load_inputs(const RunConfig &cfg) {
  Inputs in;
  if (!cfg.ebsd_map.empty()) {
    in.map = read_ebsd(cfg.ebsd_map);
    in.ebsd = ebsd_speckle(*in.map, cfg.ebsd_rule);
  } else {
    in.ebsd = read_mask(cfg.ebsd_mask);
  }
  if (!cfg.bse_image.empty())
    in.bse = threshold(read_raster(cfg.bse_image, cfg.bse_pixel_size), static_cast<std::uint16_t>(cfg.bse_low),
                       static_cast<std::uint16_t>(cfg.bse_high), cfg.bse_invert);
  else
    in.bse = read_mask(cfg.bse_mask, cfg.bse_pixel_size);
  if (in.ebsd.count() == 0)
    throw std::invalid_argument("EBSD speckle is empty");
  return in;
}

std::string provenance(const PolyWarp &warp, double score) {
  return std::string("speckle-forge ") + SPECKLE_VERSION + " warp_fnv1a64=" + hex64(fnv1a64(to_text(warp))) +
         " score=" + format_double(score);
}

} // namespace

std::string RunReport::to_text(bool with_wall_clock) const {
  std::string s;
  s += "tx=" + std::to_string(prealign.params.tx) + "\n";
  s += "ty=" + std::to_string(prealign.params.ty) + "\n";
  s += "theta=" + format_double(prealign.params.theta_deg) + "\n";
  s += "prealign_score=" + format_double(prealign.score) + "\n";
  s += "final_score=" + format_double(final_score) + "\n";
  s += "best_score=" + format_double(best_score) + "\n";
  s += std::string("regressed=") + (regressed ? "true" : "false") + "\n";
  s += "evaluations=" + std::to_string(evaluations) + "\n";
  s += "repairs=" + std::to_string(repairs) + "\n";
  s += "seed=" + std::to_string(seed) + "\n";
  s += "warp=" + warp_path.filename().string() + "\n";
  s += "trace=" + trace_path.filename().string() + "\n";
  if (!map_path.empty())
    s += "map=" + map_path.filename().string() + "\n";
  if (with_wall_clock)
    s += "wall_seconds=" + format_double(wall_seconds) + "\n";
  return s;
}

RunReport run_correction(const RunConfig &cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  const Inputs in = stage("load", [&] { return load_inputs(cfg); });
  const Correction c = correct_speckles(in.ebsd, in.bse, cfg.settings);

  RunReport rep;
  rep.prealign = c.pre.align;
  rep.final_score = c.opt.final_score;
  rep.best_score = c.opt.best_score;
  rep.regressed = c.opt.final_score < c.pre.align.score;
  rep.evaluations = c.opt.evaluations;
  rep.repairs = c.opt.repairs;
  rep.seed = cfg.settings.seed;
  if (rep.regressed)
    log::warn("final score " + format_double(rep.final_score) + " is below the prealignment score " +
              format_double(rep.prealign.score));

  stage("write", [&] {
    fs::create_directories(cfg.out_dir);
    rep.warp_path = cfg.out_dir / "warp.txt";
    rep.trace_path = cfg.out_dir / "trace.csv";
    write_warp(c.opt.warp, rep.warp_path, "seed=" + std::to_string(cfg.settings.seed));
    write_file_atomic(rep.trace_path, trace_csv(c.opt.trace));
    write_raster(c.pre.reference, cfg.out_dir / "aligned_bse.pgm");
    write_raster(c.opt.corrected, cfg.out_dir / "corrected_speckle.pgm");
    write_color(render_overlay(in.ebsd, c.pre.reference), cfg.out_dir / "overlay_before.ppm");
    write_color(render_overlay(c.opt.corrected, c.pre.reference), cfg.out_dir / "overlay_after.ppm");
    if (in.map) {
      rep.map_path = cfg.out_dir / "corrected.ang";
      const EbsdMap out = regenerate(*in.map, c.opt.warp, c.pre.reference, cfg.phases);
      write_ebsd(out, rep.map_path, provenance(c.opt.warp, rep.final_score));
    }
    write_file_atomic(cfg.out_dir / "report.txt", rep.to_text());
  });
  rep.wall_seconds = seconds_since(t0);
  return rep;
}

std::string RepeatReport::to_text(bool with_wall_clock) const {
  std::string s;
  s += "runs=" + std::to_string(result.runs.size()) + "\n";
  s += "tx=" + std::to_string(result.align.params.tx) + "\n";
  s += "ty=" + std::to_string(result.align.params.ty) + "\n";
  s += "theta=" + format_double(result.align.params.theta_deg) + "\n";
  s += "prealign_score=" + format_double(result.align.score) + "\n";
  s += "mean_score=" + format_double(result.mean_score) + "\n";
  s += "std_score=" + format_double(result.std_score) + "\n";
  s += "mean_pairwise_dice=" + format_double(result.mean_pairwise) + "\n";
  s += "stats=" + stats_path.filename().string() + "\n";
  s += "heatmap=" + heatmap_path.filename().string() + "\n";
  if (with_wall_clock)
    s += "wall_seconds=" + format_double(wall_seconds) + "\n";
  return s;
}

RepeatReport run_repeat(const RunConfig &cfg, int runs) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  if (runs < 2)
    throw std::invalid_argument("repeat: need at least 2 runs");
  const Inputs in = stage("load", [&] { return load_inputs(cfg); });
  RepeatReport rep;
  rep.result = repeat_speckles(in.ebsd, in.bse, cfg.settings, runs);
  const auto &r = rep.result;

  stage("write", [&] {
    fs::create_directories(cfg.out_dir);
    std::string csv = "run,seed,final_score,best_score,evaluations\n";
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
      csv += std::to_string(i) + "," + std::to_string(r.seeds[i]) + "," + format_double(r.runs[i].final_score) + "," +
             format_double(r.runs[i].best_score) + "," + std::to_string(r.runs[i].evaluations) + "\n";
      write_file_atomic(cfg.out_dir / ("trace_" + std::to_string(i) + ".csv"), trace_csv(r.runs[i].trace));
      write_warp(r.runs[i].warp, cfg.out_dir / ("warp_" + std::to_string(i) + ".txt"),
                 "seed=" + std::to_string(r.seeds[i]));
    }
    rep.stats_path = cfg.out_dir / "stats.csv";
    rep.heatmap_path = cfg.out_dir / "heatmap.pgm";
    write_file_atomic(rep.stats_path, csv);
    write_raster(r.heatmap_raster(), rep.heatmap_path);
    write_file_atomic(cfg.out_dir / "summary.txt", rep.to_text());
  });
  rep.wall_seconds = seconds_since(t0);
  return rep;
}

} // namespace speckle
