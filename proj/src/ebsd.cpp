#include "speckle/ebsd.hpp"

#include "speckle/textio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

namespace speckle {

EbsdMap::EbsdMap(int cols_, int rows_, double step_) : cols(cols_), rows(rows_), step(step_) {
  if (cols_ < 1 || rows_ < 1)
    throw std::invalid_argument("ebsd: grid must be at least 1x1");
  if (!(step_ > 0.0) || !std::isfinite(step_))
    throw std::invalid_argument("ebsd: step must be positive");
  records.assign(static_cast<std::size_t>(cols_) * rows_, EbsdRecord::zero());
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

double to_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw std::runtime_error("ebsd: line " + std::to_string(line) + ": bad number '" + std::string(tok) + "'");
  return v;
}

// "# KEY: value" -> value when KEY matches.
std::optional<std::string_view> header_value(std::string_view line, std::string_view key) {
  line = trim(line.substr(1));
  if (line.size() <= key.size() || line.substr(0, key.size()) != key || line[key.size()] != ':')
    return std::nullopt;
  return trim(line.substr(key.size() + 1));
}

} // namespace

EbsdMap parse_ebsd(std::string_view text) {
  std::vector<std::string> header;
  std::optional<std::string> grid;
  std::optional<double> xstep, ystep;
  std::optional<long> ncols, nrows;
  std::vector<EbsdRecord> records;
  std::vector<std::pair<double, double>> xy;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty())
      continue;
    if (line.front() == '#') {
      if (!records.empty())
        throw std::runtime_error("ebsd: line " + std::to_string(line_no) + ": header after data");
      header.emplace_back(line);
      if (auto v = header_value(line, "GRID"))
        grid = std::string(*v);
      else if (auto v = header_value(line, "XSTEP"))
        xstep = to_double(*v, line_no);
      else if (auto v = header_value(line, "YSTEP"))
        ystep = to_double(*v, line_no);
      else if (auto v = header_value(line, "NCOLS_ODD"))
        ncols = std::lround(to_double(*v, line_no));
      else if (auto v = header_value(line, "NROWS"))
        nrows = std::lround(to_double(*v, line_no));
      continue;
    }
    double f[8];
    int n = 0;
    std::size_t p = 0;
    while (p < line.size() && n < 8) {
      while (p < line.size() && (line[p] == ' ' || line[p] == '\t'))
        ++p;
      std::size_t q = p;
      while (q < line.size() && line[q] != ' ' && line[q] != '\t')
        ++q;
      if (q > p)
        f[n++] = to_double(line.substr(p, q - p), line_no);
      p = q;
    }
    if (n < 8)
      throw std::runtime_error("ebsd: line " + std::to_string(line_no) + ": expected 8 columns");
    EbsdRecord r;
    r.phi1 = f[0];
    r.Phi = f[1];
    r.phi2 = f[2];
    r.iq = f[5];
    r.ci = f[6];
    r.phase = static_cast<int>(std::lround(f[7]));
    records.push_back(r);
    xy.emplace_back(f[3], f[4]);
  }

  if (!grid)
    throw std::runtime_error("ebsd: missing GRID header");
  if (*grid != "SqrGrid")
    throw std::runtime_error("ebsd: unsupported grid '" + *grid + "' (only SqrGrid)");
  if (!xstep || !ncols || !nrows)
    throw std::runtime_error("ebsd: missing XSTEP, NCOLS_ODD or NROWS header");
  if (*ncols < 1 || *nrows < 1 || *ncols > (1L << 24) || *nrows > (1L << 24))
    throw std::runtime_error("ebsd: bad grid dimensions");
  if (!(*xstep > 0.0))
    throw std::runtime_error("ebsd: XSTEP must be positive");
  const double tol = 1e-3 * *xstep;
  if (ystep && std::abs(*ystep - *xstep) > tol)
    throw std::runtime_error("ebsd: XSTEP and YSTEP differ");

  EbsdMap map(static_cast<int>(*ncols), static_cast<int>(*nrows), *xstep);
  if (records.size() != map.records.size())
    throw std::runtime_error("ebsd: expected " + std::to_string(map.records.size()) + " records, found " +
                             std::to_string(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int c = static_cast<int>(i % map.cols), r = static_cast<int>(i / map.cols);
    if (std::abs(xy[i].first - c * map.step) > tol || std::abs(xy[i].second - r * map.step) > tol)
      throw std::runtime_error("ebsd: record " + std::to_string(i) + " is off the grid or out of order");
  }
  map.records = std::move(records);
  map.header = std::move(header);
  return map;
}

EbsdMap read_ebsd(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path))
    throw std::invalid_argument("ebsd: no such file: " + path.string());
  try {
    return parse_ebsd(read_file(path));
  } catch (const std::runtime_error &e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string to_text(const EbsdMap &map, std::string_view provenance) {
  std::string out;
  out.reserve(map.records.size() * 80 + 512);
  char buf[256];
  if (map.header.empty()) {
    std::snprintf(buf, sizeof buf,
                  "# GRID: SqrGrid\n# XSTEP: %.6f\n# YSTEP: %.6f\n# NCOLS_ODD: %d\n# NCOLS_EVEN: %d\n# NROWS: %d\n",
                  map.step, map.step, map.cols, map.cols, map.rows);
    out += buf;
  } else {
    for (const auto &h : map.header)
      out += h + "\n";
  }
  if (!provenance.empty()) {
    out += "# ";
    out += provenance;
    out += "\n";
  }
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c) {
      const auto &e = map.at(c, r);
      std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %.6f %.6f %.6f %d\n", e.phi1, e.Phi, e.phi2, c * map.step,
                    r * map.step, e.iq, e.ci, e.phase);
      out += buf;
    }
  return out;
}

void write_ebsd(const EbsdMap &map, const std::filesystem::path &path, std::string_view provenance) {
  write_file_atomic(path, to_text(map, provenance));
}

SpeckleRule SpeckleRule::parse(std::string_view text) {
  SpeckleRule rule;
  std::string_view rest;
  if (text.starts_with("phase=")) {
    rule.kind = Kind::Phase;
    rest = text.substr(6);
  } else if (text.starts_with("ci<")) {
    rule.kind = Kind::CiBelow;
    rest = text.substr(3);
  } else if (text.starts_with("iq<")) {
    rule.kind = Kind::IqBelow;
    rest = text.substr(3);
  } else {
    throw std::invalid_argument("speckle rule '" + std::string(text) + "': expected phase=ID, ci<T or iq<T");
  }
  const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), rule.value);
  if (ec != std::errc() || ptr != rest.data() + rest.size() || !std::isfinite(rule.value))
    throw std::invalid_argument("speckle rule '" + std::string(text) + "': bad value");
  return rule;
}

std::string SpeckleRule::to_string() const {
  switch (kind) {
  case Kind::Phase: return "phase=" + format_double(value);
  case Kind::CiBelow: return "ci<" + format_double(value);
  case Kind::IqBelow: return "iq<" + format_double(value);
  }
  return {};
}

bool SpeckleRule::selects(const EbsdRecord &r) const {
  switch (kind) {
  case Kind::Phase: return r.phase == static_cast<int>(std::lround(value));
  case Kind::CiBelow: return r.ci < value;
  case Kind::IqBelow: return r.iq < value;
  }
  return false;
}

BinaryRaster ebsd_speckle(const EbsdMap &map, const SpeckleRule &rule) {
  BinaryRaster out(map.cols, map.rows, map.step);
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c)
      if (rule.selects(map.at(c, r)))
        out.set(c, r, true);
  if (out.count() == 0)
    throw std::invalid_argument("ebsd: speckle rule " + rule.to_string() + " selects no cells");
  return out;
}

EbsdMap regenerate(const EbsdMap &map, const PolyWarp &warp, const BinaryRaster &phases, const PhaseIds &ids) {
  if (phases.width() != map.cols || phases.height() != map.rows)
    throw std::invalid_argument("regenerate: phase raster does not match the map grid");
  EbsdMap out = map;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c) {
      const Point s = warp.eval(c, r);
      const int sx = round_px(s.x), sy = round_px(s.y);
      EbsdRecord e = (sx >= 0 && sy >= 0 && sx < map.cols && sy < map.rows) ? map.at(sx, sy) : EbsdRecord::zero();
      e.phase = phases.get(c, r) ? ids.precipitate : ids.matrix;
      out.at(c, r) = e;
    }
  return out;
}

double phase_fraction(const EbsdMap &map, int phase) {
  std::size_t n = 0;
  for (const auto &e : map.records)
    n += e.phase == phase;
  return map.records.empty() ? 0.0 : static_cast<double>(n) / map.records.size();
}

EbsdMap synthetic_map(const BinaryRaster &speckle, double step, std::uint64_t seed, const PhaseIds &ids) {
  EbsdMap map(speckle.width(), speckle.height(), step);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> half(0.0, std::numbers::pi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c) {
      auto &e = map.at(c, r);
      const bool p = speckle.get(c, r);
      e.phi1 = angle(rng);
      e.Phi = half(rng);
      e.phi2 = angle(rng);
      // Precipitates index poorly, which is what the ci/iq rules pick up.
      e.iq = p ? 40.0 + 40.0 * unit(rng) : 150.0 + 100.0 * unit(rng);
      e.ci = p ? 0.05 * unit(rng) : 0.3 + 0.7 * unit(rng);
      e.phase = p ? ids.precipitate : ids.matrix;
    }
  return map;
}

} // namespace speckle
