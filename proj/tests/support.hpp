#pragma once

#include "speckle/raster.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <sys/wait.h>

namespace testing {

inline speckle::BinaryRaster random_speckle(int w, int h, double density, std::mt19937_64 &rng, double ps = 1.0) {
  std::bernoulli_distribution bit(density);
  speckle::BinaryRaster r(w, h, ps);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (bit(rng))
        r.set(x, y, true);
  return r;
}

// Blobby speckle: a handful of filled squares, easier to align than noise.
inline speckle::BinaryRaster blob_speckle(int w, int h, int blobs, std::mt19937_64 &rng, double ps = 1.0) {
  std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1), us(2, 5);
  speckle::BinaryRaster r(w, h, ps);
  for (int b = 0; b < blobs; ++b) {
    const int cx = ux(rng), cy = uy(rng), s = us(rng);
    for (int y = cy - s; y <= cy + s; ++y)
      for (int x = cx - s; x <= cx + s; ++x)
        if (r.in_bounds(x, y))
          r.set(x, y, true);
  }
  return r;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string &tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("speckle-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

struct CommandResult {
  int exit_code = -1;
  std::string out; // stdout only; stderr goes to a file next to it
};

/// Runs a shell command, capturing stdout.
inline CommandResult run_command(const std::string &cmd) {
  CommandResult r;
  FILE *p = popen(cmd.c_str(), "r");
  if (!p)
    return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0)
    r.out.append(buf, n);
  const int status = pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

} // namespace testing
