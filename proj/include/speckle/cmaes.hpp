#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace speckle {

/// Strategy constants. `defaults()` fills the learning rates from n and mu_w:
///   c_c = c_sigma = 4/n, c_1 = 2/n^2, c_mu = min(mu_w/n^2, 1 - c_1),
///   d_sigma = 1 + sqrt(mu_w/n)
/// with the rates capped so every update stays a convex combination for
/// small n (see `kMaxPathRate`, `kMaxRankOneRate`).
struct CmaParams {
  int n = 0;
  int lambda = 0;
  int mu = 0;
  std::vector<double> weights;
  double mu_w = 0.0;
  double c_c = 0.0;
  double c_sigma = 0.0;
  double c_1 = 0.0;
  double c_mu = 0.0;
  double d_sigma = 0.0;
  double sigma0 = 1.0;
  long long max_iters = 0; // fitness evaluations
  std::uint64_t seed = 0;
  bool diagonal = false; // restrict C to its diagonal
  int eigen_interval = 1; // generations between eigendecompositions

  static constexpr double kMaxPathRate = 0.5;
  static constexpr double kMaxRankOneRate = 0.5;

  /// lambda_override <= 0 selects 4 + floor(3 ln n).
  static CmaParams defaults(int n, double sigma0, long long max_iters, std::uint64_t seed, int lambda_override = 0);

  static int default_lambda(int n);
};

struct CmaState {
  Eigen::VectorXd mean;
  double sigma = 1.0;
  Eigen::MatrixXd C;
  Eigen::VectorXd p_c;
  Eigen::VectorXd p_sigma;
  long long generation = 0;

  // Cached factorization C = B diag(D^2) B^T.
  Eigen::MatrixXd B;
  Eigen::VectorXd D;
  long long eigen_generation = 0;
  int repairs = 0;
};

/// Ask/tell CMA-ES that maximizes fitness.
class CmaEs {
public:
  CmaEs(CmaParams params, const Eigen::VectorXd &m0);

  const CmaParams &params() const { return params_; }
  const CmaState &state() const { return state_; }

  /// Draws lambda candidates m + sigma * B D z. Deterministic for a given seed.
  std::vector<Eigen::VectorXd> ask();

  /// Updates the distribution from lambda candidates and their fitnesses
  /// (higher is better).
  void tell(std::span<const Eigen::VectorXd> candidates, std::span<const double> fitness);

  /// E|N(0, I)| for dimension n.
  static double expected_norm(int n);

private:
  void refresh_eigen();

  CmaParams params_;
  CmaState state_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

struct GenerationRecord {
  long long generation = 0;
  double best = 0.0; // best-ever fitness so far
  double mean = 0.0; // mean fitness of this generation's population
  double sigma = 0.0;
};

struct OptimizeResult {
  Eigen::VectorXd mean; // final distribution mean
  Eigen::VectorXd best;
  double best_fitness = 0.0;
  std::vector<GenerationRecord> trace;
  long long evaluations = 0;
  int repairs = 0;
};

using FitnessFn = std::function<double(std::span<const double>)>;

/// Runs ceil(max_iters / lambda) generations. Fitness evaluations within a
/// generation run in parallel, so `fitness` must be safe to call concurrently.
/// An optional observer sees every completed generation.
OptimizeResult optimize(const FitnessFn &fitness, const CmaParams &params, const Eigen::VectorXd &m0,
                        const std::function<void(const CmaEs &, const GenerationRecord &)> &observer = {});

std::string trace_csv(std::span<const GenerationRecord> trace);

} // namespace speckle
