#include "speckle/cmaes.hpp"

#include "speckle/textio.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <string>

namespace speckle {

int CmaParams::default_lambda(int n) { return 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(n)))); }

CmaParams CmaParams::defaults(int n, double sigma0, long long max_iters, std::uint64_t seed, int lambda_override) {
  if (n < 1)
    throw std::invalid_argument("cma: dimension must be >= 1");
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0))
    throw std::invalid_argument("cma: sigma0 must be positive");
  CmaParams p;
  p.n = n;
  p.lambda = lambda_override > 0 ? lambda_override : default_lambda(n);
  if (p.lambda < 2)
    throw std::invalid_argument("cma: lambda must be >= 2");
  p.mu = p.lambda / 2;
  p.weights.resize(static_cast<std::size_t>(p.mu));
  for (int i = 0; i < p.mu; ++i)
    p.weights[static_cast<std::size_t>(i)] = std::log(p.mu + 0.5) - std::log(i + 1.0);
  const double sum = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
  double sq = 0.0;
  for (auto &w : p.weights) {
    w /= sum;
    sq += w * w;
  }
  p.mu_w = 1.0 / sq;

  const double dn = n;
  p.c_c = std::min(4.0 / dn, kMaxPathRate);
  p.c_sigma = std::min(4.0 / dn, kMaxPathRate);
  p.c_1 = std::min(2.0 / (dn * dn), kMaxRankOneRate);
  p.c_mu = std::min(p.mu_w / (dn * dn), 1.0 - p.c_1);
  p.d_sigma = 1.0 + std::sqrt(p.mu_w / dn);
  p.sigma0 = sigma0;
  p.max_iters = max_iters;
  p.seed = seed;
  p.eigen_interval = std::max(1, static_cast<int>(std::floor(1.0 / (10.0 * dn * (p.c_1 + p.c_mu)))));
  return p;
}

double CmaEs::expected_norm(int n) {
  const double dn = n;
  return std::sqrt(dn) * (1.0 - 1.0 / (4.0 * dn) + 1.0 / (21.0 * dn * dn));
}

CmaEs::CmaEs(CmaParams params, const Eigen::VectorXd &m0) : params_(std::move(params)), rng_(params_.seed) {
  const int n = params_.n;
  if (n < 1 || m0.size() != n)
    throw std::invalid_argument("cma: initial mean has wrong dimension");
  if (!(params_.sigma0 > 0.0) || !std::isfinite(params_.sigma0))
    throw std::invalid_argument("cma: sigma0 must be positive");
  if (params_.lambda < 2 || params_.mu < 1 || static_cast<int>(params_.weights.size()) != params_.mu)
    throw std::invalid_argument("cma: inconsistent population parameters");
  if (params_.c_1 + params_.c_mu > 1.0 + 1e-15)
    throw std::invalid_argument("cma: c_1 + c_mu must not exceed 1");
  if (!m0.allFinite())
    throw std::invalid_argument("cma: initial mean is not finite");
  state_.mean = m0;
  state_.sigma = params_.sigma0;
  state_.C = Eigen::MatrixXd::Identity(n, n);
  state_.p_c = Eigen::VectorXd::Zero(n);
  state_.p_sigma = Eigen::VectorXd::Zero(n);
  state_.B = Eigen::MatrixXd::Identity(n, n);
  state_.D = Eigen::VectorXd::Ones(n);
}

std::vector<Eigen::VectorXd> CmaEs::ask() {
  const int n = params_.n;
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(params_.lambda));
  Eigen::VectorXd z(n);
  for (int k = 0; k < params_.lambda; ++k) {
    for (int i = 0; i < n; ++i)
      z[i] = normal_(rng_);
    const Eigen::VectorXd dz = state_.D.cwiseProduct(z);
    if (params_.diagonal)
      out.emplace_back(state_.mean + state_.sigma * dz);
    else
      out.emplace_back(state_.mean + state_.sigma * (state_.B * dz));
  }
  return out;
}

void CmaEs::tell(std::span<const Eigen::VectorXd> candidates, std::span<const double> fitness) {
  const int n = params_.n;
  const auto lambda = static_cast<std::size_t>(params_.lambda);
  if (candidates.size() != lambda || fitness.size() != lambda)
    throw std::invalid_argument("cma: tell expects exactly lambda candidates and fitnesses");
  for (double f : fitness)
    if (!std::isfinite(f))
      throw std::invalid_argument("cma: non-finite fitness");
  for (const auto &c : candidates)
    if (c.size() != n)
      throw std::invalid_argument("cma: candidate has wrong dimension");

  std::vector<std::size_t> order(lambda);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });

  auto &s = state_;
  const auto mu = static_cast<std::size_t>(params_.mu);
  Eigen::MatrixXd Y(n, static_cast<Eigen::Index>(mu));
  Eigen::VectorXd y_w = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < mu; ++i) {
    Y.col(static_cast<Eigen::Index>(i)) = (candidates[order[i]] - s.mean) / s.sigma;
    y_w += params_.weights[i] * Y.col(static_cast<Eigen::Index>(i));
  }

  // Mean.
  s.mean += s.sigma * y_w;

  // Evolution path for C (stalls while the step-size path is long).
  const double cc = params_.c_c;
  const bool h_sigma = s.p_sigma.norm() < 1.5 * std::sqrt(static_cast<double>(n));
  s.p_c *= (1.0 - cc);
  if (h_sigma)
    s.p_c += std::sqrt(1.0 - (1.0 - cc) * (1.0 - cc)) * std::sqrt(params_.mu_w) * y_w;

  // Evolution path for sigma, using C^{-1/2} = B D^{-1} B^T.
  const double cs = params_.c_sigma;
  Eigen::VectorXd whitened;
  if (params_.diagonal)
    whitened = y_w.cwiseQuotient(s.D);
  else
    whitened = s.B * (s.B.transpose() * y_w).cwiseQuotient(s.D);
  s.p_sigma = (1.0 - cs) * s.p_sigma + std::sqrt(1.0 - (1.0 - cs) * (1.0 - cs)) * std::sqrt(params_.mu_w) * whitened;

  // Covariance.
  const double c1 = params_.c_1, cmu = params_.c_mu;
  if (params_.diagonal) {
    Eigen::VectorXd rank_mu = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < mu; ++i)
      rank_mu += params_.weights[i] * Y.col(static_cast<Eigen::Index>(i)).cwiseAbs2();
    Eigen::VectorXd diag = (1.0 - c1 - cmu) * s.C.diagonal() + c1 * s.p_c.cwiseAbs2() + cmu * rank_mu;
    s.C = diag.asDiagonal();
  } else {
    Eigen::MatrixXd YW = Y;
    for (std::size_t i = 0; i < mu; ++i)
      YW.col(static_cast<Eigen::Index>(i)) *= params_.weights[i];
    s.C = (1.0 - c1 - cmu) * s.C + c1 * (s.p_c * s.p_c.transpose()) + cmu * (YW * Y.transpose());
    s.C = 0.5 * (s.C + s.C.transpose()).eval();
  }

  // Step size.
  s.sigma *= std::exp((cs / params_.d_sigma) * (s.p_sigma.norm() / expected_norm(n) - 1.0));
  if (!(s.sigma > 0.0) || !std::isfinite(s.sigma))
    throw std::runtime_error("cma: step size degenerated (sigma = " + std::to_string(s.sigma) + ")");

  ++s.generation;
  if (params_.diagonal || s.generation - s.eigen_generation >= params_.eigen_interval)
    refresh_eigen();
}

void CmaEs::refresh_eigen() {
  auto &s = state_;
  const int n = params_.n;
  if (params_.diagonal) {
    Eigen::VectorXd d = s.C.diagonal();
    const double floor_v = std::max(d.maxCoeff() * 1e-14, 1e-300);
    for (int i = 0; i < n; ++i)
      if (!(d[i] > floor_v)) {
        d[i] = floor_v;
        ++s.repairs;
      }
    s.C = d.asDiagonal();
    s.D = d.cwiseSqrt();
    s.eigen_generation = s.generation;
    return;
  }
  if (!s.C.allFinite())
    throw std::runtime_error("cma: covariance matrix is not finite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.C);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("cma: eigendecomposition failed (covariance corrupted)");
  Eigen::VectorXd ev = es.eigenvalues();
  const double floor_v = std::max(ev.maxCoeff() * 1e-14, 1e-300);
  bool repaired = false;
  for (int i = 0; i < n; ++i)
    if (!(ev[i] > floor_v)) {
      ev[i] = floor_v;
      repaired = true;
    }
  s.B = es.eigenvectors();
  if (repaired) {
    ++s.repairs;
    s.C = s.B * ev.asDiagonal() * s.B.transpose();
    s.C = 0.5 * (s.C + s.C.transpose()).eval();
  }
  s.D = ev.cwiseSqrt();
  s.eigen_generation = s.generation;
}

OptimizeResult optimize(const FitnessFn &fitness, const CmaParams &params, const Eigen::VectorXd &m0,
                        const std::function<void(const CmaEs &, const GenerationRecord &)> &observer) {
  if (params.max_iters < params.lambda)
    throw std::invalid_argument("cma: evaluation budget must be at least lambda");
  CmaEs cma(params, m0);
  const long long generations = (params.max_iters + params.lambda - 1) / params.lambda;
  OptimizeResult result;
  result.best = m0;
  result.best_fitness = -std::numeric_limits<double>::infinity();
  result.trace.reserve(static_cast<std::size_t>(generations));

  const auto lambda = static_cast<std::ptrdiff_t>(params.lambda);
  std::vector<double> f(static_cast<std::size_t>(lambda));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(lambda));
  for (long long g = 0; g < generations; ++g) {
    const double sigma = cma.state().sigma;
    const auto candidates = cma.ask();
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < lambda; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      try {
        f[ku] = fitness(std::span<const double>(candidates[ku].data(), static_cast<std::size_t>(candidates[ku].size())));
      } catch (...) {
        errors[ku] = std::current_exception();
      }
    }
    for (std::size_t k = 0; k < errors.size(); ++k)
      if (errors[k]) {
        try {
          std::rethrow_exception(errors[k]);
        } catch (const std::exception &e) {
          throw std::runtime_error("fitness evaluation failed (generation " + std::to_string(g) + ", candidate " +
                                   std::to_string(k) + "): " + e.what());
        }
      }
    result.evaluations += lambda;

    double sum = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      sum += f[k];
      if (f[k] > result.best_fitness) {
        result.best_fitness = f[k];
        result.best = candidates[k];
      }
    }
    cma.tell(candidates, f);
    GenerationRecord rec{g, result.best_fitness, sum / static_cast<double>(lambda), sigma};
    result.trace.push_back(rec);
    if (observer)
      observer(cma, rec);
  }
  result.mean = cma.state().mean;
  result.repairs = cma.state().repairs;
  return result;
}

std::string trace_csv(std::span<const GenerationRecord> trace) {
  std::string out = "generation,best,mean,sigma\n";
  for (const auto &r : trace)
    out += std::to_string(r.generation) + "," + format_double(r.best) + "," + format_double(r.mean) + "," +
           format_double(r.sigma) + "\n";
  return out;
}

} // namespace speckle
