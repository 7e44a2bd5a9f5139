#pragma once

#include <optional>

#include "arcade/arcade.hpp"
#include "arcade/coupling.hpp"

namespace arcade {

class RapConfig {
 public:
  RapConfig(ArcadeConfig arcade, CoefficientSet signal, CouplingKernel coupling, bool standard_flag = false);

  // standard coefficients for both noise and signal
  static RapConfig standard(const GaussMarkovDriver& d, const Partition& p, CouplingKernel coupling);

  const ArcadeConfig& arcade() const { return arcade_; }
  const CoefficientSet& signal() const { return signal_; }
  const CouplingKernel& coupling() const { return coupling_; }
  bool standard_flag() const { return standard_; }
  const Partition& partition() const { return arcade_.partition(); }
  const GaussMarkovDriver& driver() const { return arcade_.driver(); }

  const RowMatrix& g_grid() const { return g_grid_; }  // node x coefficient

 private:
  ArcadeConfig arcade_;
  CoefficientSet signal_;
  CouplingKernel coupling_;
  bool standard_;
  RowMatrix g_grid_;
};

// Single-path generator: driver stream "D" and target stream "X" share the path index.
class RapSampler {
 public:
  explicit RapSampler(const RapConfig& cfg);
  const RapConfig& config() const { return cfg_; }
  // I and A have one entry per grid node, X has n+1 entries; A may be null
  void sample(std::uint64_t seed, std::uint64_t index, double* I, double* X, double* A = nullptr) const;

 private:
  const RapConfig& cfg_;
  DriverSampler driver_;
};

struct RapPaths {
  PathBundle I;
  RowMatrix X;  // path x (n+1)
};

RapPaths build_rap_paths(const RapConfig& cfg, std::size_t n_paths, std::uint64_t seed);

struct NearlyMarkovReport {
  FactorizationReport cond1;
  double subcond1_residual = 0;  // max |g_j| on [T_0, T_{j-1}]
  double subcond2_residual = 0;  // max |g_j - A1 / A1(T_j-)| on [T_{j-1}, T_j]
  bool subcond1 = false, subcond2 = false;
  bool pass = false;
  double tol = 0;
};

NearlyMarkovReport nearly_markov_check(const RapConfig& cfg, double tol = 1e-8);

// E[I_t | F_s^I] on a one-arc configuration
double conditional_mean_rap(const RapConfig& cfg, double s, double t, double x0, double m_s, double i_s);

struct MimicResult {
  std::vector<double> grid;
  RowMatrix paths;                 // RAP paths on the target grid
  std::vector<double> sup_distance;
  double median_sup = 0;
};

// X = target at the dates of p, piecewise-linear f = g, Brownian noise scaled by noise_scale (0 disables it)
MimicResult mimic_process(const PathBundle& target, const Partition& p, double noise_scale, std::uint64_t seed);

// fractional Brownian motion by Cholesky on the grid (grid[0] must be 0)
PathBundle simulate_fbm(double hurst, const std::vector<double>& grid, std::size_t n_paths, std::uint64_t seed);

}  // namespace arcade
