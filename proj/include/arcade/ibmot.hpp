#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "arcade/coupling.hpp"
#include "arcade/fam.hpp"

namespace arcade {

double normal_pdf(double z);
double normal_quantile(double p);

// (int_a^b Q, int_a^b Q^2) for the N(0, tau) quantile Q
std::pair<double, double> gaussian_quantile_partial_moments(double a, double b, double tau);

// int_0^1 (Q_row - Q_{N(0,tau)})^2 for a discrete law (values need not be sorted)
double w2sq_discrete_vs_gaussian(const std::vector<double>& values, const std::vector<double>& probs, double tau);

struct IbmotProblem {
  DiscreteMarginal mu, nu;
  double T = 1.0;
  std::size_t steps = 1000;  // grid of the default Brownian-bridge template used by MC cross-checks

  IbmotProblem(DiscreteMarginal mu_, DiscreteMarginal nu_, double T_ = 1.0);
  std::size_t m() const { return mu.size(); }
  std::size_t n() const { return nu.size(); }
};

using Matrix = std::vector<std::vector<double>>;

struct QuantileObjective {
  double value = 0;  // E[(X_1 - W_{T_1})^2] in quantile form
  double KI = 0;     // (E[X_1^2] + T - value) / 2
};

// kernel: row-stochastic m x n matrix; validated against the polytope at `tol`
QuantileObjective ibmot_objective_quantile(const IbmotProblem& p, const Matrix& kernel, double tol = 1e-7);

// Polytope residuals of a joint matrix pi: max over row sums, column sums, barycentres, negativity
double polytope_violation(const IbmotProblem& p, const Matrix& pi);

struct McObjective {
  double integral = 0, integral_se = 0;  // E int (X_1 - M_t)^2 sqrt(h2)/h3 dt
  double terminal = 0, terminal_se = 0;  // E[X_1 W_{T_1}]
  double diff_se = 0;                    // SE of the paired difference
  std::size_t n_paths = 0;
};

McObjective ibmot_objective_mc(const RapConfig& cfg, std::size_t n_paths, std::uint64_t seed);
McObjective ibmot_objective_mc(const IbmotProblem& p, const Matrix& kernel, std::size_t n_paths, std::uint64_t seed);

// randomized anticipative Brownian bridge on [0, T] carrying the discrete kernel
RapConfig ibmot_rap_template(const IbmotProblem& p, const Matrix& kernel);

// exact minimiser of <costs, pi> over the martingale transport polytope; returns pi
Matrix lp_oracle(const Matrix& costs, const IbmotProblem& p);

// barrier: feasible log-barrier Newton steps; frank_wolfe: pairwise Frank-Wolfe with golden-section search.
// Both are certified by the Frank-Wolfe duality gap from the LP oracle.
enum class IbmotMethod { barrier, frank_wolfe };

struct IbmotOptions {
  double gap = 1e-7;
  std::size_t max_iter = 5000;
  IbmotMethod method = IbmotMethod::barrier;
  // the start mixes the LP vertex for start_costs (default zero) with vertices maximising each
  // coordinate; equal weights, or random weights from stream "F" when start_seed != 0
  std::optional<Matrix> start_costs;
  std::uint64_t start_seed = 0;
};

struct IbmotSolution {
  Matrix kernel;  // gamma(i, j)
  Matrix pi;      // mu_i gamma(i, j)
  double objective_quantile = 0;
  double objective_KI = 0;
  std::size_t iterations = 0;
  double duality_gap = 0;
  bool converged = false;
  std::vector<double> history;  // objective after each iteration
};

IbmotSolution solve_ibmot(const IbmotProblem& p, const IbmotOptions& opts = {});

struct SegmentSearch {
  double objective = 0;
  Matrix kernel;
  std::size_t dimension = 0;  // 0 or 1
};

// dense grid search plus golden-section refinement over a polytope of dimension <= 1 (e.g. 2 x 3 instances)
SegmentSearch ibmot_segment_search(const IbmotProblem& p, std::size_t grid = 20001);

double coupling_correlation(const IbmotProblem& p, const Matrix& kernel);
Matrix kernel_from_joint(const IbmotProblem& p, const Matrix& pi);

}  // namespace arcade
