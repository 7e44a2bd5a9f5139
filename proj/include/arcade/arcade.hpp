#pragma once

#include <optional>
#include <vector>

#include "arcade/coefficients.hpp"
#include "arcade/driver.hpp"
#include "arcade/partition.hpp"

namespace arcade {

// Driver plus noise coefficients; grid caches are filled once at construction.
class ArcadeConfig {
 public:
  ArcadeConfig(GaussMarkovDriver driver, CoefficientSet coeffs);

  const GaussMarkovDriver& driver() const { return driver_; }
  const CoefficientSet& coeffs() const { return coeffs_; }
  const Partition& partition() const { return coeffs_.partition(); }

  double mean(double t) const;
  double cov(double s, double t) const;
  double variance(double t) const { return cov(t, t); }

  // values on the partition grid
  const RowMatrix& f_grid() const { return f_grid_; }  // node x coefficient
  const std::vector<double>& mean_grid() const { return mean_grid_; }
  const std::vector<double>& var_grid() const { return var_grid_; }

  // a[k] = d[k] - sum_i f_i(t_k) d[node(T_i)]
  void pin(const double* d, double* a) const;

 private:
  GaussMarkovDriver driver_;
  CoefficientSet coeffs_;
  std::vector<double> mu_dates_;
  Eigen::MatrixXd k_dates_;
  RowMatrix f_grid_;
  std::vector<double> mean_grid_, var_grid_;
};

struct ApMoments {
  double mean_s = 0, mean_t = 0, cov = 0;
};

ApMoments ap_moments(const ArcadeConfig& cfg, double s, double t);

PathBundle build_ap_paths(const ArcadeConfig& cfg, const PathBundle& driver_paths);

// closed form when every arc is non-degenerate, otherwise the Gram system
CoefficientSet standard_coefficients(const GaussMarkovDriver& d, const Partition& p);

struct Factorization {
  // per arc, sampled at the arc's steps_per_arc+1 grid nodes (both endpoints; endpoint values are one-sided limits)
  std::vector<std::vector<double>> A1, A2;
  std::vector<std::size_t> per_arc;
  bool monotone_ratio = true;  // A1/A2 non-decreasing inside every valid arc
};

struct FactorizationReport {
  bool pass = false;
  double max_residual = 0;
  double cross_arc_max = 0;
  double tol = 0;
  std::optional<Factorization> factorization;
};

FactorizationReport markov_factorization_check(const ArcadeConfig& cfg, double tol = 1e-8);

}  // namespace arcade
