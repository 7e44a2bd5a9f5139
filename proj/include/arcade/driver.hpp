#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "arcade/coefficients.hpp"
#include "arcade/partition.hpp"

namespace arcade {

// Gauss-Markov driver with K_D(s,t) = H1(min(s,t)) H2(max(s,t)).
class GaussMarkovDriver {
 public:
  GaussMarkovDriver(ScalarFn h1, ScalarFn h2, ScalarFn mean, std::string label, ScalarFn dh1 = {}, ScalarFn dh2 = {},
                    ScalarFn dmean = {});

  static GaussMarkovDriver brownian();
  static GaussMarkovDriver ou(double theta, double sigma, double mu = 0.0, double d0 = 0.0, double t0 = 0.0);
  static GaussMarkovDriver scaled_bm();

  double h1(double t) const { return h1_(t); }
  double h2(double t) const { return h2_(t); }
  double mean(double t) const { return mean_(t); }
  double dh1(double t) const;
  double dh2(double t) const;
  double dmean(double t) const;

  double covariance(double s, double t) const;
  double variance(double t) const { return covariance(t, t); }
  CovarianceFactors factors() const;

  const std::string& label() const { return label_; }
  const std::map<std::string, double>& params() const { return params_; }
  double domain_lo() const { return lo_; }

  // checks variance >= 0, monotone H1/H2, and Var + mean^2 > 0 at interior nodes
  void validate_on(const Partition& p) const;

 private:
  double numeric_derivative(const ScalarFn& f, double t) const;
  void check_domain(double t) const;

  ScalarFn h1_, h2_, mean_, dh1_, dh2_, dmean_;
  std::string label_;
  std::map<std::string, double> params_;
  double lo_ = 0.0;
};

double driver_covariance(const GaussMarkovDriver& d, double s, double t);

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PathBundle {
  std::vector<double> grid;
  RowMatrix values;  // path x node
  std::uint64_t seed = 0;
  std::map<std::string, std::string> meta;

  std::size_t n_paths() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t n_nodes() const { return grid.size(); }
  void write_csv(std::ostream& os) const;
};

// Exact sequential sampler on a fixed grid; one independent stream per path.
class DriverSampler {
 public:
  DriverSampler(const GaussMarkovDriver& d, const std::vector<double>& grid);
  // fills out[0..grid.size()) with path `index` of stream "D" under `seed`
  void sample(std::uint64_t seed, std::uint64_t index, double* out) const;

 private:
  std::vector<double> mean_, coef_, sd_;
  std::vector<char> restart_;
};

PathBundle simulate_driver(const GaussMarkovDriver& d, const Partition& p, std::size_t n_paths, std::uint64_t seed);

// int_{T_0}^t (H1' H2 - H1 H2') ds, composite trapezoid on the grid
double driver_quadratic_variation(const GaussMarkovDriver& d, const Partition& p, double t);

// shortest round-trip decimal
std::string format_double(double x);

}  // namespace arcade
