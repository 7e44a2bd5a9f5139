#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "arcade/driver.hpp"
#include "arcade/rng.hpp"

namespace arcade {

class DiscreteMarginal {
 public:
  DiscreteMarginal(std::vector<double> values, std::vector<double> weights);

  static DiscreteMarginal dirac(double x);
  // m equal-weight atoms at quantiles (k - 1/2)/m
  static DiscreteMarginal quantile_atoms(const std::function<double(double)>& q, std::size_t m);
  static DiscreteMarginal uniform(double a, double b, std::size_t m);
  static DiscreteMarginal normal(double mean, double var, std::size_t m);
  // merges repeated values, drops zero weights
  static DiscreteMarginal from_unsorted(std::vector<double> values, std::vector<double> weights);

  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return values_.size(); }
  double mean() const;
  double second_moment() const;
  double variance() const;
  double cdf(double x) const;
  // E[(X - k)^+]
  double call(double k) const;
  // index of an atom equal to x up to 1e-12 relative, or -1
  long index_of(double x) const;

 private:
  std::vector<double> values_, weights_;
};

struct ConvexOrderReport {
  bool ok = false;
  double mean_mu = 0, mean_nu = 0;
  double strike = 0;          // worst call-function strike
  double call_mu = 0, call_nu = 0;
  double violation = 0;       // max(C_mu(k) - C_nu(k))
  std::string witness() const;
};

ConvexOrderReport convex_order_report(const DiscreteMarginal& mu, const DiscreteMarginal& nu, double tol);
bool check_convex_order(const DiscreteMarginal& mu, const DiscreteMarginal& nu, double tol);

enum class CouplingKind { product, comonotone, antithetic, discrete_kernel, gaussian, brownian, affine_mixture };
const char* kind_name(CouplingKind k);

// Law of X_{m+1} given the history; discrete or Gaussian.
struct ConditionalLaw {
  bool gaussian = false;
  std::vector<double> values, probs;
  double mean = 0, var = 0;
  double expectation() const;
  double second_moment() const;
};

struct InitialLaw {
  enum class Kind { discrete, uniform, gaussian } kind = Kind::discrete;
  std::vector<double> values, weights;  // discrete
  double a = 0, b = 0;                   // uniform support or gaussian (mean, var)
};

struct ChainStep {
  enum class Kind { matrix, affine_mixture, gaussian } kind = Kind::matrix;
  // matrix: law of the next value given the current atom from[i] is gamma[i] over `to`
  std::vector<double> from, to;
  std::vector<std::vector<double>> gamma;
  // affine mixture: next = slope[k] * x + shift[k] with probability prob[k]
  std::vector<double> slope, shift, prob;
  // gaussian: next = c0 + c1 * x + N(0, v)
  double c0 = 0, c1 = 1, v = 0;
};

// Markov chain law of (X_0, ..., X_n).
class CouplingKernel {
 public:
  CouplingKernel(CouplingKind kind, std::string name, InitialLaw init, std::vector<ChainStep> steps);

  static CouplingKernel discrete_kernel(const DiscreteMarginal& mu0, std::vector<double> values_nu,
                                        std::vector<std::vector<double>> gamma);
  static CouplingKernel discrete_chain(const DiscreteMarginal& mu0, std::vector<ChainStep> steps);
  static CouplingKernel product(const std::vector<DiscreteMarginal>& marginals);
  static CouplingKernel comonotone(const std::vector<DiscreteMarginal>& marginals);
  static CouplingKernel antithetic(const DiscreteMarginal& mu0, std::size_t n);
  // joint Gaussian with Markov covariance structure
  static CouplingKernel gaussian(const std::vector<double>& mean, const std::vector<std::vector<double>>& cov);
  static CouplingKernel brownian(double sigma2, double T);
  static CouplingKernel affine_mixture(InitialLaw init, std::vector<double> slope, std::vector<double> shift,
                                       std::vector<double> prob, std::string name = "affine_mixture");
  static CouplingKernel constant(double x, std::size_t n);

  CouplingKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  std::size_t n() const { return steps_.size(); }
  const InitialLaw& initial() const { return init_; }
  const std::vector<ChainStep>& steps() const { return steps_; }

  // law of X_{m+1} given x_0..x_m
  ConditionalLaw conditional(std::size_t m, const double* history) const;
  // true when X_{m+1},...,X_n are discrete given any history
  bool discrete_from(std::size_t m) const;
  bool continuous_initial() const { return init_.kind != InitialLaw::Kind::discrete; }

  void sample(Rng& rng, double* out) const;

  double martingale_defect() const;
  bool is_martingale() const { return martingale_defect() <= 1e-9; }

  double initial_mean() const;
  double initial_second_moment() const;

  // marginals of a discretized copy (continuous initial laws use `atoms` quantile atoms)
  std::vector<DiscreteMarginal> induced_marginals(std::size_t atoms = 200) const;
  // same chain with a continuous initial law replaced by quantile atoms
  CouplingKernel discretized(std::size_t atoms) const;

 private:
  CouplingKind kind_;
  std::string name_;
  InitialLaw init_;
  std::vector<ChainStep> steps_;
};

RowMatrix sample_coupling(const CouplingKernel& k, std::size_t n_samples, std::uint64_t seed);

std::map<std::string, CouplingKernel> builtin_kernels();
CouplingKernel builtin_kernel(const std::string& name);

}  // namespace arcade
