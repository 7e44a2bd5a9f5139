#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "arcade/rap.hpp"

namespace arcade {

// reduced: filter X_{m(t)+1} only (needs g_j = 0 on [T_0, T_{j-1}] and a martingale coupling)
// full: condition on the whole future of the chain and return E[X_n | ...]
enum class FilterMode { automatic, reduced, full };

// continuous targets: Simpson quadrature, or the Gaussian conjugate update
enum class ContinuousMethod { quadrature, conjugate };

struct Posterior {
  double mean = 0, second = 0;
  bool fallback = false;  // nearest-atom fallback was used
  double var() const { return second > mean * mean ? second - mean * mean : 0.0; }
};

class FamFilter {
 public:
  explicit FamFilter(const RapConfig& cfg, FilterMode mode = FilterMode::automatic,
                     ContinuousMethod method = ContinuousMethod::quadrature);

  const RapConfig& config() const { return cfg_; }
  bool reduced() const { return reduced_; }
  bool martingale() const { return martingale_; }

  // hist holds X_0..X_{m(t)}; at a date T_i < T_n the result is the prior given hist (right limit)
  Posterior at(double t, double I, const double* hist) const;
  Posterior at_node(std::size_t k, double I, const double* hist) const;

  std::size_t fallback_count() const { return fallbacks_.load(); }

 private:
  Posterior interior(std::size_t m, const double* g, double mu_a, double var_a, double I, const double* hist) const;
  Posterior prior(std::size_t m, const double* hist) const;

  const RapConfig& cfg_;
  bool reduced_ = false, martingale_ = false;
  ContinuousMethod method_;
  mutable std::atomic<std::size_t> fallbacks_{0};
};

double fam_filter_discrete(const RapConfig& cfg, double t, double I, const std::vector<double>& x_observed,
                           FilterMode mode = FilterMode::automatic);
double fam_filter_continuous(const RapConfig& cfg, double t, double I, const std::vector<double>& x_observed);

// Var[X_{m+1} | ...] sqrt(h2(t)) / h3(t); standard RAPs only, t strictly inside an arc
double fam_volatility(const RapConfig& cfg, double t, double I, const std::vector<double>& x_observed, double M);

// sqrt(h2(t)) / h3(t) on the arc containing t (t < T_n)
double fam_vol_factor(const RapConfig& cfg, double t);

struct FamPathView {
  const double* I;
  const double* X;
  const double* M;
  const double* W;    // null unless innovations are available
  const double* vol;  // null unless innovations are available
};

struct FamRunInfo {
  bool reduced = false;
  bool innovations = false;
  std::size_t fallbacks = 0;
};

// Streams paths in index order; blocks are filtered in parallel.
FamRunInfo fam_for_each(const RapConfig& cfg, std::size_t n_paths, std::uint64_t seed,
                        const std::function<void(std::size_t, const FamPathView&)>& visit,
                        FilterMode mode = FilterMode::automatic);

struct FamTrace {
  std::vector<double> grid;
  RowMatrix I, M, W, vol;  // path x node; W and vol hold NaN without innovations
  RowMatrix X;             // path x (n+1)
  std::uint64_t seed = 0;
  FamRunInfo info;

  std::size_t n_paths() const { return static_cast<std::size_t>(M.rows()); }
  // columns t, I, M, W, vol
  void write_csv(std::ostream& os, std::size_t path) const;
};

FamTrace fam_paths(const RapConfig& cfg, std::size_t n_paths, std::uint64_t seed,
                   FilterMode mode = FilterMode::automatic);

// left-point Euler for the dt integrals, exact increments of I and of the signal terms
void innovations(const RapConfig& cfg, const double* I, const double* X, const double* M, double* W);
std::vector<double> innovations_path(const RapConfig& cfg, const FamTrace& trace, std::size_t path);

struct IsometryReport {
  double lhs = 0, lhs_se = 0;  // E[(X_n - X_0)^2]
  double rhs = 0, rhs_se = 0;  // E[int vol^2 dt], trapezoid on the grid
  double diff_se = 0;          // SE of the paired difference
  double z = 0;                // (lhs - rhs) / diff_se, 0 when both are exact
};

IsometryReport ito_isometry_check(const RapConfig& cfg, std::size_t n_paths, std::uint64_t seed);

}  // namespace arcade
