#include "arcade/arcade.hpp"

#include <algorithm>
#include <cmath>

#include "arcade/errors.hpp"
#include "arcade/parallel.hpp"

namespace arcade {

ArcadeConfig::ArcadeConfig(GaussMarkovDriver driver, CoefficientSet coeffs)
    : driver_(std::move(driver)), coeffs_(std::move(coeffs)) {
  const auto rep = validate_coefficient_set(coeffs_, 1e-9);
  if (!rep.pass)
    throw ConfigError("noise coefficients fail validation (diag " + std::to_string(rep.max_diag_error) + ", offdiag " +
                      std::to_string(rep.max_offdiag) + ", continuity " + std::to_string(rep.continuity_modulus) +
                      ")");
  const Partition& p = partition();
  driver_.validate_on(p);
  const auto& T = p.dates();
  const std::size_t n1 = T.size();
  mu_dates_.resize(n1);
  k_dates_.resize(static_cast<Eigen::Index>(n1), static_cast<Eigen::Index>(n1));
  for (std::size_t i = 0; i < n1; ++i) {
    mu_dates_[i] = driver_.mean(T[i]);
    for (std::size_t j = 0; j < n1; ++j)
      k_dates_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = driver_.covariance(T[i], T[j]);
  }
  const auto& g = p.grid();
  f_grid_.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(n1));
  mean_grid_.resize(g.size());
  var_grid_.resize(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    auto f = coeffs_.eval_all(g[k]);
    for (std::size_t i = 0; i < n1; ++i) f_grid_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = f[i];
    mean_grid_[k] = mean(g[k]);
    var_grid_[k] = cov(g[k], g[k]);
  }
}

double ArcadeConfig::mean(double t) const {
  auto f = coeffs_.eval_all(t);
  double m = driver_.mean(t);
  for (std::size_t i = 0; i < f.size(); ++i) m -= f[i] * mu_dates_[i];
  return m;
}

double ArcadeConfig::cov(double s, double t) const {
  const auto& T = partition().dates();
  const auto fs = coeffs_.eval_all(s);
  const auto ft = coeffs_.eval_all(t);
  const std::size_t n1 = T.size();
  double c = driver_.covariance(s, t);
  for (std::size_t i = 0; i < n1; ++i)
    c -= ft[i] * driver_.covariance(s, T[i]) + fs[i] * driver_.covariance(t, T[i]);
  for (std::size_t i = 0; i < n1; ++i) {
    if (fs[i] == 0.0) continue;
    double row = 0;
    for (std::size_t j = 0; j < n1; ++j) row += ft[j] * k_dates_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    c += fs[i] * row;
  }
  return c;
}

void ArcadeConfig::pin(const double* d, double* a) const {
  const Partition& p = partition();
  const std::size_t n1 = p.n() + 1, nodes = p.n_nodes();
  double dT[64];
  std::vector<double> big;
  double* dt = dT;
  if (n1 > 64) {
    big.resize(n1);
    dt = big.data();
  }
  for (std::size_t i = 0; i < n1; ++i) dt[i] = d[p.node_of_date(i)];
  for (std::size_t k = 0; k < nodes; ++k) {
    const double* f = f_grid_.row(static_cast<Eigen::Index>(k)).data();
    double s = d[k];
    for (std::size_t i = 0; i < n1; ++i) s -= f[i] * dt[i];
    a[k] = s;
  }
}

ApMoments ap_moments(const ArcadeConfig& cfg, double s, double t) {
  if (!cfg.partition().contains(s) || !cfg.partition().contains(t)) throw DomainError("ap_moments time outside [T_0, T_n]");
  return {cfg.mean(s), cfg.mean(t), cfg.cov(s, t)};
}

PathBundle build_ap_paths(const ArcadeConfig& cfg, const PathBundle& driver_paths) {
  if (driver_paths.grid != cfg.partition().grid()) throw ConfigError("driver paths grid does not match the partition grid");
  PathBundle out;
  out.grid = driver_paths.grid;
  out.seed = driver_paths.seed;
  out.meta = driver_paths.meta;
  out.meta["process"] = "ap";
  out.meta["coefficients"] = family_name(cfg.coeffs().family());
  out.values.resize(driver_paths.values.rows(), driver_paths.values.cols());
  parallel_for(driver_paths.n_paths(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      cfg.pin(driver_paths.values.row(r).data(), out.values.row(r).data());
    }
  });
  return out;
}

CoefficientSet standard_coefficients(const GaussMarkovDriver& d, const Partition& p) {
  d.validate_on(p);
  const auto k = d.factors();
  std::optional<CoefficientSet> set;
  try {
    set = CoefficientSet::standard(p, k);
  } catch (const ConfigError&) {
    set = CoefficientSet::gram(p, k);
  }
  // post-condition: sum_j f_j(t) K(T_i,T_j) = K(t,T_i)
  const auto& T = p.dates();
  double scale = 0;
  for (double t : p.grid()) scale = std::max(scale, std::abs(d.variance(t)));
  double worst = 0;
  for (double t : p.grid()) {
    auto f = set->eval_all(t);
    for (std::size_t i = 0; i < T.size(); ++i) {
      double lhs = 0;
      for (std::size_t j = 0; j < T.size(); ++j) lhs += f[j] * d.covariance(T[i], T[j]);
      worst = std::max(worst, std::abs(lhs - d.covariance(t, T[i])));
    }
  }
  if (worst > 1e-9 * std::max(1.0, scale))
    throw NumericError("standard coefficients violate the Gram relation by " + std::to_string(worst));
  return *set;
}

namespace {

// f(0) from samples at jδ, j=1..4 (cubic extrapolation)
double extrapolate0(const double y[4]) { return 4 * y[0] - 6 * y[1] + 4 * y[2] - y[3]; }

}  // namespace

FactorizationReport markov_factorization_check(const ArcadeConfig& cfg, double tol) {
  constexpr double floor = 1e-14;
  constexpr int kSamples = 7;
  FactorizationReport rep;
  rep.tol = tol;
  const Partition& p = cfg.partition();
  const auto& T = p.dates();
  const std::size_t n = p.n();

  std::vector<std::vector<double>> nodes(n);
  for (std::size_t m = 0; m < n; ++m)
    for (int k = 1; k <= kSamples; ++k)
      nodes[m].push_back(T[m] + (T[m + 1] - T[m]) * k / static_cast<double>(kSamples + 1));

  for (std::size_t m = 0; m < n; ++m) {
    const auto& x = nodes[m];
    std::vector<std::vector<double>> K(kSamples, std::vector<double>(kSamples));
    for (int a = 0; a < kSamples; ++a)
      for (int b = a; b < kSamples; ++b) K[a][b] = K[b][a] = cfg.cov(x[a], x[b]);
    for (int r = 0; r < kSamples; ++r)
      for (int s = r; s < kSamples; ++s)
        for (int t = s + 1; t < kSamples; ++t) {
          const double u = K[r][t] * K[s][s], v = K[r][s] * K[s][t];
          const double res = std::abs(u - v) / std::max({std::abs(u), std::abs(v), floor});
          rep.max_residual = std::max(rep.max_residual, res);
        }
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (double s : nodes[a])
        for (double t : nodes[b]) rep.cross_arc_max = std::max(rep.cross_arc_max, std::abs(cfg.cov(s, t)));

  rep.pass = rep.max_residual <= tol && rep.cross_arc_max <= tol;
  if (!rep.pass) return rep;

  Factorization fz;
  const std::size_t steps = p.steps_per_arc();
  fz.A1.assign(n, std::vector<double>(steps + 1, 0.0));
  fz.A2.assign(n, std::vector<double>(steps + 1, 0.0));
  for (std::size_t m = 0; m < n; ++m) {
    const double a = T[m], b = T[m + 1], L = b - a;
    const double mid = 0.5 * (a + b);
    const double kmm = cfg.cov(mid, mid);
    if (!(kmm > floor)) continue;
    fz.per_arc.push_back(m);
    auto A1 = [&](double x) {
      if (x <= mid) return cfg.cov(x, mid);
      return cfg.cov(x, x) * kmm / cfg.cov(mid, x);
    };
    auto A2 = [&](double x) {
      if (x >= mid) return cfg.cov(mid, x) / kmm;
      return cfg.cov(x, x) / cfg.cov(x, mid);
    };
    const double delta = std::min(1e-3 * L, L / static_cast<double>(steps) / 8.0);
    for (std::size_t k = 0; k <= steps; ++k) {
      const double x = (k == steps) ? b : a + L * static_cast<double>(k) / static_cast<double>(steps);
      if (k == 0) {
        fz.A1[m][k] = 0.0;
        double y[4];
        for (int j = 0; j < 4; ++j) y[j] = A2(a + (j + 1) * delta);
        fz.A2[m][k] = extrapolate0(y);
      } else if (k == steps) {
        fz.A2[m][k] = 0.0;
        double y[4];
        for (int j = 0; j < 4; ++j) y[j] = A1(b - (j + 1) * delta);
        fz.A1[m][k] = extrapolate0(y);
      } else {
        fz.A1[m][k] = A1(x);
        fz.A2[m][k] = A2(x);
      }
    }
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < steps; ++k) {
      const double r = fz.A1[m][k] / fz.A2[m][k];
      if (r < prev - 1e-9 * std::abs(prev)) fz.monotone_ratio = false;
      prev = r;
    }
  }
  rep.factorization = std::move(fz);
  return rep;
}

}  // namespace arcade
