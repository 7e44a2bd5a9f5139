#include "arcade/coupling.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "arcade/errors.hpp"
#include "arcade/parallel.hpp"

namespace arcade {

// ---------------------------------------------------------------- marginals

DiscreteMarginal::DiscreteMarginal(std::vector<double> values, std::vector<double> weights)
    : values_(std::move(values)), weights_(std::move(weights)) {
  if (values_.empty()) throw ConfigError("marginal needs at least one atom");
  if (values_.size() != weights_.size()) throw ConfigError("marginal values/weights length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]) || !std::isfinite(weights_[i])) throw ConfigError("marginal has non-finite entries");
    if (!(weights_[i] > 0)) throw ConfigError("marginal weights must be positive");
    if (i > 0 && !(values_[i] > values_[i - 1])) throw ConfigError("marginal values must be strictly increasing");
    s += weights_[i];
  }
  if (std::abs(s - 1.0) > 1e-12) throw ConfigError("marginal weights must sum to 1 (got " + std::to_string(s) + ")");
}

DiscreteMarginal DiscreteMarginal::dirac(double x) { return DiscreteMarginal({x}, {1.0}); }

DiscreteMarginal DiscreteMarginal::quantile_atoms(const std::function<double(double)>& q, std::size_t m) {
  if (m == 0) throw ConfigError("quantile discretization needs m >= 1");
  std::vector<double> v(m), w(m, 1.0 / static_cast<double>(m));
  for (std::size_t k = 0; k < m; ++k) v[k] = q((static_cast<double>(k) + 0.5) / static_cast<double>(m));
  double s = std::accumulate(w.begin(), w.end(), 0.0);
  w.back() += 1.0 - s;
  return DiscreteMarginal(std::move(v), std::move(w));
}

DiscreteMarginal DiscreteMarginal::uniform(double a, double b, std::size_t m) {
  if (!(b > a)) throw ConfigError("uniform marginal needs a < b");
  return quantile_atoms([=](double u) { return a + (b - a) * u; }, m);
}

DiscreteMarginal DiscreteMarginal::normal(double mean, double var, std::size_t m) {
  if (!(var > 0)) throw ConfigError("normal marginal needs positive variance");
  boost::math::normal_distribution<double> nd(mean, std::sqrt(var));
  // symmetric construction keeps the mean exact
  auto q = [&](double u) {
    if (u > 0.5) return 2 * mean - boost::math::quantile(nd, 1.0 - u);
    return boost::math::quantile(nd, u);
  };
  return quantile_atoms(q, m);
}

DiscreteMarginal DiscreteMarginal::from_unsorted(std::vector<double> values, std::vector<double> weights) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> v, w;
  for (std::size_t i : idx) {
    if (!(weights[i] > 0)) continue;
    const double x = values[i];
    if (!v.empty() && std::abs(x - v.back()) <= 1e-12 * std::max(1.0, std::abs(x)))
      w.back() += weights[i];
    else {
      v.push_back(x);
      w.push_back(weights[i]);
    }
  }
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= s;
  return DiscreteMarginal(std::move(v), std::move(w));
}

double DiscreteMarginal::mean() const {
  double s = 0;
  for (std::size_t i = 0; i < size(); ++i) s += weights_[i] * values_[i];
  return s;
}

double DiscreteMarginal::second_moment() const {
  double s = 0;
  for (std::size_t i = 0; i < size(); ++i) s += weights_[i] * values_[i] * values_[i];
  return s;
}

double DiscreteMarginal::variance() const {
  const double m = mean();
  double s = 0;
  for (std::size_t i = 0; i < size(); ++i) s += weights_[i] * (values_[i] - m) * (values_[i] - m);
  return s;
}

double DiscreteMarginal::cdf(double x) const {
  double s = 0;
  for (std::size_t i = 0; i < size() && values_[i] <= x; ++i) s += weights_[i];
  return s;
}

double DiscreteMarginal::call(double k) const {
  double s = 0;
  for (std::size_t i = 0; i < size(); ++i)
    if (values_[i] > k) s += weights_[i] * (values_[i] - k);
  return s;
}

long DiscreteMarginal::index_of(double x) const {
  auto it = std::lower_bound(values_.begin(), values_.end(), x);
  const double tol = 1e-12 * std::max(1.0, std::abs(x));
  if (it != values_.end() && std::abs(*it - x) <= tol) return static_cast<long>(it - values_.begin());
  if (it != values_.begin() && std::abs(*(it - 1) - x) <= tol) return static_cast<long>(it - values_.begin()) - 1;
  return -1;
}

std::string ConvexOrderReport::witness() const {
  std::ostringstream os;
  os.precision(12);
  if (ok)
    os << "convex order holds (worst call margin " << violation << " at k = " << strike << ")";
  else if (std::abs(mean_mu - mean_nu) > 0 && violation <= 0)
    os << "means differ: E_mu = " << mean_mu << ", E_nu = " << mean_nu;
  else
    os << "call function C_mu(k) = " << call_mu << " exceeds C_nu(k) = " << call_nu << " at k = " << strike
       << " (means " << mean_mu << " vs " << mean_nu << ")";
  return os.str();
}

ConvexOrderReport convex_order_report(const DiscreteMarginal& mu, const DiscreteMarginal& nu, double tol) {
  ConvexOrderReport r;
  r.mean_mu = mu.mean();
  r.mean_nu = nu.mean();
  r.violation = -std::numeric_limits<double>::infinity();
  std::vector<double> strikes = mu.values();
  strikes.insert(strikes.end(), nu.values().begin(), nu.values().end());
  for (double k : strikes) {
    const double cm = mu.call(k), cn = nu.call(k);
    if (cm - cn > r.violation) {
      r.violation = cm - cn;
      r.strike = k;
      r.call_mu = cm;
      r.call_nu = cn;
    }
  }
  const bool means_ok = std::abs(r.mean_mu - r.mean_nu) <= tol;
  if (!means_ok) r.violation = std::max(r.violation, 0.0);
  r.ok = means_ok && r.violation <= tol;
  if (!means_ok && r.call_mu <= r.call_nu + tol) r.violation = 0.0;
  return r;
}

bool check_convex_order(const DiscreteMarginal& mu, const DiscreteMarginal& nu, double tol) {
  return convex_order_report(mu, nu, tol).ok;
}

// ---------------------------------------------------------------- laws

double ConditionalLaw::expectation() const {
  if (gaussian) return mean;
  double s = 0;
  for (std::size_t i = 0; i < values.size(); ++i) s += probs[i] * values[i];
  return s;
}

double ConditionalLaw::second_moment() const {
  if (gaussian) return var + mean * mean;
  double s = 0;
  for (std::size_t i = 0; i < values.size(); ++i) s += probs[i] * values[i] * values[i];
  return s;
}

const char* kind_name(CouplingKind k) {
  switch (k) {
    case CouplingKind::product: return "product";
    case CouplingKind::comonotone: return "comonotone";
    case CouplingKind::antithetic: return "antithetic";
    case CouplingKind::discrete_kernel: return "discrete_kernel";
    case CouplingKind::gaussian: return "gaussian";
    case CouplingKind::brownian: return "brownian";
    case CouplingKind::affine_mixture: return "affine_mixture";
  }
  return "unknown";
}

namespace {

long find_atom(const std::vector<double>& v, double x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  const double tol = 1e-12 * std::max(1.0, std::abs(x));
  if (it != v.end() && std::abs(*it - x) <= tol) return static_cast<long>(it - v.begin());
  if (it != v.begin() && std::abs(*(it - 1) - x) <= tol) return static_cast<long>(it - v.begin()) - 1;
  return -1;
}

void validate_step(const ChainStep& s, std::size_t m) {
  const std::string where = "coupling step " + std::to_string(m) + ": ";
  switch (s.kind) {
    case ChainStep::Kind::matrix: {
      if (s.gamma.size() != s.from.size()) throw ConfigError(where + "gamma needs one row per source atom");
      for (std::size_t i = 1; i < s.from.size(); ++i)
        if (!(s.from[i] > s.from[i - 1])) throw ConfigError(where + "source atoms must be strictly increasing");
      for (std::size_t j = 1; j < s.to.size(); ++j)
        if (!(s.to[j] > s.to[j - 1])) throw ConfigError(where + "target atoms must be strictly increasing");
      for (const auto& row : s.gamma) {
        if (row.size() != s.to.size()) throw ConfigError(where + "gamma row length must equal the target atom count");
        double sum = 0;
        for (double g : row) {
          if (!(g >= 0) || !std::isfinite(g)) throw ConfigError(where + "gamma entries must be non-negative");
          sum += g;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw ConfigError(where + "gamma rows must sum to 1");
      }
      break;
    }
    case ChainStep::Kind::affine_mixture: {
      if (s.slope.size() != s.shift.size() || s.slope.size() != s.prob.size() || s.prob.empty())
        throw ConfigError(where + "affine mixture arrays must have equal, positive length");
      double sum = 0;
      for (double p : s.prob) {
        if (!(p >= 0)) throw ConfigError(where + "mixture probabilities must be non-negative");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12) throw ConfigError(where + "mixture probabilities must sum to 1");
      break;
    }
    case ChainStep::Kind::gaussian:
      if (!(s.v >= 0) || !std::isfinite(s.c0) || !std::isfinite(s.c1))
        throw ConfigError(where + "gaussian step needs finite coefficients and v >= 0");
      break;
  }
}

ChainStep matrix_step(std::vector<double> from, std::vector<double> to, std::vector<std::vector<double>> gamma) {
  ChainStep s;
  s.kind = ChainStep::Kind::matrix;
  s.from = std::move(from);
  s.to = std::move(to);
  s.gamma = std::move(gamma);
  return s;
}

InitialLaw discrete_initial(const DiscreteMarginal& mu) {
  InitialLaw l;
  l.kind = InitialLaw::Kind::discrete;
  l.values = mu.values();
  l.weights = mu.weights();
  return l;
}

// quantile-overlap matrix of the comonotone coupling
std::vector<std::vector<double>> comonotone_gamma(const DiscreteMarginal& a, const DiscreteMarginal& b) {
  std::vector<std::vector<double>> g(a.size(), std::vector<double>(b.size(), 0.0));
  double ca = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double lo = ca, hi = ca + a.weights()[i];
    double cb = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double l2 = cb, h2 = cb + b.weights()[j];
      const double ov = std::min(hi, h2) - std::max(lo, l2);
      if (ov > 0) g[i][j] = ov / a.weights()[i];
      cb = h2;
    }
    double s = std::accumulate(g[i].begin(), g[i].end(), 0.0);
    for (double& x : g[i]) x /= s;
    ca = hi;
  }
  return g;
}

}  // namespace

CouplingKernel::CouplingKernel(CouplingKind kind, std::string name, InitialLaw init, std::vector<ChainStep> steps)
    : kind_(kind), name_(std::move(name)), init_(std::move(init)), steps_(std::move(steps)) {
  switch (init_.kind) {
    case InitialLaw::Kind::discrete: DiscreteMarginal(init_.values, init_.weights); break;
    case InitialLaw::Kind::uniform:
      if (!(init_.b > init_.a)) throw ConfigError("uniform initial law needs a < b");
      break;
    case InitialLaw::Kind::gaussian:
      if (!(init_.b >= 0)) throw ConfigError("gaussian initial law needs variance >= 0");
      break;
  }
  for (std::size_t m = 0; m < steps_.size(); ++m) {
    validate_step(steps_[m], m);
    if (steps_[m].kind == ChainStep::Kind::matrix) {
      const bool prev_discrete =
          m == 0 ? init_.kind == InitialLaw::Kind::discrete : steps_[m - 1].kind == ChainStep::Kind::matrix;
      if (!prev_discrete) throw ConfigError("matrix step must follow a discrete matrix-valued law");
      const auto& prev = m == 0 ? init_.values : steps_[m - 1].to;
      for (double x : prev)
        if (find_atom(steps_[m].from, x) < 0)
          throw ConfigError("coupling step " + std::to_string(m) + ": atom " + std::to_string(x) +
                            " has no kernel row");
    }
  }
}

CouplingKernel CouplingKernel::discrete_kernel(const DiscreteMarginal& mu0, std::vector<double> values_nu,
                                               std::vector<std::vector<double>> gamma) {
  return CouplingKernel(CouplingKind::discrete_kernel, "discrete_kernel", discrete_initial(mu0),
                        {matrix_step(mu0.values(), std::move(values_nu), std::move(gamma))});
}

CouplingKernel CouplingKernel::discrete_chain(const DiscreteMarginal& mu0, std::vector<ChainStep> steps) {
  return CouplingKernel(CouplingKind::discrete_kernel, "discrete_chain", discrete_initial(mu0), std::move(steps));
}

CouplingKernel CouplingKernel::product(const std::vector<DiscreteMarginal>& marginals) {
  if (marginals.size() < 2) throw ConfigError("product coupling needs at least two marginals");
  std::vector<ChainStep> steps;
  for (std::size_t m = 0; m + 1 < marginals.size(); ++m)
    steps.push_back(matrix_step(marginals[m].values(), marginals[m + 1].values(),
                                std::vector<std::vector<double>>(marginals[m].size(), marginals[m + 1].weights())));
  return CouplingKernel(CouplingKind::product, "product", discrete_initial(marginals[0]), std::move(steps));
}

CouplingKernel CouplingKernel::comonotone(const std::vector<DiscreteMarginal>& marginals) {
  if (marginals.size() < 2) throw ConfigError("comonotone coupling needs at least two marginals");
  std::vector<ChainStep> steps;
  for (std::size_t m = 0; m + 1 < marginals.size(); ++m)
    steps.push_back(matrix_step(marginals[m].values(), marginals[m + 1].values(),
                                comonotone_gamma(marginals[m], marginals[m + 1])));
  return CouplingKernel(CouplingKind::comonotone, "comonotone", discrete_initial(marginals[0]), std::move(steps));
}

CouplingKernel CouplingKernel::antithetic(const DiscreteMarginal& mu0, std::size_t n) {
  if (n == 0) throw ConfigError("antithetic chain needs n >= 1");
  std::vector<ChainStep> steps;
  std::vector<double> cur = mu0.values();
  for (std::size_t m = 0; m < n; ++m) {
    std::vector<double> next(cur.rbegin(), cur.rend());
    for (double& x : next) x = -x;
    const std::size_t k = cur.size();
    std::vector<std::vector<double>> g(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) g[i][k - 1 - i] = 1.0;
    steps.push_back(matrix_step(cur, next, std::move(g)));
    cur = std::move(next);
  }
  return CouplingKernel(CouplingKind::antithetic, "antithetic", discrete_initial(mu0), std::move(steps));
}

CouplingKernel CouplingKernel::gaussian(const std::vector<double>& mean, const std::vector<std::vector<double>>& cov) {
  const std::size_t d = mean.size();
  if (d < 2 || cov.size() != d) throw ConfigError("gaussian coupling needs matching mean (length >= 2) and covariance");
  for (const auto& row : cov)
    if (row.size() != d) throw ConfigError("gaussian coupling covariance must be square");
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (std::abs(cov[i][j] - cov[j][i]) > 1e-12 * std::max(1.0, std::abs(cov[i][j])))
        throw ConfigError("gaussian coupling covariance must be symmetric");
  Eigen::MatrixXd C(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) C(i, j) = cov[i][j];
  Eigen::LDLT<Eigen::MatrixXd> ldlt(C + 1e-12 * Eigen::MatrixXd::Identity(d, d));
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < -1e-12).any())
    throw ConfigError("gaussian coupling covariance is not positive semi-definite");
  // chains in X only: cov(i,k) cov(j,j) = cov(i,j) cov(j,k), i < j < k
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      for (std::size_t k = j + 1; k < d; ++k) {
        const double l = C(i, k) * C(j, j), r = C(i, j) * C(j, k);
        if (std::abs(l - r) > 1e-10 * std::max({1.0, std::abs(l), std::abs(r)}))
          throw ConfigError("gaussian coupling must be Markov in X for n >= 2");
      }
  InitialLaw init;
  init.kind = InitialLaw::Kind::gaussian;
  init.a = mean[0];
  init.b = C(0, 0);
  std::vector<ChainStep> steps;
  for (std::size_t m = 0; m + 1 < d; ++m) {
    ChainStep s;
    s.kind = ChainStep::Kind::gaussian;
    if (C(m, m) > 0) {
      s.c1 = C(m, m + 1) / C(m, m);
      s.v = std::max(0.0, C(m + 1, m + 1) - C(m, m + 1) * s.c1);
    } else {
      s.c1 = 0;
      s.v = C(m + 1, m + 1);
    }
    s.c0 = mean[m + 1] - s.c1 * mean[m];
    steps.push_back(s);
  }
  return CouplingKernel(CouplingKind::gaussian, "gaussian", init, std::move(steps));
}

CouplingKernel CouplingKernel::brownian(double sigma2, double T) {
  if (!(sigma2 >= 0) || !(T > 0)) throw ConfigError("brownian coupling needs sigma^2 >= 0 and T > 0");
  auto k = gaussian({0.0, 0.0}, {{sigma2, sigma2}, {sigma2, sigma2 + T}});
  return CouplingKernel(CouplingKind::brownian, "brownian", k.init_, k.steps_);
}

CouplingKernel CouplingKernel::affine_mixture(InitialLaw init, std::vector<double> slope, std::vector<double> shift,
                                              std::vector<double> prob, std::string name) {
  ChainStep s;
  s.kind = ChainStep::Kind::affine_mixture;
  s.slope = std::move(slope);
  s.shift = std::move(shift);
  s.prob = std::move(prob);
  return CouplingKernel(CouplingKind::affine_mixture, std::move(name), std::move(init), {s});
}

CouplingKernel CouplingKernel::constant(double x, std::size_t n) {
  std::vector<ChainStep> steps;
  for (std::size_t m = 0; m < n; ++m) steps.push_back(matrix_step({x}, {x}, {{1.0}}));
  return CouplingKernel(CouplingKind::discrete_kernel, "constant", discrete_initial(DiscreteMarginal::dirac(x)),
                        std::move(steps));
}

ConditionalLaw CouplingKernel::conditional(std::size_t m, const double* history) const {
  if (m >= steps_.size()) throw DomainError("no target after the last date");
  const ChainStep& s = steps_[m];
  const double x = history[m];
  ConditionalLaw law;
  switch (s.kind) {
    case ChainStep::Kind::matrix: {
      const long i = find_atom(s.from, x);
      if (i < 0) throw DomainError("value " + std::to_string(x) + " is not an atom of X_" + std::to_string(m));
      for (std::size_t j = 0; j < s.to.size(); ++j)
        if (s.gamma[static_cast<std::size_t>(i)][j] > 0) {
          law.values.push_back(s.to[j]);
          law.probs.push_back(s.gamma[static_cast<std::size_t>(i)][j]);
        }
      break;
    }
    case ChainStep::Kind::affine_mixture:
      for (std::size_t k = 0; k < s.prob.size(); ++k)
        if (s.prob[k] > 0) {
          law.values.push_back(s.slope[k] * x + s.shift[k]);
          law.probs.push_back(s.prob[k]);
        }
      break;
    case ChainStep::Kind::gaussian:
      law.gaussian = true;
      law.mean = s.c0 + s.c1 * x;
      law.var = s.v;
      if (s.v == 0) {
        law.gaussian = false;
        law.values = {law.mean};
        law.probs = {1.0};
      }
      break;
  }
  return law;
}

bool CouplingKernel::discrete_from(std::size_t m) const {
  for (std::size_t k = m; k < steps_.size(); ++k)
    if (steps_[k].kind == ChainStep::Kind::gaussian && steps_[k].v > 0) return false;
  return true;
}

void CouplingKernel::sample(Rng& rng, double* out) const {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> Z(0.0, 1.0);
  auto pick = [&](const std::vector<double>& w) {
    const double u = U(rng);
    double c = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      c += w[i];
      if (u < c) return i;
    }
    std::size_t last = w.size() - 1;
    while (last > 0 && w[last] == 0) --last;
    return last;
  };
  switch (init_.kind) {
    case InitialLaw::Kind::discrete: out[0] = init_.values[pick(init_.weights)]; break;
    case InitialLaw::Kind::uniform: out[0] = init_.a + (init_.b - init_.a) * U(rng); break;
    case InitialLaw::Kind::gaussian: out[0] = init_.a + std::sqrt(init_.b) * Z(rng); break;
  }
  for (std::size_t m = 0; m < steps_.size(); ++m) {
    const ChainStep& s = steps_[m];
    switch (s.kind) {
      case ChainStep::Kind::matrix: {
        const long i = find_atom(s.from, out[m]);
        const std::size_t j = pick(s.gamma[static_cast<std::size_t>(i)]);
        out[m + 1] = s.to[j];
        break;
      }
      case ChainStep::Kind::affine_mixture: {
        const std::size_t k = pick(s.prob);
        out[m + 1] = s.slope[k] * out[m] + s.shift[k];
        break;
      }
      case ChainStep::Kind::gaussian:
        out[m + 1] = s.c0 + s.c1 * out[m] + std::sqrt(s.v) * Z(rng);
        break;
    }
  }
}

double CouplingKernel::martingale_defect() const {
  double worst = 0;
  for (const ChainStep& s : steps_) {
    switch (s.kind) {
      case ChainStep::Kind::matrix:
        for (std::size_t i = 0; i < s.from.size(); ++i) {
          double e = 0;
          for (std::size_t j = 0; j < s.to.size(); ++j) e += s.gamma[i][j] * s.to[j];
          worst = std::max(worst, std::abs(e - s.from[i]));
        }
        break;
      case ChainStep::Kind::affine_mixture: {
        double a = 0, b = 0;
        for (std::size_t k = 0; k < s.prob.size(); ++k) {
          a += s.prob[k] * s.slope[k];
          b += s.prob[k] * s.shift[k];
        }
        worst = std::max(worst, std::abs(a - 1.0) + std::abs(b));
        break;
      }
      case ChainStep::Kind::gaussian: worst = std::max(worst, std::abs(s.c1 - 1.0) + std::abs(s.c0)); break;
    }
  }
  return worst;
}

double CouplingKernel::initial_mean() const {
  switch (init_.kind) {
    case InitialLaw::Kind::discrete: return DiscreteMarginal(init_.values, init_.weights).mean();
    case InitialLaw::Kind::uniform: return 0.5 * (init_.a + init_.b);
    case InitialLaw::Kind::gaussian: return init_.a;
  }
  return 0;
}

double CouplingKernel::initial_second_moment() const {
  switch (init_.kind) {
    case InitialLaw::Kind::discrete: return DiscreteMarginal(init_.values, init_.weights).second_moment();
    case InitialLaw::Kind::uniform:
      return (init_.a * init_.a + init_.a * init_.b + init_.b * init_.b) / 3.0;
    case InitialLaw::Kind::gaussian: return init_.b + init_.a * init_.a;
  }
  return 0;
}

CouplingKernel CouplingKernel::discretized(std::size_t atoms) const {
  if (init_.kind == InitialLaw::Kind::discrete) return *this;
  DiscreteMarginal mu = init_.kind == InitialLaw::Kind::uniform ? DiscreteMarginal::uniform(init_.a, init_.b, atoms)
                                                                : DiscreteMarginal::normal(init_.a, init_.b, atoms);
  return CouplingKernel(kind_, name_, discrete_initial(mu), steps_);
}

std::vector<DiscreteMarginal> CouplingKernel::induced_marginals(std::size_t atoms) const {
  const CouplingKernel k = discretized(atoms);
  std::vector<DiscreteMarginal> out{DiscreteMarginal(k.init_.values, k.init_.weights)};
  for (std::size_t m = 0; m < k.steps_.size(); ++m) {
    const DiscreteMarginal& cur = out.back();
    std::vector<double> v, w;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double x = cur.values()[i];
      auto law = k.conditional(m, std::vector<double>(m + 1, x).data());
      if (law.gaussian) throw ConfigError("induced marginals are only defined for discrete-valued chains");
      for (std::size_t j = 0; j < law.values.size(); ++j) {
        v.push_back(law.values[j]);
        w.push_back(cur.weights()[i] * law.probs[j]);
      }
    }
    out.push_back(DiscreteMarginal::from_unsorted(std::move(v), std::move(w)));
  }
  return out;
}

RowMatrix sample_coupling(const CouplingKernel& k, std::size_t n_samples, std::uint64_t seed) {
  RowMatrix X(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(k.n() + 1));
  parallel_for(n_samples, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng = make_stream(seed, "X", i);
      k.sample(rng, X.row(static_cast<Eigen::Index>(i)).data());
    }
  });
  return X;
}

std::map<std::string, CouplingKernel> builtin_kernels() {
  std::map<std::string, CouplingKernel> c;
  const DiscreteMarginal pm1({-1.0, 1.0}, {0.5, 0.5});
  {
    InitialLaw init = discrete_initial(pm1);
    c.emplace("binary_pm1", CouplingKernel::affine_mixture(init, {1.0, 1.0}, {-1.0, 1.0}, {0.5, 0.5}, "binary_pm1"));
  }
  {
    InitialLaw init;
    init.kind = InitialLaw::Kind::uniform;
    init.a = -1.0;
    init.b = 1.0;
    c.emplace("uniform_mot",
              CouplingKernel::affine_mixture(init, {1.5, -0.5}, {0.5, -1.5}, {0.75, 0.25}, "uniform_mot"));
  }
  {
    auto k = CouplingKernel::gaussian({0.0, 0.0}, {{1.0, 1.0}, {1.0, 2.0}});
    c.emplace("gaussian_conditional", CouplingKernel(CouplingKind::gaussian, "gaussian_conditional", k.initial(), k.steps()));
  }
  c.emplace("brownian", CouplingKernel::brownian(1.0, 1.0));
  {
    auto k = CouplingKernel::comonotone({DiscreteMarginal::uniform(-1, 1, 21), DiscreteMarginal::uniform(-2, 2, 21)});
    c.emplace("comonotone", k);
  }
  c.emplace("antithetic_pm1", CouplingKernel::antithetic(pm1, 1));
  c.emplace("independent_pm1", CouplingKernel::product({pm1, pm1}));
  return c;
}

CouplingKernel builtin_kernel(const std::string& name) {
  auto all = builtin_kernels();
  auto it = all.find(name);
  if (it == all.end()) throw ConfigError("unknown coupling preset '" + name + "'");
  return it->second;
}

}  // namespace arcade
