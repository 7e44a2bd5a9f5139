#include "arcade/ibmot.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "arcade/errors.hpp"

namespace arcade {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

double normal_quantile(double p) {
  if (!(p > 0 && p < 1)) {
    if (p == 0) return -std::numeric_limits<double>::infinity();
    if (p == 1) return std::numeric_limits<double>::infinity();
    throw DomainError("normal quantile needs p in [0,1]");
  }
  static const boost::math::normal_distribution<double> N01(0.0, 1.0);
  return boost::math::quantile(N01, p);
}

namespace {
// phi(z_c) and z_c phi(z_c) with the limits at c = 0, 1
double psi(double c) { return (c <= 0 || c >= 1) ? 0.0 : normal_pdf(normal_quantile(c)); }
double zpsi(double c) {
  if (c <= 0 || c >= 1) return 0.0;
  const double z = normal_quantile(c);
  return z * normal_pdf(z);
}
}  // namespace

std::pair<double, double> gaussian_quantile_partial_moments(double a, double b, double tau) {
  if (!(a >= 0 && a <= b && b <= 1)) throw DomainError("partial moments need 0 <= a <= b <= 1");
  if (!(tau > 0)) throw DomainError("partial moments need tau > 0");
  const double m1 = std::sqrt(tau) * (psi(a) - psi(b));
  const double m2 = tau * ((b - a) - (zpsi(b) - zpsi(a)));
  return {m1, m2};
}

double w2sq_discrete_vs_gaussian(const std::vector<double>& values, const std::vector<double>& probs, double tau) {
  if (values.size() != probs.size() || values.empty()) throw ConfigError("row needs matching values and probabilities");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0;
  for (double p : probs) {
    if (p < -1e-12) throw ConfigError("negative probability in row");
    total += p;
  }
  if (std::abs(total - 1) > 1e-9) throw ConfigError("row probabilities sum to " + format_double(total));
  double c = 0, out = 0;
  for (std::size_t k : idx) {
    const double w = std::max(probs[k], 0.0);
    if (w == 0) continue;
    const double c1 = std::min(1.0, c + w);
    const auto [q1, q2] = gaussian_quantile_partial_moments(c, c1, tau);
    out += values[k] * values[k] * (c1 - c) - 2 * values[k] * q1 + q2;
    c = c1;
  }
  return out;
}

IbmotProblem::IbmotProblem(DiscreteMarginal mu_, DiscreteMarginal nu_, double T_)
    : mu(std::move(mu_)), nu(std::move(nu_)), T(T_) {
  if (!(T > 0)) throw ConfigError("IB-MOT horizon must be positive");
}

namespace {

using Flat = std::vector<double>;

Flat flatten(const Matrix& a, std::size_t m, std::size_t n) {
  if (a.size() != m) throw ConfigError("matrix has " + std::to_string(a.size()) + " rows, expected " + std::to_string(m));
  Flat f(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    if (a[i].size() != n) throw ConfigError("matrix row has the wrong length");
    std::copy(a[i].begin(), a[i].end(), f.begin() + static_cast<long>(i * n));
  }
  return f;
}

Matrix unflatten(const Flat& f, std::size_t m, std::size_t n) {
  Matrix a(m, std::vector<double>(n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i][j] = f[i * n + j];
  return a;
}

// Objective over the joint matrix: sum_ij pi y_j^2 - 2 sqrt(T) sum_i mu_i sum_k (y_{k+1}-y_k) psi(c_ik) + T
class Objective {
 public:
  explicit Objective(const IbmotProblem& p) : p_(p), m_(p.m()), n_(p.n()) {}

  double value(const Flat& pi) const {
    const auto& y = p_.nu.values();
    const auto& mu = p_.mu.weights();
    const double sT = std::sqrt(p_.T);
    double v = p_.T;
    for (std::size_t i = 0; i < m_; ++i) {
      double c = 0, s = 0;
      for (std::size_t j = 0; j < n_; ++j) {
        const double w = pi[i * n_ + j];
        v += w * y[j] * y[j];
        if (j + 1 < n_) {
          c += w / mu[i];
          s += (y[j + 1] - y[j]) * psi(std::clamp(c, 0.0, 1.0));
        }
      }
      v -= 2 * sT * mu[i] * s;
    }
    return v;
  }

  void gradient(const Flat& pi, Flat& g) const {
    const auto& y = p_.nu.values();
    const auto& mu = p_.mu.weights();
    const double sT = std::sqrt(p_.T);
    g.assign(m_ * n_, 0.0);
    std::vector<double> z(n_);
    for (std::size_t i = 0; i < m_; ++i) {
      double c = 0;
      for (std::size_t k = 0; k + 1 < n_; ++k) {
        c += pi[i * n_ + k] / mu[i];
        z[k] = normal_quantile(std::clamp(c, 1e-15, 1 - 1e-15));
      }
      double tail = 0;
      for (std::size_t l = n_; l-- > 0;) {
        if (l + 1 < n_) tail += z[l] * (y[l + 1] - y[l]);
        g[i * n_ + l] = y[l] * y[l] + 2 * sT * tail;
      }
    }
  }

 private:
  const IbmotProblem& p_;
  std::size_t m_, n_;
};

double dot(const Flat& a, const Flat& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Equality-form constraints A pi = b with b >= 0.
void polytope_system(const IbmotProblem& p, Eigen::MatrixXd& A, Eigen::VectorXd& b) {
  const std::size_t m = p.m(), n = p.n();
  const auto& x = p.mu.values();
  const auto& mu = p.mu.weights();
  const auto& y = p.nu.values();
  const auto& nu = p.nu.weights();
  const auto R = static_cast<Eigen::Index>(2 * m + n);
  A.setZero(R, static_cast<Eigen::Index>(m * n));
  b.setZero(R);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto c = static_cast<Eigen::Index>(i * n + j);
      A(static_cast<Eigen::Index>(i), c) = 1.0;
      A(static_cast<Eigen::Index>(m + j), c) = 1.0;
      // barycentre row: sum_j pi_ij (y_j - x_i) = 0
      A(static_cast<Eigen::Index>(m + n + i), c) = y[j] - x[i];
    }
  for (std::size_t i = 0; i < m; ++i) b(static_cast<Eigen::Index>(i)) = mu[i];
  for (std::size_t j = 0; j < n; ++j) b(static_cast<Eigen::Index>(m + j)) = nu[j];
}

// Dense two-phase tableau simplex: min c.x, A x = b, x >= 0, b >= 0.
// Dantzig pricing, with Bland's rule after a run of degenerate pivots; the tableau is rebuilt
// from the original rows every few pivots to keep roundoff bounded.
Eigen::VectorXd simplex(const Eigen::MatrixXd& A0, const Eigen::VectorXd& b0, const Eigen::VectorXd& c) {
  // keep a maximal independent set of rows
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rq(A0.transpose());
  rq.setThreshold(1e-10);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < rq.rank(); ++k) keep.push_back(rq.colsPermutation().indices()(k));
  std::sort(keep.begin(), keep.end());
  const auto R = static_cast<Eigen::Index>(keep.size());
  const Eigen::Index N = A0.cols();
  Eigen::MatrixXd A(R, N);
  Eigen::VectorXd b(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    A.row(r) = A0.row(keep[static_cast<std::size_t>(r)]);
    b(r) = b0(keep[static_cast<std::size_t>(r)]);
  }
  const Eigen::Index W = N + R + 1;  // structural, artificial, rhs
  Eigen::MatrixXd full(R, N + R);
  full << A, Eigen::MatrixXd::Identity(R, R);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(R + 1, W);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(R));
  for (Eigen::Index r = 0; r < R; ++r) basis[static_cast<std::size_t>(r)] = N + r;

  const double bscale = std::max(1.0, b.cwiseAbs().maxCoeff());
  const double piv_tol = 1e-9;
  Eigen::VectorXd cost(N + R);

  auto rebuild = [&] {
    Eigen::MatrixXd B(R, R);
    for (Eigen::Index r = 0; r < R; ++r) B.col(r) = full.col(basis[static_cast<std::size_t>(r)]);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    t.topLeftCorner(R, N + R) = lu.solve(full);
    t.col(W - 1).head(R) = lu.solve(b);
    Eigen::VectorXd cb(R);
    for (Eigen::Index r = 0; r < R; ++r) cb(r) = cost(basis[static_cast<std::size_t>(r)]);
    t.row(R).head(N + R) = cost.transpose() - cb.transpose() * t.topLeftCorner(R, N + R);
    t(R, W - 1) = -cb.dot(t.col(W - 1).head(R));
  };

  auto pivot = [&](Eigen::Index r, Eigen::Index e) {
    t.row(r) /= t(r, e);
    for (Eigen::Index k = 0; k <= R; ++k)
      if (k != r && t(k, e) != 0.0) t.row(k) -= t(k, e) * t.row(r);
    basis[static_cast<std::size_t>(r)] = e;
  };

  auto run = [&](Eigen::Index n_enter, double cost_tol) {
    rebuild();
    std::size_t degenerate = 0;
    for (std::size_t guard = 0; guard < 200000; ++guard) {
      if (guard % 64 == 63) rebuild();
      const bool bland = degenerate > 50;
      Eigen::Index e = -1;
      double most = -cost_tol;
      for (Eigen::Index k = 0; k < n_enter; ++k)
        if (t(R, k) < most) {
          e = k;
          if (bland) break;
          most = t(R, k);
        }
      if (e < 0) return;
      Eigen::Index r = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < R; ++k) {
        if (t(k, e) <= piv_tol) continue;
        const double ratio = std::max(t(k, W - 1), 0.0) / t(k, e);
        const bool tie = r >= 0 && std::abs(ratio - best) <= 1e-13 * bscale;
        const bool better_tie = tie && (bland ? basis[static_cast<std::size_t>(k)] < basis[static_cast<std::size_t>(r)]
                                              : t(k, e) > t(r, e));
        if ((!tie && ratio < best) || better_tie) {
          best = ratio;
          r = k;
        }
      }
      if (r < 0) throw NumericError("transport LP is unbounded");
      degenerate = best <= 1e-13 * bscale ? degenerate + 1 : 0;
      pivot(r, e);
    }
    throw NumericError("simplex iteration limit reached");
  };

  // phase 1: minimise the sum of artificials
  cost.setZero();
  cost.tail(R).setOnes();
  run(N + R, 1e-12);
  if (t(R, W - 1) < -1e-9 * bscale)
    throw InfeasibleError("martingale transport polytope is empty (phase-1 residual " + format_double(-t(R, W - 1)) + ")");
  // drive zero-level artificials out of the basis
  for (Eigen::Index r = 0; r < R; ++r) {
    if (basis[static_cast<std::size_t>(r)] < N) continue;
    Eigen::Index e = -1;
    double best = 1e-9;
    for (Eigen::Index k = 0; k < N; ++k)
      if (std::abs(t(r, k)) > best) {
        best = std::abs(t(r, k));
        e = k;
      }
    if (e < 0) throw NumericError("simplex: cannot remove an artificial variable from the basis");
    pivot(r, e);
  }
  // phase 2
  cost.setZero();
  cost.head(N) = c;
  const double cscale = std::max(1.0, c.cwiseAbs().maxCoeff());
  run(N, 1e-11 * cscale);

  rebuild();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(N);
  for (Eigen::Index r = 0; r < R; ++r) {
    const Eigen::Index bv = basis[static_cast<std::size_t>(r)];
    if (bv < N) x(bv) = std::max(0.0, t(r, W - 1));
  }
  const double res = (A0 * x - b0).cwiseAbs().maxCoeff();
  if (res > 1e-9 * bscale) throw NumericError("simplex: basic solution residual " + format_double(res));
  return x;
}

void require_convex_order(const IbmotProblem& p) {
  const ConvexOrderReport rep = convex_order_report(p.mu, p.nu, 1e-12);
  if (!rep.ok) throw InfeasibleError("marginals are not in convex order: " + rep.witness());
}

Flat lp_flat(const Flat& costs, const IbmotProblem& p) {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  polytope_system(p, A, b);
  const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(costs.data(), static_cast<Eigen::Index>(costs.size()));
  const Eigen::VectorXd x = simplex(A, b, c);
  return Flat(x.data(), x.data() + x.size());
}

}  // namespace

double polytope_violation(const IbmotProblem& p, const Matrix& pi) {
  const std::size_t m = p.m(), n = p.n();
  const Flat f = flatten(pi, m, n);
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  polytope_system(p, A, b);
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  double v = (A * x - b).cwiseAbs().maxCoeff();
  for (double w : f) v = std::max(v, -w);
  return v;
}

Matrix kernel_from_joint(const IbmotProblem& p, const Matrix& pi) {
  Matrix k = pi;
  for (std::size_t i = 0; i < p.m(); ++i)
    for (double& w : k[i]) w = std::max(0.0, w) / p.mu.weights()[i];
  return k;
}

namespace {
Matrix joint_from_kernel(const IbmotProblem& p, const Matrix& kernel) {
  Matrix pi = kernel;
  for (std::size_t i = 0; i < p.m(); ++i)
    for (double& w : pi[i]) w *= p.mu.weights()[i];
  return pi;
}
}  // namespace

QuantileObjective ibmot_objective_quantile(const IbmotProblem& p, const Matrix& kernel, double tol) {
  flatten(kernel, p.m(), p.n());
  const Matrix pi = joint_from_kernel(p, kernel);
  const double viol = polytope_violation(p, pi);
  if (viol > tol) throw ConfigError("kernel violates the martingale transport constraints by " + format_double(viol));
  QuantileObjective q;
  for (std::size_t i = 0; i < p.m(); ++i)
    q.value += p.mu.weights()[i] * w2sq_discrete_vs_gaussian(p.nu.values(), kernel[i], p.T);
  q.KI = 0.5 * (p.nu.second_moment() + p.T - q.value);
  return q;
}

Matrix lp_oracle(const Matrix& costs, const IbmotProblem& p) {
  require_convex_order(p);
  return unflatten(lp_flat(flatten(costs, p.m(), p.n()), p), p.m(), p.n());
}

namespace {

// Relative-interior start: a positive mix of the vertices maximising each coordinate.
// psi has infinite slope at c = 0, 1, so both solvers must start there.
void interior_start(const IbmotProblem& p, const IbmotOptions& opts, std::vector<Flat>& verts, std::vector<double>& w) {
  const std::size_t N = p.m() * p.n();
  auto same = [](const Flat& a, const Flat& b) {
    for (std::size_t k = 0; k < a.size(); ++k)
      if (std::abs(a[k] - b[k]) > 1e-12) return false;
    return true;
  };
  auto add = [&](Flat v) {
    if (std::none_of(verts.begin(), verts.end(), [&](const Flat& a) { return same(a, v); })) verts.push_back(std::move(v));
  };
  add(lp_flat(opts.start_costs ? flatten(*opts.start_costs, p.m(), p.n()) : Flat(N, 0.0), p));
  for (std::size_t k = 0; k < N; ++k) {
    if (std::any_of(verts.begin(), verts.end(), [&](const Flat& v) { return v[k] > 1e-12; })) continue;
    Flat c(N, 0.0);
    c[k] = -1.0;
    add(lp_flat(c, p));
  }
  w.assign(verts.size(), 1.0);
  if (opts.start_seed != 0) {
    Rng rng = make_stream(opts.start_seed, "F", 0);
    std::uniform_real_distribution<double> U(0.05, 1.0);
    for (double& x : w) x = U(rng);
  }
  double s = 0;
  for (double x : w) s += x;
  for (double& x : w) x /= s;
}

double fw_gap(const IbmotProblem& p, const Flat& g, const Flat& pi) {
  const Flat s = lp_flat(g, p);
  double gap = 0;
  for (std::size_t k = 0; k < g.size(); ++k) gap += g[k] * (pi[k] - s[k]);
  return gap;
}

void finish(const IbmotProblem& p, const Flat& pi, double f, IbmotSolution& sol) {
  sol.pi = unflatten(pi, p.m(), p.n());
  sol.kernel = kernel_from_joint(p, sol.pi);
  sol.objective_quantile = f;
  sol.objective_KI = 0.5 * (p.nu.second_moment() + p.T - f);
}

IbmotSolution solve_pairwise_fw(const IbmotProblem& p, const IbmotOptions& opts) {
  const std::size_t N = p.m() * p.n();
  const Objective F(p);
  std::vector<Flat> active;
  std::vector<double> alpha;
  interior_start(p, opts, active, alpha);
  Flat pi(N, 0.0), g, d(N), trial(N);
  for (std::size_t a = 0; a < active.size(); ++a)
    for (std::size_t k = 0; k < N; ++k) pi[k] += alpha[a] * active[a][k];
  auto same = [](const Flat& a, const Flat& b) {
    for (std::size_t k = 0; k < a.size(); ++k)
      if (std::abs(a[k] - b[k]) > 1e-12) return false;
    return true;
  };
  double f = F.value(pi);
  IbmotSolution sol;
  std::size_t it = 0;
  for (; it < opts.max_iter; ++it) {
    F.gradient(pi, g);
    const Flat s = lp_flat(g, p);
    double gap = 0;
    for (std::size_t k = 0; k < N; ++k) gap += g[k] * (pi[k] - s[k]);
    sol.duality_gap = gap;
    if (gap <= opts.gap * (1 + std::abs(f))) {
      sol.converged = true;
      break;
    }
    // away vertex: worst active vertex along the gradient
    std::size_t away = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < active.size(); ++a) {
      const double v = dot(g, active[a]);
      if (v > worst) {
        worst = v;
        away = a;
      }
    }
    for (std::size_t k = 0; k < N; ++k) d[k] = s[k] - active[away][k];
    const double gmax = alpha[away];
    auto phi = [&](double gam) {
      for (std::size_t k = 0; k < N; ++k) trial[k] = std::max(0.0, pi[k] + gam * d[k]);
      return F.value(trial);
    };
    // golden-section search on [0, gmax]
    const double r = 0.5 * (std::sqrt(5.0) - 1);
    double lo = 0, hi = gmax;
    double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
    double f1 = phi(x1), f2 = phi(x2);
    while (hi - lo > 1e-10 * std::max(gmax, 1e-300)) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - r * (hi - lo);
        f1 = phi(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + r * (hi - lo);
        f2 = phi(x2);
      }
    }
    double gam = 0.5 * (lo + hi), fg = phi(gam);
    const double fmax = phi(gmax);
    if (fmax <= fg) {
      gam = gmax;
      fg = fmax;
    }
    if (!(fg < f)) break;  // no representable progress along the best pair
    for (std::size_t k = 0; k < N; ++k) pi[k] = std::max(0.0, pi[k] + gam * d[k]);
    f = fg;
    sol.history.push_back(f);
    std::size_t si = active.size();
    for (std::size_t a = 0; a < active.size(); ++a)
      if (same(active[a], s)) {
        si = a;
        break;
      }
    if (si == active.size()) {
      active.push_back(s);
      alpha.push_back(0.0);
    }
    alpha[si] += gam;
    alpha[away] -= gam;
    if (gam >= gmax || alpha[away] <= 1e-15) {
      active.erase(active.begin() + static_cast<long>(away));
      alpha.erase(alpha.begin() + static_cast<long>(away));
    }
  }
  sol.iterations = it;
  finish(p, pi, f, sol);
  return sol;
}

// Feasible log-barrier Newton method in the null space of the equality constraints.
IbmotSolution solve_barrier(const IbmotProblem& p, const IbmotOptions& opts) {
  const std::size_t m = p.m(), n = p.n(), N = m * n;
  const Objective F(p);
  std::vector<Flat> verts;
  std::vector<double> w;
  interior_start(p, opts, verts, w);
  Flat pi(N, 0.0);
  for (std::size_t a = 0; a < verts.size(); ++a)
    for (std::size_t k = 0; k < N; ++k) pi[k] += w[a] * verts[a][k];

  std::vector<std::size_t> free;
  for (std::size_t k = 0; k < N; ++k)
    if (pi[k] > 1e-13) free.push_back(k);
    else pi[k] = 0.0;
  const auto nf = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  polytope_system(p, A, b);
  Eigen::MatrixXd AF(A.rows(), nf);
  for (Eigen::Index j = 0; j < nf; ++j) AF.col(j) = A.col(static_cast<Eigen::Index>(free[static_cast<std::size_t>(j)]));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(AF.transpose());
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  const Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd Z = Q.rightCols(nf - rank);

  IbmotSolution sol;
  double f = F.value(pi);
  Flat g;
  auto certify = [&] {
    F.gradient(pi, g);
    sol.duality_gap = fw_gap(p, g, pi);
    return sol.duality_gap <= opts.gap * (1 + std::abs(f));
  };
  if (Z.cols() == 0) {
    sol.converged = certify();
    finish(p, pi, f, sol);
    return sol;
  }
  auto barrier = [&](const Flat& x, double t) {
    double v = F.value(x);
    for (std::size_t k : free) {
      if (!(x[k] > 0)) return std::numeric_limits<double>::infinity();
      v -= t * std::log(x[k]);
    }
    return v;
  };
  const double sT = std::sqrt(p.T);
  const auto& y = p.nu.values();
  const auto& mu = p.mu.weights();
  std::vector<Eigen::Index> slot(N, -1);
  for (Eigen::Index j = 0; j < nf; ++j) slot[free[static_cast<std::size_t>(j)]] = j;

  Eigen::MatrixXd H(nf, nf);
  Eigen::VectorXd gf(nf);
  Flat trial(N);
  std::size_t it = 0;
  for (double t = 1e-3; it < opts.max_iter; t *= 0.1) {
    for (std::size_t inner = 0; inner < 80 && it < opts.max_iter; ++inner, ++it) {
      F.gradient(pi, g);
      H.setZero();
      for (std::size_t i = 0; i < m; ++i) {
        // d^2F / dpi_il dpi_il' = 2 sqrt(T) / mu_i * sum_{k >= max(l,l')} (y_{k+1} - y_k) / phi(z_k)
        std::vector<double> S(n, 0.0);
        double c = 0;
        std::vector<double> wk(n, 0.0);
        for (std::size_t k = 0; k + 1 < n; ++k) {
          c += pi[i * n + k] / mu[i];
          const double z = normal_quantile(std::clamp(c, 1e-15, 1 - 1e-15));
          wk[k] = 2 * sT / mu[i] * (y[k + 1] - y[k]) / normal_pdf(z);
        }
        for (std::size_t l = n - 1; l-- > 0;) S[l] = S[l + 1] + wk[l];
        for (std::size_t l = 0; l < n; ++l) {
          const Eigen::Index a = slot[i * n + l];
          if (a < 0) continue;
          for (std::size_t l2 = 0; l2 < n; ++l2) {
            const Eigen::Index b2 = slot[i * n + l2];
            if (b2 >= 0) H(a, b2) = S[std::max(l, l2)];
          }
        }
      }
      for (Eigen::Index j = 0; j < nf; ++j) {
        const double x = pi[free[static_cast<std::size_t>(j)]];
        gf(j) = g[free[static_cast<std::size_t>(j)]] - t / x;
        H(j, j) += t / (x * x);
      }
      const Eigen::MatrixXd Hz = Z.transpose() * H * Z;
      const Eigen::VectorXd u = Hz.ldlt().solve(-(Z.transpose() * gf));
      const Eigen::VectorXd d = Z * u;
      const double slope = gf.dot(d);
      if (!(slope < 0) || -slope <= 1e-15 * (1 + std::abs(f))) break;
      double amax = 1.0;
      for (Eigen::Index j = 0; j < nf; ++j)
        if (d(j) < 0) amax = std::min(amax, -0.99 * pi[free[static_cast<std::size_t>(j)]] / d(j));
      const double phi0 = barrier(pi, t);
      double alpha = amax;
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt, alpha *= 0.5) {
        trial = pi;
        for (Eigen::Index j = 0; j < nf; ++j) trial[free[static_cast<std::size_t>(j)]] += alpha * d(j);
        if (barrier(trial, t) <= phi0 + 0.25 * alpha * slope) {
          moved = true;
          break;
        }
      }
      if (!moved) break;
      pi = trial;
      f = F.value(pi);
      sol.history.push_back(f);
      if (-slope <= 1e-13 * (1 + std::abs(f))) {
        ++it;
        break;
      }
    }
    if (t * static_cast<double>(nf) <= 10 * opts.gap * (1 + std::abs(f)) && certify()) {
      sol.converged = true;
      break;
    }
    if (t < 1e-16) break;
  }
  if (!sol.converged) sol.converged = certify();
  sol.iterations = it;
  finish(p, pi, f, sol);
  return sol;
}

}  // namespace

IbmotSolution solve_ibmot(const IbmotProblem& p, const IbmotOptions& opts) {
  require_convex_order(p);
  return opts.method == IbmotMethod::frank_wolfe ? solve_pairwise_fw(p, opts) : solve_barrier(p, opts);
}

double coupling_correlation(const IbmotProblem& p, const Matrix& kernel) {
  const auto& x = p.mu.values();
  const auto& mu = p.mu.weights();
  const auto& y = p.nu.values();
  double exy = 0;
  for (std::size_t i = 0; i < p.m(); ++i)
    for (std::size_t j = 0; j < p.n(); ++j) exy += mu[i] * kernel[i][j] * x[i] * y[j];
  const double cov = exy - p.mu.mean() * p.nu.mean();
  const double den = std::sqrt(p.mu.variance() * p.nu.variance());
  return den > 0 ? cov / den : 0.0;
}

RapConfig ibmot_rap_template(const IbmotProblem& p, const Matrix& kernel) {
  if (kernel.size() != p.m()) throw ConfigError("kernel has the wrong number of rows");
  std::vector<std::vector<double>> k = kernel;
  const auto& y = p.nu.values();
  // exponential tilt of each row so the barycentre is exact; keeps the support
  for (std::size_t i = 0; i < k.size(); ++i) {
    auto& row = k[i];
    if (row.size() != p.n()) throw ConfigError("kernel row has the wrong length");
    const double x = p.mu.values()[i];
    std::vector<double> base(row.size());
    double s = 0;
    for (std::size_t j = 0; j < row.size(); ++j) s += (base[j] = std::max(row[j], 0.0));
    if (!(s > 0)) throw ConfigError("kernel row has no mass");
    auto tilt = [&](double lam, double& mean, double& var) {
      double z = 0, m1 = 0, m2 = 0, ymax = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < row.size(); ++j)
        if (base[j] > 0) ymax = std::max(ymax, lam * y[j]);
      for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] = base[j] > 0 ? base[j] * std::exp(lam * y[j] - ymax) : 0.0;
        z += row[j];
      }
      for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] /= z;
        m1 += row[j] * y[j];
        m2 += row[j] * y[j] * y[j];
      }
      mean = m1;
      var = m2 - m1 * m1;
    };
    double lam = 0, mean = 0, var = 0;
    for (int it = 0; it < 50; ++it) {
      tilt(lam, mean, var);
      if (std::abs(mean - x) <= 1e-14 * (1 + std::abs(x)) || var <= 0) break;
      lam -= (mean - x) / var;
    }
  }
  CouplingKernel c = CouplingKernel::discrete_kernel(p.mu, p.nu.values(), k);
  return RapConfig::standard(GaussMarkovDriver::brownian(), Partition({0.0, p.T}, p.steps), std::move(c));
}

McObjective ibmot_objective_mc(const RapConfig& cfg, std::size_t n_paths, std::uint64_t seed) {
  const Partition& part = cfg.partition();
  if (part.n() != 1) throw ConfigError("IB-MOT objective needs a one-arc configuration");
  if (n_paths < 2) throw ConfigError("MC objective needs at least two paths");
  const auto& grid = part.grid();
  const std::size_t N = grid.size();
  std::vector<double> w(N, 0.0);
  for (std::size_t k = 0; k + 1 < N; ++k) {
    double fac = 0;
    try {
      fac = fam_vol_factor(cfg, grid[k]);
    } catch (const DomainError&) {
      fac = 0;
    }
    if (!std::isfinite(fac)) fac = 0;
    w[k] = fac * (grid[k + 1] - grid[k]);
  }
  if (!cfg.standard_flag() || !cfg.coupling().is_martingale())
    throw ConfigError("MC objective needs a standard RAP with a martingale coupling");
  double sa = 0, sa2 = 0, sb = 0, sb2 = 0, sd = 0, sd2 = 0;
  const FamRunInfo info = fam_for_each(cfg, n_paths, seed, [&](std::size_t, const FamPathView& v) {
    const double x1 = v.X[1];
    double a = 0;
    for (std::size_t k = 0; k + 1 < N; ++k) a += (x1 - v.M[k]) * (x1 - v.M[k]) * w[k];
    const double b = x1 * v.W[N - 1];
    sa += a;
    sa2 += a * a;
    sb += b;
    sb2 += b * b;
    sd += a - b;
    sd2 += (a - b) * (a - b);
  });
  if (!info.innovations) throw ConfigError("MC objective needs a standard RAP with a martingale coupling");
  const double n = static_cast<double>(n_paths);
  auto se = [n](double s, double s2) { return std::sqrt(std::max(s2 / n - (s / n) * (s / n), 0.0) / (n - 1)); };
  McObjective out;
  out.n_paths = n_paths;
  out.integral = sa / n;
  out.integral_se = se(sa, sa2);
  out.terminal = sb / n;
  out.terminal_se = se(sb, sb2);
  out.diff_se = se(sd, sd2);
  return out;
}

McObjective ibmot_objective_mc(const IbmotProblem& p, const Matrix& kernel, std::size_t n_paths, std::uint64_t seed) {
  const RapConfig cfg = ibmot_rap_template(p, kernel);
  return ibmot_objective_mc(cfg, n_paths, seed);
}

SegmentSearch ibmot_segment_search(const IbmotProblem& p, std::size_t grid) {
  require_convex_order(p);
  const std::size_t m = p.m(), n = p.n();
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  polytope_system(p, A, b);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(1e-10);
  const Eigen::MatrixXd ker = lu.kernel();
  const Flat base = lp_flat(Flat(m * n, 0.0), p);
  const Objective obj(p);
  SegmentSearch out;
  if (lu.rank() == A.cols()) {
    out.objective = obj.value(base);
    out.kernel = kernel_from_joint(p, unflatten(base, m, n));
    return out;
  }
  if (ker.cols() != 1) throw ConfigError("segment search needs a polytope of dimension at most one");
  out.dimension = 1;
  const Eigen::VectorXd d = ker.col(0);
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    if (std::abs(d(k)) < 1e-14) continue;
    const double s = -base[static_cast<std::size_t>(k)] / d(k);
    if (d(k) > 0) lo = std::max(lo, s);
    else hi = std::min(hi, s);
  }
  if (!(hi >= lo)) throw NumericError("segment search: empty feasible interval");
  auto point = [&](double s) {
    Flat f(base);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = std::max(f[k] + s * d(static_cast<Eigen::Index>(k)), 0.0);
    return f;
  };
  auto value = [&](double s) { return obj.value(point(s)); };
  grid = std::max<std::size_t>(grid, 3);
  const double h = (hi - lo) / static_cast<double>(grid - 1);
  std::size_t best = 0;
  double fbest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid; ++k) {
    const double v = value(lo + h * static_cast<double>(k));
    if (v < fbest) fbest = v, best = k;
  }
  double a = lo + h * static_cast<double>(best > 0 ? best - 1 : 0);
  double c = lo + h * static_cast<double>(std::min(best + 1, grid - 1));
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = c - phi * (c - a), x2 = a + phi * (c - a);
  double f1 = value(x1), f2 = value(x2);
  for (int it = 0; it < 200 && c - a > 1e-14 * (1 + std::abs(a)); ++it) {
    if (f1 <= f2) {
      c = x2, x2 = x1, f2 = f1;
      x1 = c - phi * (c - a), f1 = value(x1);
    } else {
      a = x1, x1 = x2, f1 = f2;
      x2 = a + phi * (c - a), f2 = value(x2);
    }
  }
  const double s = f1 <= f2 ? x1 : x2;
  out.objective = std::min({fbest, f1, f2});
  out.kernel = kernel_from_joint(p, unflatten(point(fbest <= std::min(f1, f2) ? lo + h * static_cast<double>(best) : s), m, n));
  return out;
}

}  // namespace arcade
