#include "arcade/fam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "arcade/errors.hpp"
#include "arcade/parallel.hpp"

namespace arcade {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool signal_vanishes_before(const RapConfig& cfg, double tol) {
  const Partition& p = cfg.partition();
  const auto& T = p.dates();
  const auto& grid = p.grid();
  const auto& G = cfg.g_grid();
  for (std::size_t j = 2; j <= p.n(); ++j)
    for (std::size_t k = 0; k < grid.size() && grid[k] <= T[j - 1]; ++k)
      if (std::abs(G(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j))) > tol) return false;
  return true;
}

// Prior information about the unrevealed targets given X_0..X_m, fixed over one arc.
class Evidence {
 public:
  Evidence(const CouplingKernel& k, std::size_t m, const double* hist, bool reduced, bool martingale,
           ContinuousMethod method, std::atomic<std::size_t>* fallbacks)
      : m_(m), hist_(hist, hist + m + 1), martingale_(martingale), method_(method), fallbacks_(fallbacks) {
    const std::size_t n = k.n();
    if (m >= n) return;
    if (reduced || m + 1 == n) {
      width_ = 1;
      const ConditionalLaw law = k.conditional(m, hist);
      if (law.gaussian) {
        gaussian_ = true;
        a_ = law.mean;
        b_ = law.var;
      } else {
        for (std::size_t j = 0; j < law.values.size(); ++j) {
          logp_.push_back(std::log(law.probs[j]));
          target_.push_back(law.values[j]);
          future_.push_back(law.values[j]);
        }
      }
      return;
    }
    if (!k.discrete_from(m)) throw ConfigError("full conditioning needs discrete targets after X_" + std::to_string(m));
    width_ = n - m;
    std::vector<double> x(hist, hist + m + 1);
    x.resize(n + 1);
    enumerate(k, m, 0.0, x);
  }

  Posterior prior() const {
    Posterior p;
    if (width_ == 0) {
      p.mean = hist_[m_];
      p.second = p.mean * p.mean;
      return p;
    }
    if (gaussian_) {
      p.mean = a_;
      p.second = b_ + a_ * a_;
    } else {
      for (std::size_t l = 0; l < logp_.size(); ++l) {
        const double w = std::exp(logp_[l]);
        p.mean += w * target_[l];
        p.second += w * target_[l] * target_[l];
      }
    }
    if (martingale_) p.mean = hist_[m_];
    return p;
  }

  Posterior eval(const double* g, double mu_a, double var_a, double I) const {
    if (width_ == 0) return prior();
    if (!(var_a > 0)) throw NumericError("noise variance vanishes inside an arc");
    double known = mu_a;
    for (std::size_t i = 0; i <= m_; ++i) known += g[i] * hist_[i];
    const double c = I - known;
    if (gaussian_) return eval_gaussian(g[m_ + 1], c, var_a);

    const std::size_t L = logp_.size();
    auto residual = [&](std::size_t l) {
      double r = c;
      for (std::size_t w = 0; w < width_; ++w) r -= g[m_ + 1 + w] * future_[l * width_ + w];
      return r;
    };
    const double inv2v = 0.5 / var_a;
    double lmax = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < L; ++l) {
      const double r = residual(l);
      lmax = std::max(lmax, logp_[l] - r * r * inv2v);
    }
    Posterior p;
    if (!std::isfinite(lmax)) {
      std::size_t best = 0;
      double br = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < L; ++l) {
        const double r = std::abs(residual(l));
        if (r < br) {
          br = r;
          best = l;
        }
      }
      if (fallbacks_) ++*fallbacks_;
      p.mean = target_[best];
      p.second = p.mean * p.mean;
      p.fallback = true;
      return p;
    }
    double s0 = 0, s1 = 0, s2 = 0;
    for (std::size_t l = 0; l < L; ++l) {
      const double r = residual(l);
      const double w = std::exp(logp_[l] - r * r * inv2v - lmax);
      s0 += w;
      s1 += w * target_[l];
      s2 += w * target_[l] * target_[l];
    }
    p.mean = s1 / s0;
    p.second = s2 / s0;
    return p;
  }

 private:
  void enumerate(const CouplingKernel& k, std::size_t j, double logw, std::vector<double>& x) {
    if (j == k.n()) {
      logp_.push_back(logw);
      target_.push_back(x[j]);
      for (std::size_t w = m_ + 1; w <= k.n(); ++w) future_.push_back(x[w]);
      return;
    }
    const ConditionalLaw law = k.conditional(j, x.data());
    for (std::size_t a = 0; a < law.values.size(); ++a) {
      x[j + 1] = law.values[a];
      enumerate(k, j + 1, logw + std::log(law.probs[a]), x);
    }
  }

  Posterior eval_gaussian(double gm, double c, double var_a) const {
    // likelihood exp(-(c - gm y)^2 / 2 var_a), prior N(a, b)
    const double prec = gm * gm / var_a + 1.0 / b_;
    const double mpost = (gm * c / var_a + a_ / b_) / prec;
    const double vpost = 1.0 / prec;
    Posterior p;
    if (method_ == ContinuousMethod::conjugate) {
      p.mean = mpost;
      p.second = vpost + mpost * mpost;
      return p;
    }
    const double sd = std::sqrt(vpost);
    const double lo = mpost - 8 * sd, hi = mpost + 8 * sd;
    auto logf = [&](double y) {
      const double r = c - gm * y, d = y - a_;
      return -r * r / (2 * var_a) - d * d / (2 * b_);
    };
    const double lref = logf(mpost);
    auto simpson = [&](std::size_t panels, double& s0, double& s1, double& s2) {
      const double h = (hi - lo) / static_cast<double>(panels);
      s0 = s1 = s2 = 0;
      for (std::size_t i = 0; i <= panels; ++i) {
        const double y = lo + h * static_cast<double>(i);
        const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        const double f = w * std::exp(logf(y) - lref);
        s0 += f;
        s1 += f * y;
        s2 += f * y * y;
      }
    };
    double a0, a1, a2;
    simpson(64, a0, a1, a2);
    for (std::size_t panels = 128; panels <= (1u << 15); panels *= 2) {
      double b0, b1, b2;
      simpson(panels, b0, b1, b2);
      // compare the normalised moments; the panel width cancels
      const double m_old = a1 / a0, m_new = b1 / b0;
      const double q_old = a2 / a0, q_new = b2 / b0;
      const double scale = std::abs(m_new) + sd;
      if (std::abs(m_new - m_old) <= 1e-9 * scale && std::abs(q_new - q_old) <= 1e-9 * (scale * scale)) {
        p.mean = m_new;
        p.second = q_new;
        return p;
      }
      a0 = b0;
      a1 = b1;
      a2 = b2;
    }
    throw NumericError("posterior quadrature did not converge in 2^15 panels (mean " + format_double(mpost) +
                       ", sd " + format_double(sd) + ")");
  }

  std::size_t m_;
  std::vector<double> hist_;
  bool martingale_;
  ContinuousMethod method_;
  std::atomic<std::size_t>* fallbacks_;
  std::size_t width_ = 0;
  bool gaussian_ = false;
  double a_ = 0, b_ = 0;
  std::vector<double> logp_, target_, future_;
};

struct HTables {
  // per node, using the arc of the node: h1, h2, h3 with T_{m+1}
  std::vector<double> h1, h2, h3, factor;
};

HTables build_h_tables(const RapConfig& cfg) {
  const Partition& p = cfg.partition();
  const auto& grid = p.grid();
  const GaussMarkovDriver& d = cfg.driver();
  const std::size_t N = grid.size();
  HTables h;
  h.h1.assign(N, 0);
  h.h2.assign(N, 0);
  h.h3.assign(N, 0);
  h.factor.assign(N, 0);
  for (std::size_t k = 0; k + 1 < N; ++k) {
    const double t = grid[k];
    const double Tn = p.date(p.arc_of_node(k) + 1);
    const double a1 = d.h1(t), a2 = d.h2(t), da1 = d.dh1(t), da2 = d.dh2(t);
    const double b1 = d.h1(Tn), b2 = d.h2(Tn);
    h.h1[k] = da1 * b2 - b1 * da2;
    h.h2[k] = da1 * a2 - a1 * da2;
    h.h3[k] = b1 * a2 - a1 * b2;
  }
  double scale = 0;
  for (double v : h.h3) scale = std::max(scale, std::abs(v));
  for (std::size_t k = 0; k + 1 < N; ++k)
    h.factor[k] = std::abs(h.h3[k]) > 1e-14 * scale ? std::sqrt(std::max(h.h2[k], 0.0)) / h.h3[k] : kNaN;
  // degenerate date nodes take the one-sided grid value
  for (std::size_t k = N - 1; k-- > 0;)
    if (std::isnan(h.factor[k])) h.factor[k] = h.factor[k + 1];
  if (N >= 2) h.factor[N - 1] = h.factor[N - 2];
  return h;
}

void require_innovations(const RapConfig& cfg) {
  if (!cfg.standard_flag()) throw ConfigError("innovations need a standard RAP");
  if (!cfg.coupling().is_martingale()) throw ConfigError("innovations need a martingale coupling");
}

void innovations_impl(const RapConfig& cfg, const HTables& h, const double* I, const double* X, const double* M,
                      double* W) {
  const Partition& p = cfg.partition();
  const auto& grid = p.grid();
  const auto& G = cfg.g_grid();
  const auto& mu = cfg.arcade().mean_grid();
  const std::size_t N = grid.size();
  double scale = 0;
  for (double v : h.h3) scale = std::max(scale, std::abs(v));
  W[0] = 0.0;
  for (std::size_t k = 0; k + 1 < N; ++k) {
    const std::size_t m = p.arc_of_node(k);
    const double dt = grid[k + 1] - grid[k];
    const auto K0 = static_cast<Eigen::Index>(k), K1 = static_cast<Eigen::Index>(k + 1);
    double z = I[k] - mu[k], dj = mu[k + 1] - mu[k];
    for (std::size_t i = 0; i <= m; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      z -= G(K0, c) * X[i];
      dj += (G(K1, c) - G(K0, c)) * X[i];
    }
    double drift = 0.0;
    if (std::abs(h.h3[k]) > 1e-14 * scale) drift = (z * h.h1[k] - M[k] * h.h2[k]) / h.h3[k];
    const double dn = drift * dt - dj + (I[k + 1] - I[k]);
    double h2 = h.h2[k];
    if (!(h2 > 0)) {
      const GaussMarkovDriver& d = cfg.driver();
      const double t = grid[k] + 0.5 * dt;
      h2 = d.dh1(t) * d.h2(t) - d.h1(t) * d.dh2(t);
    }
    W[k + 1] = W[k] + (h2 > 0 ? dn / std::sqrt(h2) : 0.0);
  }
}

// M and vol along one path; vol may be null
void filter_path(const FamFilter& filt, const HTables* h, const double* I, const double* X, double* M, double* vol,
                 bool reduced, bool martingale, std::atomic<std::size_t>* fallbacks) {
  const RapConfig& cfg = filt.config();
  const Partition& p = cfg.partition();
  const std::size_t N = p.n_nodes(), steps = p.steps_per_arc(), n = p.n();
  const auto& G = cfg.g_grid();
  const auto& mu = cfg.arcade().mean_grid();
  const auto& var = cfg.arcade().var_grid();
  for (std::size_t m = 0; m < n; ++m) {
    const Evidence ev(cfg.coupling(), m, X, reduced, martingale, ContinuousMethod::conjugate, fallbacks);
    const std::size_t k0 = m * steps;
    {
      const Posterior pr = ev.prior();
      M[k0] = martingale ? X[m] : pr.mean;
      if (vol) vol[k0] = pr.var() * h->factor[k0];
    }
    for (std::size_t k = k0 + 1; k < k0 + steps; ++k) {
      const Posterior po = ev.eval(G.row(static_cast<Eigen::Index>(k)).data(), mu[k], var[k], I[k]);
      M[k] = po.mean;
      if (vol) vol[k] = po.var() * h->factor[k];
    }
  }
  M[N - 1] = X[n];
  if (vol) vol[N - 1] = vol[N - 2];
}

}  // namespace

FamFilter::FamFilter(const RapConfig& cfg, FilterMode mode, ContinuousMethod method) : cfg_(cfg), method_(method) {
  martingale_ = cfg.coupling().is_martingale();
  const bool can_reduce = martingale_ && signal_vanishes_before(cfg, 1e-9);
  switch (mode) {
    case FilterMode::automatic:
      reduced_ = can_reduce;
      break;
    case FilterMode::reduced:
      if (!can_reduce)
        throw ConfigError("reduced filtering needs a martingale coupling and g_j = 0 on [T_0, T_{j-1}]");
      reduced_ = true;
      break;
    case FilterMode::full:
      reduced_ = false;
      break;
  }
}

Posterior FamFilter::prior(std::size_t m, const double* hist) const {
  return Evidence(cfg_.coupling(), m, hist, reduced_, martingale_, method_, &fallbacks_).prior();
}

Posterior FamFilter::interior(std::size_t m, const double* g, double mu_a, double var_a, double I,
                              const double* hist) const {
  return Evidence(cfg_.coupling(), m, hist, reduced_, martingale_, method_, &fallbacks_).eval(g, mu_a, var_a, I);
}

Posterior FamFilter::at(double t, double I, const double* hist) const {
  const Partition& p = cfg_.partition();
  if (!p.contains(t)) throw DomainError("time " + format_double(t) + " outside [T_0, T_n]");
  const long di = p.date_index(t);
  if (di >= 0) return prior(static_cast<std::size_t>(di), hist);
  const std::size_t m = p.arc_of(t);
  const auto g = cfg_.signal().eval_all(t);
  return interior(m, g.data(), cfg_.arcade().mean(t), cfg_.arcade().variance(t), I, hist);
}

Posterior FamFilter::at_node(std::size_t k, double I, const double* hist) const {
  const Partition& p = cfg_.partition();
  if (k >= p.n_nodes()) throw DomainError("grid node out of range");
  if (k % p.steps_per_arc() == 0) return prior(k / p.steps_per_arc(), hist);
  return interior(p.arc_of_node(k), cfg_.g_grid().row(static_cast<Eigen::Index>(k)).data(),
                  cfg_.arcade().mean_grid()[k], cfg_.arcade().var_grid()[k], I, hist);
}

namespace {
std::size_t observed_count(const RapConfig& cfg, double t, const std::vector<double>& x) {
  const Partition& p = cfg.partition();
  if (!p.contains(t)) throw DomainError("time " + format_double(t) + " outside [T_0, T_n]");
  const std::size_t m = p.last_date_at_or_before(t);
  if (x.size() < m + 1)
    throw ConfigError("filter at t = " + format_double(t) + " needs X_0..X_" + std::to_string(m));
  return m;
}
}  // namespace

double fam_filter_discrete(const RapConfig& cfg, double t, double I, const std::vector<double>& x_observed,
                           FilterMode mode) {
  const std::size_t m = observed_count(cfg, t, x_observed);
  if (m < cfg.partition().n() && !cfg.coupling().discrete_from(m))
    throw ConfigError("discrete filter used with a continuous target");
  const FamFilter f(cfg, mode);
  if (cfg.partition().date_index(t) >= 0) return x_observed[m];
  return f.at(t, I, x_observed.data()).mean;
}

double fam_filter_continuous(const RapConfig& cfg, double t, double I, const std::vector<double>& x_observed) {
  const std::size_t m = observed_count(cfg, t, x_observed);
  const FamFilter f(cfg, FilterMode::automatic, ContinuousMethod::quadrature);
  if (cfg.partition().date_index(t) >= 0) return f.martingale() ? x_observed[m] : f.at(t, I, x_observed.data()).mean;
  return f.at(t, I, x_observed.data()).mean;
}

double fam_vol_factor(const RapConfig& cfg, double t) {
  const Partition& p = cfg.partition();
  if (!p.contains(t) || t >= p.tn()) throw DomainError("volatility factor needs T_0 <= t < T_n");
  const std::size_t m = p.arc_of(t);
  const GaussMarkovDriver& d = cfg.driver();
  const double Tn = p.date(m + 1);
  const double h2 = d.dh1(t) * d.h2(t) - d.h1(t) * d.dh2(t);
  const double h3 = d.h1(Tn) * d.h2(t) - d.h1(t) * d.h2(Tn);
  if (h3 == 0) throw DomainError("volatility denominator vanishes at t = " + format_double(t));
  return std::sqrt(std::max(h2, 0.0)) / h3;
}

double fam_volatility(const RapConfig& cfg, double t, double I, const std::vector<double>& x_observed, double M) {
  if (cfg.partition().date_index(t) >= 0) throw DomainError("volatility is not evaluated at a partition date");
  require_innovations(cfg);
  observed_count(cfg, t, x_observed);
  const FamFilter f(cfg, FilterMode::reduced, ContinuousMethod::quadrature);
  const Posterior po = f.at(t, I, x_observed.data());
  const double v = std::max(po.second - M * M, 0.0);
  return v * fam_vol_factor(cfg, t);
}

FamRunInfo fam_for_each(const RapConfig& cfg, std::size_t n_paths, std::uint64_t seed,
                        const std::function<void(std::size_t, const FamPathView&)>& visit, FilterMode mode) {
  const FamFilter filt(cfg, mode, ContinuousMethod::conjugate);
  FamRunInfo info;
  info.reduced = filt.reduced();
  info.innovations = cfg.standard_flag() && filt.martingale() && filt.reduced();
  const Partition& p = cfg.partition();
  const std::size_t N = p.n_nodes(), n1 = p.n() + 1;
  HTables h;
  if (info.innovations) h = build_h_tables(cfg);
  const RapSampler sampler(cfg);
  std::atomic<std::size_t> fallbacks{0};
  const std::size_t block = 512;
  std::vector<double> I(block * N), X(block * n1), M(block * N), W, V;
  if (info.innovations) {
    W.resize(block * N);
    V.resize(block * N);
  }
  for (std::size_t b0 = 0; b0 < n_paths; b0 += block) {
    const std::size_t nb = std::min(block, n_paths - b0);
    parallel_for(nb, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t r = lo; r < hi; ++r) {
        double* Ir = I.data() + r * N;
        double* Xr = X.data() + r * n1;
        double* Mr = M.data() + r * N;
        sampler.sample(seed, b0 + r, Ir, Xr);
        filter_path(filt, info.innovations ? &h : nullptr, Ir, Xr, Mr,
                    info.innovations ? V.data() + r * N : nullptr, filt.reduced(), filt.martingale(), &fallbacks);
        if (info.innovations) innovations_impl(cfg, h, Ir, Xr, Mr, W.data() + r * N);
      }
    });
    for (std::size_t r = 0; r < nb; ++r) {
      FamPathView v{I.data() + r * N, X.data() + r * n1, M.data() + r * N,
                    info.innovations ? W.data() + r * N : nullptr, info.innovations ? V.data() + r * N : nullptr};
      visit(b0 + r, v);
    }
  }
  info.fallbacks = fallbacks.load();
  return info;
}

FamTrace fam_paths(const RapConfig& cfg, std::size_t n_paths, std::uint64_t seed, FilterMode mode) {
  FamTrace tr;
  const Partition& p = cfg.partition();
  const auto N = static_cast<Eigen::Index>(p.n_nodes());
  const auto rows = static_cast<Eigen::Index>(n_paths);
  tr.grid = p.grid();
  tr.seed = seed;
  tr.I.resize(rows, N);
  tr.M.resize(rows, N);
  tr.W.setConstant(rows, N, kNaN);
  tr.vol.setConstant(rows, N, kNaN);
  tr.X.resize(rows, static_cast<Eigen::Index>(p.n() + 1));
  tr.info = fam_for_each(
      cfg, n_paths, seed,
      [&](std::size_t i, const FamPathView& v) {
        const auto r = static_cast<Eigen::Index>(i);
        std::copy(v.I, v.I + N, tr.I.row(r).data());
        std::copy(v.M, v.M + N, tr.M.row(r).data());
        std::copy(v.X, v.X + tr.X.cols(), tr.X.row(r).data());
        if (v.W) std::copy(v.W, v.W + N, tr.W.row(r).data());
        if (v.vol) std::copy(v.vol, v.vol + N, tr.vol.row(r).data());
      },
      mode);
  return tr;
}

void FamTrace::write_csv(std::ostream& os, std::size_t path) const {
  const auto r = static_cast<Eigen::Index>(path);
  os << "t,I,M,W,vol\n";
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    os << format_double(grid[k]) << ',' << format_double(I(r, c)) << ',' << format_double(M(r, c)) << ','
       << format_double(W(r, c)) << ',' << format_double(vol(r, c)) << '\n';
  }
}

void innovations(const RapConfig& cfg, const double* I, const double* X, const double* M, double* W) {
  require_innovations(cfg);
  const HTables h = build_h_tables(cfg);
  innovations_impl(cfg, h, I, X, M, W);
}

std::vector<double> innovations_path(const RapConfig& cfg, const FamTrace& trace, std::size_t path) {
  if (path >= trace.n_paths()) throw DomainError("path index out of range");
  const auto r = static_cast<Eigen::Index>(path);
  std::vector<double> W(trace.grid.size());
  innovations(cfg, trace.I.row(r).data(), trace.X.row(r).data(), trace.M.row(r).data(), W.data());
  return W;
}

IsometryReport ito_isometry_check(const RapConfig& cfg, std::size_t n_paths, std::uint64_t seed) {
  if (cfg.partition().n() != 1) throw ConfigError("isometry check needs a one-arc configuration");
  require_innovations(cfg);
  if (n_paths < 2) throw ConfigError("isometry check needs at least two paths");
  const auto& grid = cfg.partition().grid();
  const std::size_t N = grid.size();
  double sl = 0, sl2 = 0, sr = 0, sr2 = 0, sd = 0, sd2 = 0;
  fam_for_each(cfg, n_paths, seed, [&](std::size_t, const FamPathView& v) {
    const double l = (v.X[1] - v.X[0]) * (v.X[1] - v.X[0]);
    double r = 0;
    for (std::size_t k = 0; k + 1 < N; ++k)
      r += 0.5 * (v.vol[k] * v.vol[k] + v.vol[k + 1] * v.vol[k + 1]) * (grid[k + 1] - grid[k]);
    sl += l;
    sl2 += l * l;
    sr += r;
    sr2 += r * r;
    sd += l - r;
    sd2 += (l - r) * (l - r);
  });
  const double n = static_cast<double>(n_paths);
  auto se = [n](double s, double s2) { return std::sqrt(std::max(s2 / n - (s / n) * (s / n), 0.0) / (n - 1)); };
  IsometryReport rep;
  rep.lhs = sl / n;
  rep.rhs = sr / n;
  rep.lhs_se = se(sl, sl2);
  rep.rhs_se = se(sr, sr2);
  rep.diff_se = se(sd, sd2);
  const double diff = rep.lhs - rep.rhs;
  rep.z = rep.diff_se > 0 ? diff / rep.diff_se : (std::abs(diff) < 1e-12 ? 0.0 : std::copysign(INFINITY, diff));
  return rep;
}

}  // namespace arcade
