#include "arcade/rap.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "arcade/errors.hpp"
#include "arcade/parallel.hpp"

namespace arcade {

RapConfig::RapConfig(ArcadeConfig arcade, CoefficientSet signal, CouplingKernel coupling, bool standard_flag)
    : arcade_(std::move(arcade)),
      signal_(signal.with_role(CoefficientRole::signal_g)),
      coupling_(std::move(coupling)),
      standard_(standard_flag) {
  const Partition& p = arcade_.partition();
  if (!(signal_.partition() == p)) throw ConfigError("signal coefficients use a different partition");
  if (coupling_.n() != p.n())
    throw ConfigError("coupling has " + std::to_string(coupling_.n() + 1) + " targets, partition needs " +
                      std::to_string(p.n() + 1));
  const auto rep = validate_coefficient_set(signal_, 1e-9);
  if (!rep.pass) throw ConfigError("signal coefficients fail validation");
  const auto& g = p.grid();
  const std::size_t n1 = p.n() + 1;
  g_grid_.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(n1));
  for (std::size_t k = 0; k < g.size(); ++k) {
    auto v = signal_.eval_all(g[k]);
    for (std::size_t i = 0; i < n1; ++i) g_grid_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = v[i];
  }
  if (standard_) {
    const auto fam = arcade_.coeffs().family();
    if (fam != CoefficientFamily::standard && fam != CoefficientFamily::gram &&
        !(fam == CoefficientFamily::piecewise_linear && arcade_.driver().label() == "brownian"))
      throw ConfigError("standard RAP requires standard noise coefficients");
    const auto& f = arcade_.f_grid();
    const auto& T = p.dates();
    for (std::size_t k = 0; k < g.size(); ++k)
      for (std::size_t j = 1; j < n1; ++j) {
        const double gv = g_grid_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
        if (g[k] <= T[j - 1] && std::abs(gv) > 1e-9)
          throw ConfigError("standard RAP: g_" + std::to_string(j) + " must vanish on [T_0, T_{j-1}]");
        if (g[k] >= T[j - 1] && g[k] <= T[j] &&
            std::abs(gv - f(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j))) > 1e-9)
          throw ConfigError("standard RAP: g_" + std::to_string(j) + " must equal f_" + std::to_string(j) +
                            " on [T_{j-1}, T_j]");
      }
  }
}

RapConfig RapConfig::standard(const GaussMarkovDriver& d, const Partition& p, CouplingKernel coupling) {
  CoefficientSet f = standard_coefficients(d, p);
  return RapConfig(ArcadeConfig(d, f), f.with_role(CoefficientRole::signal_g), std::move(coupling), true);
}

RapSampler::RapSampler(const RapConfig& cfg) : cfg_(cfg), driver_(cfg.driver(), cfg.partition().grid()) {}

void RapSampler::sample(std::uint64_t seed, std::uint64_t index, double* I, double* X, double* A) const {
  const Partition& p = cfg_.partition();
  const std::size_t nodes = p.n_nodes(), n1 = p.n() + 1;
  std::vector<double> d(nodes), a_local;
  double* a = A;
  if (!a) {
    a_local.resize(nodes);
    a = a_local.data();
  }
  driver_.sample(seed, index, d.data());
  cfg_.arcade().pin(d.data(), a);
  Rng rng = make_stream(seed, "X", index);
  cfg_.coupling().sample(rng, X);
  const auto& G = cfg_.g_grid();
  for (std::size_t k = 0; k < nodes; ++k) {
    const double* g = G.row(static_cast<Eigen::Index>(k)).data();
    double s = a[k];
    for (std::size_t i = 0; i < n1; ++i) s += g[i] * X[i];
    I[k] = s;
  }
}

RapPaths build_rap_paths(const RapConfig& cfg, std::size_t n_paths, std::uint64_t seed) {
  RapPaths out;
  const Partition& p = cfg.partition();
  out.I.grid = p.grid();
  out.I.seed = seed;
  out.I.meta = {{"process", "rap"},
                {"driver", cfg.driver().label()},
                {"coupling", cfg.coupling().name()},
                {"noise", family_name(cfg.arcade().coeffs().family())},
                {"signal", family_name(cfg.signal().family())}};
  out.I.values.resize(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(p.n_nodes()));
  out.X.resize(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(p.n() + 1));
  const RapSampler sampler(cfg);
  parallel_for(n_paths, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      sampler.sample(seed, i, out.I.values.row(r).data(), out.X.row(r).data());
    }
  });
  return out;
}

NearlyMarkovReport nearly_markov_check(const RapConfig& cfg, double tol) {
  NearlyMarkovReport rep;
  rep.tol = tol;
  rep.cond1 = markov_factorization_check(cfg.arcade(), tol);
  const Partition& p = cfg.partition();
  const auto& T = p.dates();
  const auto& grid = p.grid();
  const auto& G = cfg.g_grid();
  const std::size_t n = p.n(), steps = p.steps_per_arc();
  for (std::size_t j = 1; j <= n; ++j)
    for (std::size_t k = 0; k < grid.size() && grid[k] <= T[j - 1]; ++k)
      rep.subcond1_residual = std::max(rep.subcond1_residual,
                                       std::abs(G(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j))));
  rep.subcond1 = rep.subcond1_residual <= tol;

  rep.subcond2 = false;
  if (rep.cond1.factorization) {
    const Factorization& fz = *rep.cond1.factorization;
    bool all_arcs = true;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t m = j - 1;
      if (std::find(fz.per_arc.begin(), fz.per_arc.end(), m) == fz.per_arc.end()) {
        all_arcs = false;
        rep.subcond2_residual = std::numeric_limits<double>::infinity();
        continue;
      }
      const double right = fz.A1[m][steps];
      for (std::size_t k = 0; k <= steps; ++k) {
        const std::size_t node = m * steps + k;
        // a date node belongs to the next arc; g_j is continuous so its value is the same
        const double gj = G(static_cast<Eigen::Index>(node), static_cast<Eigen::Index>(j));
        rep.subcond2_residual = std::max(rep.subcond2_residual, std::abs(gj - fz.A1[m][k] / right));
      }
    }
    rep.subcond2 = all_arcs && rep.subcond2_residual <= tol;
  } else {
    rep.subcond2_residual = std::numeric_limits<double>::infinity();
  }
  rep.pass = rep.cond1.pass && rep.subcond1 && rep.subcond2;
  return rep;
}

double conditional_mean_rap(const RapConfig& cfg, double s, double t, double x0, double m_s, double i_s) {
  if (cfg.partition().n() != 1) throw ConfigError("conditional_mean_rap needs a one-arc configuration");
  if (s > t) throw DomainError("conditional mean needs s <= t");
  const ArcadeConfig& ac = cfg.arcade();
  const double kss = ac.cov(s, s);
  // a = A2(t)/A2(s) = K_A(s,t)/K_A(s,s); irrelevant when A_s is deterministic
  const double scale = std::max(1e-300, std::abs(ac.cov(0.5 * (cfg.partition().t0() + cfg.partition().tn()),
                                                       0.5 * (cfg.partition().t0() + cfg.partition().tn()))));
  const double a = (kss > 1e-14 * scale) ? ac.cov(s, t) / kss : 0.0;
  const auto gs = cfg.signal().eval_all(s);
  const auto gt = cfg.signal().eval_all(t);
  return (gt[0] - a * gs[0]) * x0 + (gt[1] - a * gs[1]) * m_s + a * i_s + ac.mean(t) - a * ac.mean(s);
}

MimicResult mimic_process(const PathBundle& target, const Partition& p, double noise_scale, std::uint64_t seed) {
  const auto& grid = target.grid;
  const auto& T = p.dates();
  std::vector<std::size_t> date_nodes;
  for (double d : T) {
    auto it = std::lower_bound(grid.begin(), grid.end(), d - 1e-12 * std::max(1.0, std::abs(d)));
    if (it == grid.end() || std::abs(*it - d) > 1e-12 * std::max(1.0, std::abs(d)))
      throw ConfigError("target grid must contain every partition date");
    date_nodes.push_back(static_cast<std::size_t>(it - grid.begin()));
  }
  if (grid.front() != T.front() || grid.back() != T.back()) throw ConfigError("target grid must span [T_0, T_n]");
  const CoefficientSet f = CoefficientSet::piecewise_linear(p);
  const std::size_t nodes = grid.size(), n1 = T.size();
  RowMatrix F(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(n1));
  for (std::size_t k = 0; k < nodes; ++k) {
    // snap date nodes so pinning is exact
    const double t = std::clamp(grid[k], T.front(), T.back());
    auto v = f.eval_all(t);
    for (std::size_t i = 0; i < n1; ++i) F(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = v[i];
  }
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      F(static_cast<Eigen::Index>(date_nodes[i]), static_cast<Eigen::Index>(j)) = (i == j) ? 1.0 : 0.0;

  MimicResult out;
  out.grid = grid;
  const std::size_t np = target.n_paths();
  out.paths.resize(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(nodes));
  out.sup_distance.resize(np);
  const DriverSampler bm(GaussMarkovDriver::brownian(), grid);
  parallel_for(np, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> d(nodes, 0.0);
    for (std::size_t r = lo; r < hi; ++r) {
      const auto R = static_cast<Eigen::Index>(r);
      if (noise_scale != 0.0) bm.sample(seed, r, d.data());
      double sup = 0;
      for (std::size_t k = 0; k < nodes; ++k) {
        const auto K = static_cast<Eigen::Index>(k);
        double v = noise_scale * d[k];
        for (std::size_t i = 0; i < n1; ++i) {
          const double fi = F(K, static_cast<Eigen::Index>(i));
          v += fi * (target.values(R, static_cast<Eigen::Index>(date_nodes[i])) - noise_scale * d[date_nodes[i]]);
        }
        out.paths(R, K) = v;
        sup = std::max(sup, std::abs(v - target.values(R, K)));
      }
      out.sup_distance[r] = sup;
    }
  });
  std::vector<double> s = out.sup_distance;
  if (!s.empty()) {
    std::nth_element(s.begin(), s.begin() + static_cast<long>(s.size() / 2), s.end());
    out.median_sup = s[s.size() / 2];
  }
  return out;
}

PathBundle simulate_fbm(double hurst, const std::vector<double>& grid, std::size_t n_paths, std::uint64_t seed) {
  if (!(hurst > 0 && hurst < 1)) throw ConfigError("Hurst index must lie in (0,1)");
  if (grid.empty() || grid[0] != 0.0) throw ConfigError("fBM grid must start at 0");
  const std::size_t m = grid.size() - 1;
  Eigen::MatrixXd C(m, m);
  const double h2 = 2 * hurst;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double s = grid[i + 1], t = grid[j + 1];
      C(i, j) = 0.5 * (std::pow(s, h2) + std::pow(t, h2) - std::pow(std::abs(t - s), h2));
    }
  C.diagonal().array() += 1e-12;
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() != Eigen::Success) throw NumericError("fBM covariance factorization failed");
  const Eigen::MatrixXd L = llt.matrixL();
  PathBundle b;
  b.grid = grid;
  b.seed = seed;
  b.meta["process"] = "fbm";
  b.values.setZero(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(grid.size()));
  parallel_for(n_paths, [&](std::size_t lo, std::size_t hi) {
    std::normal_distribution<double> Z(0.0, 1.0);
    Eigen::VectorXd z(m);
    for (std::size_t r = lo; r < hi; ++r) {
      Rng rng = make_stream(seed, "Y", r);
      for (std::size_t i = 0; i < m; ++i) z(i) = Z(rng);
      Eigen::VectorXd y = L * z;
      for (std::size_t i = 0; i < m; ++i) b.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i + 1)) = y(i);
    }
  });
  return b;
}

}  // namespace arcade
