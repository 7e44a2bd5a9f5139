#include <algorithm>
#include <cmath>
#include <random>

#include "arcade/errors.hpp"
#include "arcade/ibmot.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace arcade;

namespace {

// closed-form W2^2 between a sorted discrete law and N(0, tau)
double w2sq_oracle(std::vector<std::pair<double, double>> atoms, double tau) {
  std::sort(atoms.begin(), atoms.end());
  const double s = std::sqrt(tau);
  double a = 0, total = 0;
  for (const auto& [y, q] : atoms) {
    const double b = std::min(1.0, a + q);
    const double za = oracle::Phi_inv(a), zb = oracle::Phi_inv(b);
    const double m1 = s * (oracle::phi(za) - oracle::phi(zb));
    const double m2 = tau * ((b - a) - (zb * oracle::phi(zb) - za * oracle::phi(za)));
    total += y * y * q - 2 * y * m1 + m2;
    a = b;
  }
  return total;
}

// two-atom mu on {-1, 1}, three-atom nu on {-2, 0, 2}; rows of the kernel are
// (c + 1/2, 1/2 - 2c, c) and (a, 1/2 - 2a, a + 1/2), tied by the first column
struct Segment {
  double p, nu0;
  double a_of(double c) const { return (nu0 - p * (c + 0.5)) / (1 - p); }
  double lo() const { return std::max(0.0, (nu0 - 0.25 * (1 - p)) / p - 0.5); }
  double hi() const { return std::min(0.25, nu0 / p - 0.5); }
  Matrix kernel(double c) const {
    const double a = a_of(c);
    return {{c + 0.5, 0.5 - 2 * c, c}, {a, 0.5 - 2 * a, a + 0.5}};
  }
  double value(double c) const {
    const auto k = kernel(c);
    return p * w2sq_oracle({{-2, k[0][0]}, {0, k[0][1]}, {2, k[0][2]}}, 1.0) +
           (1 - p) * w2sq_oracle({{-2, k[1][0]}, {0, k[1][1]}, {2, k[1][2]}}, 1.0);
  }
  // the value is convex along the segment
  double argmin() const {
    double l = lo(), h = hi();
    for (int i = 0; i < 200; ++i) {
      const double m1 = l + (h - l) / 3, m2 = h - (h - l) / 3;
      (value(m1) < value(m2) ? h : l) = (value(m1) < value(m2) ? m2 : m1);
    }
    return 0.5 * (l + h);
  }
};

struct Instance {
  IbmotProblem problem;
  Segment seg;
};

Instance two_by_three(double p, double c, double a) {
  const double nu0 = p * (c + 0.5) + (1 - p) * a, nu1 = p * (0.5 - 2 * c) + (1 - p) * (0.5 - 2 * a);
  IbmotProblem prob(DiscreteMarginal({-1, 1}, {p, 1 - p}), DiscreteMarginal({-2, 0, 2}, {nu0, nu1, 1 - nu0 - nu1}));
  return {prob, Segment{p, nu0}};
}

const double P[3] = {0.3, 0.5, 0.7}, C[3] = {0.1, 0.05, 0.2}, A[3] = {0.15, 0.2, 0.02};

double max_abs_diff(const Matrix& x, const Matrix& y) {
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i].size(); ++j) d = std::max(d, std::abs(x[i][j] - y[i][j]));
  return d;
}

IbmotProblem gaussian15() {
  return IbmotProblem(DiscreteMarginal::normal(0, 1, 15), DiscreteMarginal::normal(0, 2, 15), 1.0);
}

Matrix joint(const IbmotProblem& p, const Matrix& k) {
  Matrix pi = k;
  for (std::size_t i = 0; i < pi.size(); ++i)
    for (double& w : pi[i]) w *= p.mu.weights()[i];
  return pi;
}

}  // namespace

TEST_CASE("gaussian quantile partial moments") {
  auto [m1, m2] = gaussian_quantile_partial_moments(0, 1, 2.5);
  CHECK(std::abs(m1) <= 1e-14);
  CHECK(m2 == doctest::Approx(2.5).epsilon(1e-14));
  std::tie(m1, m2) = gaussian_quantile_partial_moments(0, 0.5, 1);
  CHECK(m1 == doctest::Approx(-0.3989423).epsilon(1e-7));
  CHECK(m2 == doctest::Approx(0.5).epsilon(1e-12));

  for (auto [a, b, tau] : {std::tuple{0.2, 0.7, 2.0}, std::tuple{0.01, 0.05, 0.3}, std::tuple{0.6, 0.999, 1.0}}) {
    const double za = oracle::Phi_inv(a), zb = oracle::Phi_inv(b), s = std::sqrt(tau);
    const double q1 = oracle::simpson([&](double z) { return s * z * oracle::phi(z); }, za, zb, 2000);
    const double q2 = oracle::simpson([&](double z) { return tau * z * z * oracle::phi(z); }, za, zb, 2000);
    const auto [r1, r2] = gaussian_quantile_partial_moments(a, b, tau);
    CHECK(std::abs(r1 - q1) <= 1e-10);
    CHECK(std::abs(r2 - q2) <= 1e-10);
    const auto [f1, f2] = gaussian_quantile_partial_moments(1 - b, 1 - a, tau);
    CHECK(std::abs(f1 + r1) <= 1e-12);
    CHECK(std::abs(f2 - r2) <= 1e-12);
  }
  CHECK_THROWS_AS(gaussian_quantile_partial_moments(0.6, 0.5, 1), DomainError);
  CHECK_THROWS_AS(gaussian_quantile_partial_moments(-0.1, 0.5, 1), DomainError);
  CHECK_THROWS_AS(gaussian_quantile_partial_moments(0.1, 0.5, 0), DomainError);
}

TEST_CASE("discrete-to-gaussian W2") {
  CHECK(w2sq_discrete_vs_gaussian({0.7}, {1.0}, 1.5) == doctest::Approx(0.49 + 1.5).epsilon(1e-12));
  CHECK(w2sq_discrete_vs_gaussian({-1, 1}, {0.5, 0.5}, 1.0) == doctest::Approx(2 - 4 * oracle::phi(0)).epsilon(1e-12));
  CHECK(w2sq_discrete_vs_gaussian({1, -1}, {0.5, 0.5}, 1.0) == doctest::Approx(2 - 4 * oracle::phi(0)).epsilon(1e-12));

  const auto n = DiscreteMarginal::normal(1.0, 1.0, 200);
  CHECK(w2sq_discrete_vs_gaussian(n.values(), n.weights(), 1.0) == doctest::Approx(1.0).epsilon(0.01));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 2), w(0.1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(4), q(4);
    double tot = 0;
    for (int j = 0; j < 4; ++j) tot += (q[j] = w(rng)), v[j] = u(rng);
    for (double& x : q) x /= tot;
    std::vector<std::pair<double, double>> atoms;
    for (int j = 0; j < 4; ++j) atoms.emplace_back(v[j], q[j]);
    CHECK(std::abs(w2sq_discrete_vs_gaussian(v, q, 0.8) - w2sq_oracle(atoms, 0.8)) <= 1e-10);
  }
}

TEST_CASE("quantile objective") {
  {
    const IbmotProblem p(DiscreteMarginal::dirac(0), DiscreteMarginal::dirac(0), 2.0);
    const auto q = ibmot_objective_quantile(p, {{1.0}});
    CHECK(q.value == doctest::Approx(2.0));
    CHECK(std::abs(q.KI) <= 1e-12);
  }
  {
    const IbmotProblem p(DiscreteMarginal::dirac(0), DiscreteMarginal({-1, 1}, {0.5, 0.5}));
    const auto q = ibmot_objective_quantile(p, {{0.5, 0.5}});
    CHECK(q.value == doctest::Approx(2 - 4 * oracle::phi(0)).epsilon(1e-12));
    CHECK(q.KI == doctest::Approx(2 * oracle::phi(0)).epsilon(1e-7));
    CHECK_THROWS_AS(ibmot_objective_quantile(p, {{0.4, 0.6}}), ConfigError);
    CHECK_THROWS_AS(ibmot_objective_quantile(p, {{0.5, 0.5}, {0.5, 0.5}}), ConfigError);
  }
  {
    // finely discretised Brownian kernel, rows tilted onto their barycentre
    const auto mu = DiscreteMarginal::normal(0, 1, 60);
    std::vector<double> y;
    for (int j = -120; j <= 120; ++j) y.push_back(j * 0.05);
    Matrix k(mu.size(), std::vector<double>(y.size()));
    std::vector<double> nu(y.size(), 0.0);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double x = mu.values()[i];
      double lam = 0;
      for (int it = 0; it < 50; ++it) {
        double z = 0, m = 0, v = 0;
        for (std::size_t j = 0; j < y.size(); ++j) {
          const double e = std::exp(-0.5 * (y[j] - x) * (y[j] - x) + lam * y[j]);
          z += e, m += e * y[j], v += e * y[j] * y[j];
        }
        m /= z, v = v / z - m * m;
        lam -= (m - x) / v;
      }
      double z = 0;
      for (std::size_t j = 0; j < y.size(); ++j) z += (k[i][j] = std::exp(-0.5 * (y[j] - x) * (y[j] - x) + lam * y[j]));
      for (std::size_t j = 0; j < y.size(); ++j) nu[j] += mu.weights()[i] * (k[i][j] /= z);
    }
    const IbmotProblem p(mu, DiscreteMarginal(y, nu));
    const auto q = ibmot_objective_quantile(p, k, 1e-9);
    CHECK(q.value == doctest::Approx(1.0).epsilon(0.02));
    CHECK(q.KI == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("K_I is bounded by sqrt(T (E X1^2 - E X0^2)) but not by E X1^2 - E X0^2") {
  for (int i = 0; i < 3; ++i) {
    const auto inst = two_by_three(P[i], C[i], A[i]);
    const auto& p = inst.problem;
    const double spread = p.T * (p.nu.second_moment() - p.mu.second_moment());
    for (int s = 0; s <= 10; ++s) {
      const double c = inst.seg.lo() + (inst.seg.hi() - inst.seg.lo()) * s / 10.0;
      CHECK(ibmot_objective_quantile(p, inst.seg.kernel(c)).KI <= std::sqrt(spread) + 1e-12);
    }
  }
  const auto p = gaussian15();
  const auto sol = solve_ibmot(p);
  const double spread = p.nu.second_moment() - p.mu.second_moment();
  CHECK(sol.objective_KI <= std::sqrt(spread) + 1e-12);
  CHECK(sol.objective_KI > spread);
}

TEST_CASE("monte carlo objective") {
  {
    const auto cfg = RapConfig::standard(GaussMarkovDriver::brownian(), Partition::equispaced(0, 1, 1, 1000),
                                         CouplingKernel::brownian(1.0, 1.0));
    const auto mc = ibmot_objective_mc(cfg, 2000, 3);
    CHECK(mc.n_paths == 2000);
    CHECK(std::abs(mc.integral - 1.0) <= 4 * mc.integral_se + 0.01);
    CHECK(std::abs(mc.terminal - 1.0) <= 4 * mc.terminal_se + 0.01);
  }
  {
    const auto cfg = RapConfig::standard(GaussMarkovDriver::brownian(), Partition::equispaced(0, 1, 1, 100),
                                         CouplingKernel::constant(0.3, 1));
    const auto mc = ibmot_objective_mc(cfg, 200, 3);
    CHECK(std::abs(mc.integral) <= 1e-12);
    CHECK(std::abs(mc.terminal) <= 4 * mc.terminal_se + 1e-12);
  }
  {
    const auto cfg = RapConfig::standard(GaussMarkovDriver::brownian(), Partition::equispaced(0, 1, 1, 500),
                                         builtin_kernel("uniform_mot"));
    const auto mc = ibmot_objective_mc(cfg, 4000, 11);
    CHECK(std::abs(mc.integral - mc.terminal) <= 4 * mc.diff_se);
    double value = 0;
    const int atoms = 2000;
    for (int k = 0; k < atoms; ++k) {
      const double x = -1 + (2 * k + 1.0) / atoms;
      value += w2sq_oracle({{1.5 * x + 0.5, 0.75}, {-0.5 * x - 1.5, 0.25}}, 1.0) / atoms;
    }
    const double KIq = (4.0 / 3.0 + 1.0 - value) / 2;
    CHECK(mc.integral <= KIq + 3 * mc.integral_se);
  }
  CHECK_THROWS_AS(ibmot_objective_mc(RapConfig::standard(GaussMarkovDriver::brownian(), Partition::equispaced(0, 1, 1, 50),
                                                         builtin_kernel("independent_pm1")),
                                     10, 1),
                  ConfigError);
  CHECK_THROWS_AS(ibmot_objective_mc(RapConfig::standard(GaussMarkovDriver::brownian(), Partition::equispaced(0, 1, 1, 50),
                                                         builtin_kernel("binary_pm1")),
                                     1, 1),
                  ConfigError);
}

TEST_CASE("template RAP carries the discrete kernel") {
  const auto inst = two_by_three(0.3, 0.1, 0.15);
  auto p = inst.problem;
  p.steps = 200;
  const auto k = inst.seg.kernel(0.12);
  const auto cfg = ibmot_rap_template(p, k);
  CHECK(cfg.coupling().is_martingale());
  const auto mc = ibmot_objective_mc(p, k, 3000, 2);
  const auto q = ibmot_objective_quantile(p, k);
  CHECK(mc.integral <= q.KI + 3 * mc.integral_se);
  CHECK(std::abs(mc.integral - mc.terminal) <= 4 * mc.diff_se);
}

TEST_CASE("trivial and degenerate instances") {
  const IbmotProblem p(DiscreteMarginal::dirac(0), DiscreteMarginal({-1, 1}, {0.5, 0.5}));
  const auto sol = solve_ibmot(p);
  CHECK(sol.kernel[0][0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sol.kernel[0][1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sol.converged);
  CHECK_THROWS_AS(IbmotProblem(DiscreteMarginal::dirac(0), DiscreteMarginal::dirac(0), 0.0), ConfigError);
}

TEST_CASE("2x3 instances agree with brute force") {
  for (int i = 0; i < 3; ++i) {
    CAPTURE(i);
    const auto inst = two_by_three(P[i], C[i], A[i]);
    const double c = inst.seg.argmin(), best = inst.seg.value(c);
    const auto seg = ibmot_segment_search(inst.problem);
    CHECK(seg.dimension == 1);
    CHECK(std::abs(seg.objective - best) <= 1e-8);
    for (auto method : {IbmotMethod::barrier, IbmotMethod::frank_wolfe}) {
      IbmotOptions o;
      o.method = method;
      const auto sol = solve_ibmot(inst.problem, o);
      CHECK(sol.converged);
      CHECK(std::abs(sol.objective_quantile - best) <= 1e-5);
      CHECK(max_abs_diff(sol.kernel, inst.seg.kernel(c)) <= 1e-2);
      CHECK(polytope_violation(inst.problem, sol.pi) <= 1e-9);
    }
  }
}

TEST_CASE("gaussian 15-atom optimum") {
  const auto p = gaussian15();
  const auto sol = solve_ibmot(p);
  CHECK(sol.converged);
  CHECK(sol.duality_gap <= 1e-7);
  CHECK(coupling_correlation(p, sol.kernel) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(0.05 * std::sqrt(2.0)));
  CHECK(polytope_violation(p, sol.pi) <= 1e-9);
  for (std::size_t i = 0; i < p.m(); ++i) {
    double s = 0, m = 0;
    for (std::size_t j = 0; j < p.n(); ++j) s += sol.kernel[i][j], m += sol.kernel[i][j] * p.nu.values()[j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(m - p.mu.values()[i]) <= 1e-7);
  }
  CHECK(max_abs_diff(kernel_from_joint(p, sol.pi), sol.kernel) <= 1e-12);

  IbmotOptions o;
  o.start_seed = 7;
  const auto other = solve_ibmot(p, o);
  double tv = 0;
  for (std::size_t i = 0; i < p.m(); ++i)
    for (std::size_t j = 0; j < p.n(); ++j) tv += 0.5 * std::abs(sol.pi[i][j] - other.pi[i][j]);
  CHECK(tv <= 1e-3);
}

TEST_CASE("convex order violations are infeasible") {
  const IbmotProblem p(DiscreteMarginal::normal(0, 2, 15), DiscreteMarginal::normal(0, 1, 15));
  CHECK_THROWS_AS(solve_ibmot(p), InfeasibleError);
  CHECK_THROWS_AS(lp_oracle(Matrix(15, std::vector<double>(15, 0.0)), p), InfeasibleError);
  try {
    solve_ibmot(p);
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("k =") != std::string::npos);
  }
}

TEST_CASE("LP oracle") {
  const auto p = gaussian15();
  const auto pi0 = lp_oracle(Matrix(15, std::vector<double>(15, 0.0)), p);
  CHECK(polytope_violation(p, pi0) <= 1e-9);

  for (int i = 0; i < 3; ++i) {
    const auto inst = two_by_three(P[i], C[i], A[i]);
    std::mt19937_64 rng(i);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 5; ++trial) {
      Matrix cost(2, std::vector<double>(3));
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 3; ++b)
          cost[a][b] = trial == 0 ? -inst.problem.mu.values()[a] * inst.problem.nu.values()[b] : z(rng);
      auto dot = [&](const Matrix& pi) {
        double s = 0;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 3; ++b) s += cost[a][b] * pi[a][b];
        return s;
      };
      // linear cost on a segment: the minimum sits at an endpoint
      const double best = std::min(dot(joint(inst.problem, inst.seg.kernel(inst.seg.lo()))),
                                   dot(joint(inst.problem, inst.seg.kernel(inst.seg.hi()))));
      const auto pi = lp_oracle(cost, inst.problem);
      CHECK(polytope_violation(inst.problem, pi) <= 1e-9);
      CHECK(std::abs(dot(pi) - best) <= 1e-9);
    }
  }
}

TEST_CASE("Frank-Wolfe history is monotone and feasible") {
  const auto inst = two_by_three(0.3, 0.1, 0.15);
  IbmotOptions o;
  o.method = IbmotMethod::frank_wolfe;
  const auto sol = solve_ibmot(inst.problem, o);
  REQUIRE(!sol.history.empty());
  for (std::size_t k = 1; k < sol.history.size(); ++k) CHECK(sol.history[k] <= sol.history[k - 1] + 1e-12);
  CHECK(sol.history.back() == doctest::Approx(sol.objective_quantile).epsilon(1e-12));
  CHECK(polytope_violation(inst.problem, sol.pi) <= 1e-9);

  const IbmotProblem p(DiscreteMarginal::uniform(-1, 1, 5), DiscreteMarginal::uniform(-2, 2, 7));
  const auto fw = solve_ibmot(p, o);
  const auto br = solve_ibmot(p);
  for (std::size_t k = 1; k < fw.history.size(); ++k) CHECK(fw.history[k] <= fw.history[k - 1] + 1e-12);
  CHECK(polytope_violation(p, fw.pi) <= 1e-9);
  CHECK(fw.objective_quantile == doctest::Approx(br.objective_quantile).epsilon(1e-5));
}

TEST_CASE("segment search rejects higher-dimensional polytopes") {
  CHECK_THROWS_AS(ibmot_segment_search(gaussian15()), ConfigError);
}
