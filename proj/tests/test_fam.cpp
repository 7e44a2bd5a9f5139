#include <algorithm>
#include <cmath>
#include <sstream>

#include "arcade/catalog.hpp"
#include "arcade/errors.hpp"
#include "arcade/fam.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace arcade;

namespace {

RapConfig bb(const CouplingKernel& k, std::size_t steps = 100) {
  return RapConfig::standard(GaussMarkovDriver::brownian(), Partition::equispaced(0, 1, 1, steps), k);
}

ChainStep affine(std::vector<double> slope, std::vector<double> shift, std::vector<double> prob) {
  ChainStep s;
  s.kind = ChainStep::Kind::affine_mixture;
  s.slope = std::move(slope);
  s.shift = std::move(shift);
  s.prob = std::move(prob);
  return s;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("tanh closed form of the binary filter") {
  const auto cfg = bb(builtin_kernel("binary_pm1"));
  CHECK(fam_filter_discrete(cfg, 0.5, 1.3, {1.0}) == doctest::Approx(1.5370496).epsilon(1e-7));
  CHECK(fam_filter_discrete(cfg, 0.0, 0.0, {1.0}) == 1.0);
  CHECK(fam_filter_discrete(cfg, 0.37, -1.0, {-1.0}) == doctest::Approx(-1.0).epsilon(1e-15));
  double worst = 0, worst_vol = 0;
  for (int a = 0; a < 20; ++a)
    for (int b = 0; b < 20; ++b) {
      const double t = 0.025 + 0.95 * a / 19.0, x0 = b % 2 ? 1.0 : -1.0;
      const double I = -3.0 + 6.0 * b / 19.0;
      const double z = (I - x0) / (1 - t);
      const double M = fam_filter_discrete(cfg, t, I, {x0});
      worst = std::max(worst, std::abs(M - (x0 + std::tanh(z))));
      const double sech = 1 / std::cosh(z);
      worst_vol = std::max(worst_vol, std::abs(fam_volatility(cfg, t, I, {x0}, M) - sech * sech / (1 - t)));
    }
  CHECK(worst <= 1e-10);
  CHECK(worst_vol <= 1e-9);
}

TEST_CASE("volatility") {
  const auto cfg = bb(builtin_kernel("uniform_mot"));
  const FamFilter f(cfg);
  const double h[1] = {0.3};
  for (double t : {0.2, 0.6, 0.9}) {
    const auto po = f.at(t, 0.5, h);
    CHECK(fam_volatility(cfg, t, 0.5, {0.3}, po.mean) == doctest::Approx(po.var() / (1 - t)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(fam_volatility(cfg, 1.0, 0.5, {0.3}, 0.3), DomainError);
  CHECK_THROWS_AS(fam_volatility(cfg, 0.0, 0.5, {0.3}, 0.3), DomainError);
  CHECK_THROWS_AS(fam_vol_factor(cfg, 1.0), DomainError);
  const auto fixed = bb(CouplingKernel::constant(0.4, 1));
  CHECK(fam_volatility(fixed, 0.5, 1.0, {0.4}, 0.4) == 0.0);

  const double th = 0.7, sg = 1.3;
  const auto ou = RapConfig::standard(GaussMarkovDriver::ou(th, sg), Partition({0.0, 2.0}, 10), builtin_kernel("binary_pm1"));
  for (double s : {0.3, 1.1, 1.9})
    CHECK(fam_vol_factor(ou, s) ==
          doctest::Approx((2 * th / sg) / (std::exp(th * (2 - s)) - std::exp(th * (s - 2)))).epsilon(1e-6));
  const auto tb = RapConfig::standard(GaussMarkovDriver::scaled_bm(), Partition({0.5, 2.0}, 10), builtin_kernel("binary_pm1"));
  for (double s : {0.6, 1.5}) CHECK(fam_vol_factor(tb, s) == doctest::Approx(1 / (4.0 - 2.0 * s)).epsilon(1e-12));
}

TEST_CASE("continuous targets") {
  {
    const auto cfg = bb(builtin_kernel("brownian"));
    for (double t : {0.1, 0.5, 0.95})
      for (double I : {-1.0, 0.3, 2.2}) CHECK(std::abs(fam_filter_continuous(cfg, t, I, {0.4}) - I) <= 1e-8);
    CHECK(fam_filter_continuous(cfg, 0.0, 0.7, {0.7}) == 0.7);
    CHECK_THROWS_AS(fam_filter_discrete(cfg, 0.5, 0.0, {0.0}), ConfigError);
  }
  {
    // X_1 = c0 + c1 X_0 + N(0, v) on an OU bridge with a non-zero mean
    ChainStep s;
    s.kind = ChainStep::Kind::gaussian;
    s.c0 = 0.2;
    s.c1 = 0.9;
    s.v = 0.7;
    const auto k = CouplingKernel::discrete_chain(DiscreteMarginal({-1.0, 0.5}, {0.4, 0.6}), {s});
    const auto d = GaussMarkovDriver::ou(1.0, 1.0, 0.5, 2.0, 0.5);
    const Partition p({0.5, 1.5}, 10);
    const RapConfig cfg(ArcadeConfig(d, standard_coefficients(d, p)), standard_coefficients(d, p), k);
    const FamFilter quad(cfg, FilterMode::automatic, ContinuousMethod::quadrature);
    const FamFilter conj(cfg, FilterMode::automatic, ContinuousMethod::conjugate);
    for (double t : {0.7, 1.0, 1.4})
      for (double x0 : {-1.0, 0.5})
        for (double I : {-2.0, 0.1, 1.7}) {
          const auto g = cfg.signal().eval_all(t);
          const double mu = cfg.arcade().mean(t), sa = std::sqrt(cfg.arcade().variance(t));
          const double m = s.c0 + s.c1 * x0, sd = std::sqrt(s.v);
          double num = 0, den = 0;
          const int K = 200000;
          for (int j = 0; j <= K; ++j) {
            const double y = m - 15 * sd + 30 * sd * j / K;
            const double w = oracle::phi((y - m) / sd) * oracle::phi((I - g[0] * x0 - g[1] * y - mu) / sa);
            num += y * w;
            den += w;
          }
          const double h[1] = {x0};
          CHECK(std::abs(fam_filter_continuous(cfg, t, I, {x0}) - num / den) <= 1e-6);
          CHECK(std::abs(quad.at(t, I, h).mean - conj.at(t, I, h).mean) <= 1e-8);
          CHECK(std::abs(quad.at(t, I, h).second - conj.at(t, I, h).second) <= 1e-7);
        }
  }
}

TEST_CASE("filter modes") {
  CHECK_THROWS_AS(FamFilter(bb(builtin_kernel("independent_pm1")), FilterMode::reduced), ConfigError);
  CHECK_FALSE(FamFilter(bb(builtin_kernel("independent_pm1"))).reduced());
  CHECK(FamFilter(bb(builtin_kernel("binary_pm1"))).reduced());
  const Partition p({0.0, 1.0, 2.0}, 10);
  const DiscreteMarginal pm1({-1, 1}, {0.5, 0.5});
  CHECK(FamFilter(exf_rap(p)).reduced() == false);
  const auto chain = CouplingKernel::discrete_chain(pm1, {affine({1, 1}, {-1, 1}, {0.5, 0.5}), affine({1, 1}, {-1, 1}, {0.5, 0.5})});
  const RapConfig bad(ArcadeConfig(GaussMarkovDriver::brownian(), nonstarcade_coefficients(p)),
                      violating_signal_coefficients(p), chain);
  CHECK_THROWS_AS(FamFilter(bad, FilterMode::reduced), ConfigError);
  CHECK_THROWS_AS(fam_filter_discrete(bb(builtin_kernel("binary_pm1")), 1.5, 0, {1.0}), DomainError);
  CHECK_THROWS_AS(fam_filter_discrete(RapConfig::standard(GaussMarkovDriver::brownian(), p, chain), 1.5, 0, {1.0}),
                  ConfigError);
}

TEST_CASE("two-arc reduction matches brute-force conditioning") {
  const Partition p({0.0, 1.0, 2.0}, 20);
  const DiscreteMarginal pm1({-1, 1}, {0.5, 0.5});
  // anticipative bridges on [0,1] and [1,2] with linear signals
  auto g = [](double t) {
    return t <= 1 ? std::vector<double>{1 - t, t, 0.0} : std::vector<double>{0.0, 2 - t, t - 1};
  };
  auto var = [](double t) { return t <= 1 ? t * (1 - t) : (t - 1) * (2 - t); };
  for (bool drift : {false, true}) {
    // the drifting second step makes the chain a non-martingale, which only the full filter handles
    const auto step2 = drift ? affine({1, 1}, {-0.5, 1.5}, {0.5, 0.5}) : affine({1, 1}, {-1, 1}, {0.5, 0.5});
    const auto chain = CouplingKernel::discrete_chain(pm1, {affine({1, 1}, {-1, 1}, {0.5, 0.5}), step2});
    const auto cfg = RapConfig::standard(GaussMarkovDriver::brownian(), p, chain);
    const FamFilter full(cfg, FilterMode::full);
    std::optional<FamFilter> reduced;
    if (!drift) reduced.emplace(cfg, FilterMode::reduced);
    int probes = 0;
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 10; ++b) {
        const double t = a < 3 ? 0.1 + 0.35 * a : 1.2 + 0.35 * (a - 3);
        const double x0 = b % 2 ? 1.0 : -1.0, x1 = x0 + (b % 4 < 2 ? 1.0 : -1.0);
        const double I = -2.5 + 0.5 * b;
        const auto gt = g(t);
        double num = 0, den = 0;
        for (double e1 : {-1.0, 1.0})
          for (int c = 0; c < 2; ++c) {
            const double y1 = t <= 1 ? x0 + e1 : x1;
            if (t > 1 && e1 > 0) continue;
            const double y2 = drift ? y1 + (c ? 1.5 : -0.5) : y1 + (c ? 1.0 : -1.0);
            const double z = (I - gt[0] * x0 - gt[1] * y1 - gt[2] * y2) / std::sqrt(var(t));
            const double w = std::exp(-0.5 * z * z);
            num += y2 * w;
            den += w;
          }
        const double hist[2] = {x0, x1};
        const double brute = num / den;
        CHECK(std::abs(full.at(t, I, hist).mean - brute) <= 1e-10);
        if (reduced) {
          // reduced filtering targets X_{m+1}, which equals E[X_2 | ...] under the martingale chain
          CHECK(std::abs(reduced->at(t, I, hist).mean - brute) <= 1e-10);
        }
        ++probes;
      }
    CHECK(probes == 50);
  }
}

TEST_CASE("FAM paths: boundary values, martingale mean and orthogonality") {
  const auto cfg = bb(builtin_kernel("uniform_mot"), 100);
  const std::size_t N = 20000;
  const auto tr = fam_paths(cfg, N, 31);
  CHECK(tr.info.reduced);
  CHECK(tr.info.innovations);
  for (std::size_t i = 0; i < N; ++i) {
    CHECK(tr.M(i, 0) == tr.X(i, 0));
    CHECK(tr.M(i, 100) == tr.X(i, 1));
    CHECK(tr.W(i, 0) == 0.0);
  }
  for (std::size_t k = 0; k <= 100; k += 5) {
    oracle::Moments d;
    for (std::size_t i = 0; i < N; ++i) d.add(tr.M(i, k) - tr.X(i, 0));
    CHECK(std::abs(d.mean()) <= 3 * d.se() + 1e-15);
  }
  const std::size_t s = 30, t = 70;
  for (int h = 0; h < 5; ++h) {
    oracle::Moments m;
    for (std::size_t i = 0; i < N; ++i) {
      const double ms = tr.M(i, s);
      const double hv = h == 0 ? 1.0 : h == 1 ? tr.X(i, 0) : h == 2 ? tr.I(i, s) : h == 3 ? ms : ms * ms;
      m.add((tr.M(i, t) - ms) * hv);
    }
    CAPTURE(h);
    CHECK(std::abs(m.mean()) <= 3 * m.se());
  }
  // the error to the target shrinks over the last grid steps
  std::vector<double> rmse;
  for (std::size_t k = 90; k < 100; ++k) {
    double e = 0;
    for (std::size_t i = 0; i < N; ++i) e += (tr.M(i, k) - tr.X(i, 1)) * (tr.M(i, k) - tr.X(i, 1));
    rmse.push_back(std::sqrt(e / N));
  }
  for (std::size_t k = 1; k < rmse.size(); ++k) CHECK(rmse[k] < rmse[k - 1]);
}

TEST_CASE("innovations") {
  {
    const auto cfg = bb(builtin_kernel("brownian"), 1000);
    const auto tr = fam_paths(cfg, 20, 2);
    double worst = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      const auto W = innovations_path(cfg, tr, i);
      for (std::size_t k = 0; k < W.size(); ++k) {
        worst = std::max(worst, std::abs(W[k] - (tr.I(i, k) - tr.X(i, 0))));
        CHECK(W[k] == tr.W(i, k));
      }
    }
    CHECK(worst <= 1e-6);
  }
  {
    const auto cfg = bb(builtin_kernel("binary_pm1"), 1000);
    const std::size_t N = 4000;
    std::vector<double> qv;
    oracle::Moments inc;
    oracle::CoMoments corr;
    fam_for_each(cfg, N, 5, [&](std::size_t, const FamPathView& v) {
      double q = 0;
      for (std::size_t k = 0; k < 1000; ++k) q += (v.W[k + 1] - v.W[k]) * (v.W[k + 1] - v.W[k]);
      qv.push_back(q);
      const double dw = v.W[800] - v.W[300];
      inc.add(dw * dw);
      corr.add(dw, v.I[300]);
    });
    CHECK(std::abs(median(qv) - 1.0) <= 0.02);
    CHECK(std::abs(inc.mean() - 0.5) <= 3 * inc.se());
    CHECK(std::abs(corr.cov()) <= 3 * corr.se());
  }
  const Partition p({0.0, 1.0, 2.0}, 10);
  const auto ex = fam_paths(exf_rap(p), 3, 1);
  CHECK_FALSE(ex.info.innovations);
  CHECK(std::isnan(ex.W(0, 3)));
  CHECK_THROWS_AS(innovations_path(exf_rap(p), ex, 0), ConfigError);
  CHECK_THROWS_AS(innovations_path(bb(builtin_kernel("binary_pm1")), ex, 9), DomainError);
}

TEST_CASE("Ito isometry") {
  for (const char* name : {"binary_pm1", "brownian"}) {
    CAPTURE(name);
    const auto r = ito_isometry_check(bb(builtin_kernel(name), 1000), 5000, 3);
    CHECK(std::abs(r.z) <= 3);
    CHECK(r.lhs == doctest::Approx(1.0).epsilon(0.06));
    CHECK(r.rhs == doctest::Approx(1.0).epsilon(0.06));
  }
  const auto bin = ito_isometry_check(bb(builtin_kernel("binary_pm1"), 200), 100, 3);
  CHECK(bin.lhs == 1.0);
  CHECK(bin.lhs_se == 0.0);
  const auto zero = ito_isometry_check(bb(CouplingKernel::constant(0.3, 1), 200), 100, 3);
  CHECK(zero.lhs == 0.0);
  CHECK(zero.rhs == 0.0);
  CHECK(zero.z == 0.0);
  CHECK_THROWS_AS(ito_isometry_check(RapConfig::standard(GaussMarkovDriver::brownian(), Partition({0, 1, 2}, 10),
                                                         CouplingKernel::constant(0, 2)),
                                     10, 1),
                  ConfigError);
}

TEST_CASE("FAM runs are deterministic and serialize") {
  const auto cfg = bb(builtin_kernel("binary_pm1"), 50);
  const auto a = fam_paths(cfg, 700, 4), b = fam_paths(cfg, 700, 4);
  CHECK(a.M == b.M);
  CHECK(a.W == b.W);
  std::ostringstream os;
  a.write_csv(os, 3);
  const std::string s = os.str();
  CHECK(s.rfind("t,I,M,W,vol\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 52);
}
