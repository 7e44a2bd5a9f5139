#include <cmath>
#include <random>
#include <sstream>

#include "arcade/driver.hpp"
#include "arcade/errors.hpp"
#include "arcade/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace arcade;

TEST_CASE("covariance examples") {
  CHECK(driver_covariance(GaussMarkovDriver::brownian(), 1, 3) == 1.0);
  CHECK(driver_covariance(GaussMarkovDriver::brownian(), 3, 1) == 1.0);
  CHECK(driver_covariance(GaussMarkovDriver::ou(1, std::sqrt(2.0)), 0, 1) == doctest::Approx(std::exp(-1.0)));
  CHECK(driver_covariance(GaussMarkovDriver::scaled_bm(), 1, 2) == doctest::Approx(2.0));
  CHECK_THROWS_AS(driver_covariance(GaussMarkovDriver::brownian(), -1, 1), DomainError);
  CHECK_THROWS_AS(GaussMarkovDriver::ou(-1, 1), ConfigError);
}

TEST_CASE("OU mean relaxes towards mu") {
  const auto d = GaussMarkovDriver::ou(2.0, 1.0, 3.0, 1.0, 0.5);
  CHECK(d.mean(0.5) == doctest::Approx(1.0));
  CHECK(d.mean(1.5) == doctest::Approx(3.0 - 2.0 * std::exp(-2.0)));
  CHECK(d.dmean(1.5) == doctest::Approx(4.0 * std::exp(-2.0)));
}

TEST_CASE("Markov transition identity of the factorized covariance") {
  for (const auto& d : {GaussMarkovDriver::brownian(), GaussMarkovDriver::ou(0.7, 1.3), GaussMarkovDriver::scaled_bm()}) {
    for (double r : {0.2, 0.9})
      for (double s : {1.0, 1.4})
        for (double t : {1.5, 3.0}) {
          const double lhs = d.covariance(r, t), rhs = d.covariance(r, s) * d.covariance(s, t) / d.covariance(s, s);
          CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
        }
  }
}

TEST_CASE("driver validation") {
  const Partition p = Partition::equispaced(0, 2, 2, 10);
  CHECK_NOTHROW(GaussMarkovDriver::brownian().validate_on(p));
  const GaussMarkovDriver tilted([](double t) { return 1.0 + t; }, [](double t) { return 3.0 - t; },
                                 [](double) { return 0.0; }, "tilted");
  CHECK_NOTHROW(tilted.validate_on(Partition::equispaced(0, 1, 1, 4)));
  const GaussMarkovDriver shrinking([](double) { return 1.0; }, [](double t) { return 1.0 + t; },
                                    [](double) { return 0.0; }, "shrinking");
  CHECK_THROWS_AS(shrinking.validate_on(p), ConfigError);
  const GaussMarkovDriver flat([](double) { return 0.0; }, [](double) { return 1.0; }, [](double) { return 0.0; },
                               "flat");
  CHECK_THROWS_AS(flat.validate_on(p), ConfigError);
}

TEST_CASE("simulated variances") {
  const std::size_t N = 100000;
  {
    const auto b = simulate_driver(GaussMarkovDriver::brownian(), Partition::equispaced(0, 1, 1, 4), N, 11);
    oracle::Moments m;
    for (std::size_t i = 0; i < N; ++i) {
      CHECK(b.values(i, 0) == 0.0);
      m.add(b.values(i, 4) * b.values(i, 4));
    }
    CHECK(std::abs(m.mean() - 1.0) <= 3 * m.se());
  }
  {
    const auto b = simulate_driver(GaussMarkovDriver::ou(1, std::sqrt(2.0)), Partition::equispaced(0, 3, 3, 2), N, 12);
    for (std::size_t k = 0; k < b.n_nodes(); ++k) {
      oracle::Moments m;
      for (std::size_t i = 0; i < N; ++i) m.add(b.values(i, k));
      CHECK(std::abs(m.mean()) <= 3 * m.se());
      CHECK(m.var() == doctest::Approx(1.0).epsilon(0.02));
    }
  }
}

TEST_CASE("empirical covariance matches K_D on a 5x5 grid") {
  const std::size_t N = 100000;
  for (const auto& d : {GaussMarkovDriver::brownian(), GaussMarkovDriver::ou(1, std::sqrt(2.0)),
                        GaussMarkovDriver::scaled_bm()}) {
    CAPTURE(d.label());
    const Partition p = Partition::equispaced(0, 2, 1, 5);
    const auto b = simulate_driver(d, p, N, 5);
    for (std::size_t s = 1; s < 6; ++s)
      for (std::size_t t = s; t < 6; ++t) {
        oracle::CoMoments c;
        for (std::size_t i = 0; i < N; ++i) c.add(b.values(i, s), b.values(i, t));
        CHECK(std::abs(c.cov() - d.covariance(p.grid()[s], p.grid()[t])) <= 3 * c.se());
      }
  }
}

TEST_CASE("sequential sampling agrees with Cholesky sampling in law") {
  const auto d = GaussMarkovDriver::ou(0.8, 1.2);
  const Partition p = Partition::equispaced(0.5, 3.0, 1, 5);
  const auto& g = p.grid();
  const std::size_t N = 100000, K = g.size();
  Eigen::MatrixXd C(K, K);
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = 0; b < K; ++b) C(a, b) = d.covariance(g[a], g[b]);
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(C).matrixL();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z;
  RowMatrix chol(N, K);
  for (std::size_t i = 0; i < N; ++i) {
    Eigen::VectorXd e(K);
    for (auto& x : e) x = z(rng);
    chol.row(i) = (L * e).transpose();
  }
  const auto seq = simulate_driver(d, p, N, 77);
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = a; b < K; ++b) {
      oracle::CoMoments c1, c2;
      for (std::size_t i = 0; i < N; ++i) {
        c1.add(seq.values(i, a), seq.values(i, b));
        c2.add(chol(i, a), chol(i, b));
      }
      CHECK(std::abs(c1.cov() - c2.cov()) <= 3 * std::hypot(c1.se(), c2.se()));
    }
}

TEST_CASE("quadratic variation") {
  const Partition p = Partition::equispaced(0.5, 2.5, 2, 200);
  CHECK(driver_quadratic_variation(GaussMarkovDriver::brownian(), p, 2.0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(driver_quadratic_variation(GaussMarkovDriver::ou(1.3, 0.9), p, 2.5) ==
        doctest::Approx(0.81 * 2.0).epsilon(1e-9));
  const double qv = driver_quadratic_variation(GaussMarkovDriver::scaled_bm(), p, 2.5);
  CHECK(qv == doctest::Approx((std::pow(2.5, 3) - std::pow(0.5, 3)) / 3).epsilon(1e-4));
  CHECK(driver_quadratic_variation(GaussMarkovDriver::brownian(), p, 0.5) == 0.0);
  CHECK_THROWS_AS(driver_quadratic_variation(GaussMarkovDriver::brownian(), p, 3.0), DomainError);
}

TEST_CASE("path bundles are reproducible and use independent streams") {
  const Partition p = Partition::equispaced(0, 1, 2, 5);
  auto csv = [&](std::uint64_t seed) {
    std::ostringstream os;
    simulate_driver(GaussMarkovDriver::brownian(), p, 4, seed).write_csv(os);
    return os.str();
  };
  CHECK(csv(3) == csv(3));
  CHECK(csv(3) != csv(4));
  const std::string s = csv(3);
  CHECK(s.rfind("t,path_0,path_1,path_2,path_3\n", 0) == 0);

  // path i depends only on (seed, i)
  const auto a = simulate_driver(GaussMarkovDriver::brownian(), p, 3, 9);
  const auto b = simulate_driver(GaussMarkovDriver::brownian(), p, 8, 9);
  for (std::size_t k = 0; k < p.n_nodes(); ++k) CHECK(a.values(2, k) == b.values(2, k));
  CHECK(make_stream(9, "D", 0)() != make_stream(9, "X", 0)());
  CHECK(stream_seed(9, "D", 1) == splitmix64(splitmix64(9 ^ stream_tag("D")) ^ 1));
}

TEST_CASE("format_double round-trips") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-17, 12345.678, 0.0}) CHECK(std::stod(format_double(x)) == x);
  CHECK(format_double(0.5) == "0.5");
}
