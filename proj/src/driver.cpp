#include "arcade/driver.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <random>

#include "arcade/errors.hpp"
#include "arcade/parallel.hpp"
#include "arcade/rng.hpp"

namespace arcade {

GaussMarkovDriver::GaussMarkovDriver(ScalarFn h1, ScalarFn h2, ScalarFn mean, std::string label, ScalarFn dh1,
                                     ScalarFn dh2, ScalarFn dmean)
    : h1_(std::move(h1)),
      h2_(std::move(h2)),
      mean_(std::move(mean)),
      dh1_(std::move(dh1)),
      dh2_(std::move(dh2)),
      dmean_(std::move(dmean)),
      label_(std::move(label)) {
  if (!h1_ || !h2_) throw ConfigError("driver needs H1 and H2");
  if (!mean_) mean_ = [](double) { return 0.0; };
}

GaussMarkovDriver GaussMarkovDriver::brownian() {
  GaussMarkovDriver d([](double t) { return t; }, [](double) { return 1.0; }, [](double) { return 0.0; }, "brownian",
                      [](double) { return 1.0; }, [](double) { return 0.0; }, [](double) { return 0.0; });
  return d;
}

GaussMarkovDriver GaussMarkovDriver::ou(double theta, double sigma, double mu, double d0, double t0) {
  if (!(theta > 0) || !(sigma > 0)) throw ConfigError("ou driver needs theta > 0 and sigma > 0");
  const double c = sigma * sigma / (2 * theta);
  GaussMarkovDriver d(
      [=](double t) { return c * std::exp(theta * t); }, [=](double t) { return std::exp(-theta * t); },
      [=](double t) { return mu + (d0 - mu) * std::exp(-theta * (t - t0)); }, "ou",
      [=](double t) { return c * theta * std::exp(theta * t); },
      [=](double t) { return -theta * std::exp(-theta * t); },
      [=](double t) { return -theta * (d0 - mu) * std::exp(-theta * (t - t0)); });
  d.params_ = {{"theta", theta}, {"sigma", sigma}, {"mu", mu}, {"d0", d0}, {"t0", t0}};
  return d;
}

GaussMarkovDriver GaussMarkovDriver::scaled_bm() {
  return GaussMarkovDriver([](double t) { return t * t; }, [](double t) { return t; }, [](double) { return 0.0; },
                           "scaled_bm", [](double t) { return 2 * t; }, [](double) { return 1.0; },
                           [](double) { return 0.0; });
}

double GaussMarkovDriver::numeric_derivative(const ScalarFn& f, double t) const {
  const double h = 1e-6 * std::max(1.0, std::abs(t));
  if (t - h < lo_) return (-3 * f(t) + 4 * f(t + h) - f(t + 2 * h)) / (2 * h);
  return (f(t + h) - f(t - h)) / (2 * h);
}

double GaussMarkovDriver::dh1(double t) const { return dh1_ ? dh1_(t) : numeric_derivative(h1_, t); }
double GaussMarkovDriver::dh2(double t) const { return dh2_ ? dh2_(t) : numeric_derivative(h2_, t); }
double GaussMarkovDriver::dmean(double t) const { return dmean_ ? dmean_(t) : numeric_derivative(mean_, t); }

void GaussMarkovDriver::check_domain(double t) const {
  if (!(t >= lo_) || !std::isfinite(t)) throw DomainError("driver time " + std::to_string(t) + " outside domain");
}

double GaussMarkovDriver::covariance(double s, double t) const {
  check_domain(s);
  check_domain(t);
  return s <= t ? h1_(s) * h2_(t) : h1_(t) * h2_(s);
}

CovarianceFactors GaussMarkovDriver::factors() const {
  CovarianceFactors k;
  k.h1 = h1_;
  k.h2 = h2_;
  // copies keep the factors usable after the driver goes away
  const GaussMarkovDriver self = *this;
  k.dh1 = [self](double t) { return self.dh1(t); };
  k.dh2 = [self](double t) { return self.dh2(t); };
  return k;
}

void GaussMarkovDriver::validate_on(const Partition& p) const {
  const auto& g = p.grid();
  double vmax = 0;
  for (double t : g) vmax = std::max(vmax, std::abs(variance(t)));
  const double tiny = 1e-14 * std::max(vmax, 1e-300);
  double prev_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double t = g[k];
    const double v = variance(t);
    if (!std::isfinite(v) || v < -tiny)
      throw ConfigError("driver '" + label_ + "': negative variance at t=" + std::to_string(t));
    const bool interior = k > 0 && k + 1 < g.size();
    if (interior && !(v + mean(t) * mean(t) > 0))
      throw ConfigError("driver '" + label_ + "': degenerate at interior t=" + std::to_string(t));
    const double b = h2_(t);
    if (v <= tiny) continue;
    if (!(b != 0.0)) throw ConfigError("driver '" + label_ + "': H2 vanishes where the variance is positive");
    const double r = h1_(t) / b;
    if (r < prev_ratio - 1e-12 * std::max(1.0, std::abs(r)))
      throw ConfigError("driver '" + label_ + "': covariance not PSD on grid (H1/H2 decreasing at t=" +
                        std::to_string(t) + ")");
    prev_ratio = r;
  }
}

double driver_covariance(const GaussMarkovDriver& d, double s, double t) { return d.covariance(s, t); }

DriverSampler::DriverSampler(const GaussMarkovDriver& d, const std::vector<double>& grid) {
  const std::size_t n = grid.size();
  mean_.resize(n);
  coef_.assign(n, 0.0);
  sd_.resize(n);
  restart_.assign(n, 0);
  double vmax = 0;
  for (double t : grid) vmax = std::max(vmax, std::abs(d.variance(t)));
  const double tiny = 1e-14 * std::max(vmax, 1e-300);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = grid[k];
    mean_[k] = d.mean(t);
    const double v = d.variance(t);
    if (k == 0 || d.variance(grid[k - 1]) <= tiny) {
      restart_[k] = 1;
      sd_[k] = v <= tiny ? 0.0 : std::sqrt(v);
      continue;
    }
    const double s = grid[k - 1];
    const double a = d.h2(t) / d.h2(s);
    // H2(t)^2 (r(t) - r(s)) with r = H1/H2
    double cv = d.h2(t) * d.h2(t) * (d.h1(t) / d.h2(t) - d.h1(s) / d.h2(s));
    if (cv < 0) {
      if (cv < -1e-12 * std::max(v, tiny))
        throw ConfigError("driver '" + d.label() + "': covariance not PSD on grid (negative transition variance)");
      cv = 0;
    }
    coef_[k] = a;
    sd_[k] = std::sqrt(cv);
  }
}

void DriverSampler::sample(std::uint64_t seed, std::uint64_t index, double* out) const {
  Rng rng = make_stream(seed, "D", index);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t k = 0; k < mean_.size(); ++k) {
    const double e = sd_[k] > 0 ? sd_[k] * z(rng) : 0.0;
    if (restart_[k])
      out[k] = mean_[k] + e;
    else
      out[k] = mean_[k] + coef_[k] * (out[k - 1] - mean_[k - 1]) + e;
  }
}

PathBundle simulate_driver(const GaussMarkovDriver& d, const Partition& p, std::size_t n_paths, std::uint64_t seed) {
  d.validate_on(p);
  PathBundle b;
  b.grid = p.grid();
  b.seed = seed;
  b.meta["driver"] = d.label();
  b.values.resize(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(b.grid.size()));
  const DriverSampler sampler(d, b.grid);
  parallel_for(n_paths, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) sampler.sample(seed, i, b.values.row(static_cast<Eigen::Index>(i)).data());
  });
  return b;
}

double driver_quadratic_variation(const GaussMarkovDriver& d, const Partition& p, double t) {
  if (!p.contains(t)) throw DomainError("quadratic variation time outside [T_0, T_n]");
  auto q = [&](double s) { return d.dh1(s) * d.h2(s) - d.h1(s) * d.dh2(s); };
  const auto& g = p.grid();
  double acc = 0;
  for (std::size_t k = 0; k + 1 < g.size() && g[k] < t; ++k) {
    const double b = std::min(g[k + 1], t);
    acc += 0.5 * (b - g[k]) * (q(g[k]) + q(b));
  }
  return acc;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void PathBundle::write_csv(std::ostream& os) const {
  os << 't';
  for (std::size_t j = 0; j < n_paths(); ++j) os << ",path_" << j;
  os << '\n';
  for (std::size_t k = 0; k < grid.size(); ++k) {
    os << format_double(grid[k]);
    for (std::size_t j = 0; j < n_paths(); ++j)
      os << ',' << format_double(values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)));
    os << '\n';
  }
}

}  // namespace arcade
