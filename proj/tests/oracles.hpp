#pragma once

// Independent reference computations used by the tests. Nothing here calls the library.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi); }
inline double Phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// bisection inverse of Phi
inline double Phi_inv(double p) {
  double lo = -40, hi = 40;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (Phi(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  const double h = (b - a) / (2 * panels);
  double s = f(a) + f(b);
  for (int k = 1; k < 2 * panels; ++k) s += f(a + k * h) * (k % 2 ? 4 : 2);
  return s * h / 3;
}

inline double lagrange_basis(const std::vector<double>& nodes, std::size_t i, double t) {
  double v = 1;
  for (std::size_t k = 0; k < nodes.size(); ++k)
    if (k != i) v *= (nodes[k] - t) / (nodes[k] - nodes[i]);
  return v;
}

// E[Y_target | Y_obs = y] for a zero-mean Gaussian vector with covariance C
inline double gaussian_conditional_mean(const Eigen::MatrixXd& C, const std::vector<int>& obs, int target,
                                        const std::vector<double>& y) {
  const int k = static_cast<int>(obs.size());
  Eigen::MatrixXd Soo(k, k);
  Eigen::VectorXd Sto(k), yy(k);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) Soo(a, b) = C(obs[a], obs[b]);
    Sto(a) = C(target, obs[a]);
    yy(a) = y[a];
  }
  return Sto.dot(Soo.ldlt().solve(yy));
}

struct Moments {
  double n = 0, sum = 0, sum2 = 0;
  void add(double x) {
    n += 1;
    sum += x;
    sum2 += x * x;
  }
  double mean() const { return sum / n; }
  double var() const { return (sum2 - sum * sum / n) / (n - 1); }
  double se() const { return std::sqrt(var() / n); }
};

// SE of the sample covariance estimator from paired samples
struct CoMoments {
  std::vector<double> a, b;
  void add(double x, double y) {
    a.push_back(x);
    b.push_back(y);
  }
  double cov() const {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) ma += a[i], mb += b[i];
    ma /= n;
    mb /= n;
    double c = 0;
    for (std::size_t i = 0; i < n; ++i) c += (a[i] - ma) * (b[i] - mb);
    return c / (n - 1);
  }
  double se() const {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) ma += a[i], mb += b[i];
    ma /= n;
    mb /= n;
    Moments m;
    for (std::size_t i = 0; i < n; ++i) m.add((a[i] - ma) * (b[i] - mb));
    return m.se();
  }
};

}  // namespace oracle
