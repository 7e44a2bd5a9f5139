#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "arcade/partition.hpp"

namespace arcade {

using ScalarFn = std::function<double(double)>;

enum class CoefficientFamily { piecewise_linear, lagrange, lagrange_damped, elliptic, standard, gram, explicit_table };
enum class CoefficientRole { noise_f, signal_g };

const char* family_name(CoefficientFamily f);
CoefficientFamily family_from_name(const std::string& name);

// K(s,t) = h1(min) h2(max) together with first derivatives (used by standard families).
struct CovarianceFactors {
  ScalarFn h1, h2, dh1, dh2;
  double cov(double s, double t) const { return s <= t ? h1(s) * h2(t) : h1(t) * h2(s); }
};

namespace detail {
struct CoefficientImpl {
  virtual ~CoefficientImpl() = default;
  virtual double eval(std::size_t i, double t) const = 0;
  virtual void eval_all(double t, double* out) const;
  // derivative of the restriction to the arc containing t (right derivative at dates)
  virtual double deriv(std::size_t i, double t) const;
  const Partition* part = nullptr;
  std::size_t n1 = 0;  // number of coefficients
};
}  // namespace detail

class CoefficientSet {
 public:
  static CoefficientSet piecewise_linear(const Partition& p, CoefficientRole role = CoefficientRole::noise_f);
  static CoefficientSet lagrange(const Partition& p, CoefficientRole role = CoefficientRole::noise_f);
  static CoefficientSet elliptic(const Partition& p, CoefficientRole role = CoefficientRole::noise_f);
  // closed form from the covariance factors; throws ConfigError on a degenerate arc
  static CoefficientSet standard(const Partition& p, const CovarianceFactors& k,
                                 CoefficientRole role = CoefficientRole::noise_f);
  // solution of sum_j f_j(t) K(T_i,T_j) = K(t,T_i) with zero-variance dates removed
  static CoefficientSet gram(const Partition& p, const CovarianceFactors& k,
                             CoefficientRole role = CoefficientRole::noise_f);
  // values[i][k] = f_i at grid node k
  static CoefficientSet explicit_table(const Partition& p, std::vector<std::vector<double>> values,
                                       CoefficientRole role = CoefficientRole::noise_f);
  // samples fn(i, t) on the grid
  static CoefficientSet tabulate(const Partition& p, const std::function<double(std::size_t, double)>& fn,
                                 CoefficientRole role = CoefficientRole::noise_f);

  double operator()(std::size_t i, double t) const;
  std::vector<double> eval_all(double t) const;
  double derivative(std::size_t i, double t) const;

  CoefficientFamily family() const { return family_; }
  CoefficientRole role() const { return role_; }
  CoefficientSet with_role(CoefficientRole r) const;
  const Partition& partition() const { return *part_; }
  std::size_t size() const { return part_->n() + 1; }

  // grid-sampled values, rows = coefficient index
  std::vector<std::vector<double>> table() const;

 private:
  CoefficientSet(CoefficientFamily f, CoefficientRole r, std::shared_ptr<const Partition> p,
                 std::shared_ptr<const detail::CoefficientImpl> impl)
      : family_(f), role_(r), part_(std::move(p)), impl_(std::move(impl)) {}

  friend CoefficientSet damp_lagrange(const CoefficientSet& set);

  CoefficientFamily family_;
  CoefficientRole role_;
  std::shared_ptr<const Partition> part_;
  std::shared_ptr<const detail::CoefficientImpl> impl_;
};

double damping_map(double x);
CoefficientSet damp_lagrange(const CoefficientSet& set);

double eval_coefficient(const CoefficientSet& set, std::size_t i, double t);

struct CoefficientReport {
  double max_diag_error = 0;     // max |f_i(T_i) - 1|
  double max_offdiag = 0;        // max |f_i(T_j)|, j != i
  double max_jump = 0;           // max adjacent-node jump
  double continuity_modulus = 0; // max jump / sqrt(step / arc length)
  double continuity_bound = 0;
  double tol = 0;
  bool pass = false;
};

CoefficientReport validate_coefficient_set(const CoefficientSet& set, double tol, double continuity_c = 10.0);

}  // namespace arcade
