#include "arcade/coefficients.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "arcade/errors.hpp"

namespace arcade {

const char* family_name(CoefficientFamily f) {
  switch (f) {
    case CoefficientFamily::piecewise_linear: return "piecewise_linear";
    case CoefficientFamily::lagrange: return "lagrange";
    case CoefficientFamily::lagrange_damped: return "lagrange_damped";
    case CoefficientFamily::elliptic: return "elliptic";
    case CoefficientFamily::standard: return "standard";
    case CoefficientFamily::gram: return "gram";
    case CoefficientFamily::explicit_table: return "explicit_table";
  }
  return "unknown";
}

CoefficientFamily family_from_name(const std::string& name) {
  for (auto f : {CoefficientFamily::piecewise_linear, CoefficientFamily::lagrange, CoefficientFamily::lagrange_damped,
                 CoefficientFamily::elliptic, CoefficientFamily::standard, CoefficientFamily::gram,
                 CoefficientFamily::explicit_table})
    if (name == family_name(f)) return f;
  if (name == "stitched") return CoefficientFamily::piecewise_linear;
  throw ConfigError("unknown coefficient family '" + name + "'");
}

namespace detail {

void CoefficientImpl::eval_all(double t, double* out) const {
  for (std::size_t i = 0; i < n1; ++i) out[i] = eval(i, t);
}

double CoefficientImpl::deriv(std::size_t i, double t) const {
  const std::size_t m = part->arc_of(t);
  const double a = part->date(m), b = part->date(m + 1);
  const double h = 1e-5 * (b - a);
  if (t - h < a) return (-3.0 * eval(i, t) + 4.0 * eval(i, t + h) - eval(i, t + 2 * h)) / (2 * h);
  if (t + h > b) return (3.0 * eval(i, t) - 4.0 * eval(i, t - h) + eval(i, t - 2 * h)) / (2 * h);
  return (eval(i, t + h) - eval(i, t - h)) / (2 * h);
}

}  // namespace detail

namespace {

using detail::CoefficientImpl;

struct PiecewiseLinear : CoefficientImpl {
  double eval(std::size_t i, double t) const override {
    const auto& T = part->dates();
    const std::size_t n = part->n();
    if (i == 0) return (t <= T[1]) ? (T[1] - t) / (T[1] - T[0]) : 0.0;
    if (t <= T[i] && t >= T[i - 1]) return (t - T[i - 1]) / (T[i] - T[i - 1]);
    if (i < n && t > T[i] && t <= T[i + 1]) return (T[i + 1] - t) / (T[i + 1] - T[i]);
    return 0.0;
  }
  double deriv(std::size_t i, double t) const override {
    const auto& T = part->dates();
    const std::size_t m = part->arc_of(t);
    const double L = T[m + 1] - T[m];
    if (i == m) return -1.0 / L;
    if (i == m + 1) return 1.0 / L;
    return 0.0;
  }
};

struct Lagrange : CoefficientImpl {
  double eval(std::size_t i, double t) const override {
    const auto& T = part->dates();
    double v = 1.0;
    for (std::size_t k = 0; k < T.size(); ++k)
      if (k != i) v *= (T[k] - t) / (T[k] - T[i]);
    return v;
  }
};

struct Damped : CoefficientImpl {
  std::shared_ptr<const CoefficientImpl> base;
  double eval(std::size_t i, double t) const override { return damping_map(base->eval(i, t)); }
};

struct Elliptic : CoefficientImpl {
  static double arc(double t, double centre, double width) {
    const double u = (t - centre) / width;
    return std::sqrt(std::max(0.0, 1.0 - u * u));
  }
  double eval(std::size_t i, double t) const override {
    const auto& T = part->dates();
    const std::size_t n = part->n();
    if (i == 0) return (t <= T[1]) ? arc(t, T[0], T[1] - T[0]) : 0.0;
    if (t > T[i - 1] && t <= T[i]) return arc(t, T[i], T[i] - T[i - 1]);
    if (i < n && t > T[i] && t <= T[i + 1]) return arc(t, T[i], T[i + 1] - T[i]);
    return 0.0;
  }
};

struct Standard : CoefficientImpl {
  CovarianceFactors k;
  std::vector<double> h1, h2, den;  // at dates, per arc denominators

  void init() {
    const auto& T = part->dates();
    for (double d : T) {
      h1.push_back(k.h1(d));
      h2.push_back(k.h2(d));
    }
    for (std::size_t m = 0; m + 1 < T.size(); ++m) {
      const double d = h1[m + 1] * h2[m] - h1[m] * h2[m + 1];
      const double scale = std::abs(h1[m + 1] * h2[m]) + std::abs(h1[m] * h2[m + 1]);
      if (!(std::abs(d) > 1e-14 * scale) || d == 0.0)
        throw ConfigError("standard coefficients: degenerate arc " + std::to_string(m) +
                          " (zero-variance date); use the linear-system route");
      den.push_back(d);
    }
  }
  double eval(std::size_t i, double t) const override {
    const std::size_t m = part->arc_of(t);
    const double x1 = k.h1(t), x2 = k.h2(t);
    if (i == m) return (h1[m + 1] * x2 - x1 * h2[m + 1]) / den[m];
    if (i == m + 1) return (x1 * h2[m] - h1[m] * x2) / den[m];
    return 0.0;
  }
  double deriv(std::size_t i, double t) const override {
    const std::size_t m = part->arc_of(t);
    const double d1 = k.dh1(t), d2 = k.dh2(t);
    if (i == m) return (h1[m + 1] * d2 - d1 * h2[m + 1]) / den[m];
    if (i == m + 1) return (d1 * h2[m] - h1[m] * d2) / den[m];
    return 0.0;
  }
};

struct Gram : CoefficientImpl {
  CovarianceFactors k;
  std::vector<std::size_t> active;  // non-degenerate dates
  Eigen::MatrixXd inv;
  PiecewiseLinear hat;

  void init() {
    const auto& T = part->dates();
    double vmax = 0;
    for (double d : T) vmax = std::max(vmax, std::abs(k.cov(d, d)));
    for (std::size_t i = 0; i < T.size(); ++i)
      if (k.cov(T[i], T[i]) > 1e-14 * vmax) active.push_back(i);
    if (active.empty()) throw ConfigError("Gram system: every matching date has zero variance");
    const auto na = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd G(na, na);
    for (Eigen::Index a = 0; a < na; ++a)
      for (Eigen::Index b = 0; b < na; ++b) G(a, b) = k.cov(T[active[a]], T[active[b]]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
    if (!lu.isInvertible() || lu.rcond() < 1e-14)
      throw ConfigError("Gram system singular after removing degenerate dates");
    inv = lu.inverse();
    hat.part = part;
    hat.n1 = n1;
  }
  void eval_all(double t, double* out) const override {
    const auto& T = part->dates();
    const auto na = static_cast<Eigen::Index>(active.size());
    Eigen::VectorXd kt(na);
    for (Eigen::Index a = 0; a < na; ++a) kt(a) = k.cov(t, T[active[a]]);
    Eigen::VectorXd f = inv * kt;
    for (std::size_t i = 0; i < n1; ++i) out[i] = hat.eval(i, t);
    for (Eigen::Index a = 0; a < na; ++a) out[active[a]] = f(a);
  }
  double eval(std::size_t i, double t) const override {
    std::vector<double> v(n1);
    eval_all(t, v.data());
    return v[i];
  }
  double deriv(std::size_t i, double t) const override {
    auto pos = std::find(active.begin(), active.end(), i);
    if (pos == active.end()) return hat.deriv(i, t);
    const auto& T = part->dates();
    const std::size_t m = part->arc_of(t);
    const auto na = static_cast<Eigen::Index>(active.size());
    Eigen::VectorXd dk(na);
    for (Eigen::Index a = 0; a < na; ++a) {
      const double Tj = T[active[a]];
      // t approached from inside arc m: t < T_j iff active date lies right of arc start
      const bool left = (t < Tj) || (t == Tj && active[a] > m);
      dk(a) = left ? k.dh1(t) * k.h2(Tj) : k.h1(Tj) * k.dh2(t);
    }
    return inv.row(pos - active.begin()).dot(dk);
  }
};

struct Table : CoefficientImpl {
  std::vector<std::vector<double>> v;
  double eval(std::size_t i, double t) const override {
    const std::size_t m = part->arc_of(t);
    const std::size_t s = part->steps_per_arc();
    const double a = part->date(m), b = part->date(m + 1);
    const double u = (t - a) / (b - a) * static_cast<double>(s);
    std::size_t k = std::min(static_cast<std::size_t>(std::max(0.0, std::floor(u))), s - 1);
    const double w = u - static_cast<double>(k);
    const std::size_t g = m * s + k;
    if (w == 0.0) return v[i][g];
    return (1.0 - w) * v[i][g] + w * v[i][g + 1];
  }
  double deriv(std::size_t i, double t) const override {
    const std::size_t m = part->arc_of(t);
    const std::size_t s = part->steps_per_arc();
    const double a = part->date(m), b = part->date(m + 1);
    const double h = (b - a) / static_cast<double>(s);
    const double u = (t - a) / h;
    std::size_t k = std::min(static_cast<std::size_t>(std::max(0.0, std::floor(u))), s - 1);
    const std::size_t g = m * s + k;
    return (v[i][g + 1] - v[i][g]) / h;
  }
};

template <class Impl>
std::shared_ptr<Impl> make_impl(const std::shared_ptr<const Partition>& p) {
  auto impl = std::make_shared<Impl>();
  impl->part = p.get();
  impl->n1 = p->n() + 1;
  return impl;
}

}  // namespace

CoefficientSet CoefficientSet::piecewise_linear(const Partition& p, CoefficientRole role) {
  auto sp = std::make_shared<const Partition>(p);
  return CoefficientSet(CoefficientFamily::piecewise_linear, role, sp, make_impl<PiecewiseLinear>(sp));
}

CoefficientSet CoefficientSet::lagrange(const Partition& p, CoefficientRole role) {
  auto sp = std::make_shared<const Partition>(p);
  return CoefficientSet(CoefficientFamily::lagrange, role, sp, make_impl<Lagrange>(sp));
}

CoefficientSet CoefficientSet::elliptic(const Partition& p, CoefficientRole role) {
  auto sp = std::make_shared<const Partition>(p);
  return CoefficientSet(CoefficientFamily::elliptic, role, sp, make_impl<Elliptic>(sp));
}

CoefficientSet CoefficientSet::standard(const Partition& p, const CovarianceFactors& k, CoefficientRole role) {
  auto sp = std::make_shared<const Partition>(p);
  auto impl = make_impl<Standard>(sp);
  impl->k = k;
  impl->init();
  return CoefficientSet(CoefficientFamily::standard, role, sp, impl);
}

CoefficientSet CoefficientSet::gram(const Partition& p, const CovarianceFactors& k, CoefficientRole role) {
  auto sp = std::make_shared<const Partition>(p);
  auto impl = make_impl<Gram>(sp);
  impl->k = k;
  impl->init();
  return CoefficientSet(CoefficientFamily::gram, role, sp, impl);
}

CoefficientSet CoefficientSet::explicit_table(const Partition& p, std::vector<std::vector<double>> values,
                                              CoefficientRole role) {
  if (values.size() != p.n() + 1) throw ConfigError("coefficient table needs n+1 rows");
  for (const auto& row : values) {
    if (row.size() != p.n_nodes()) throw ConfigError("coefficient table row length must equal the grid size");
    for (double x : row)
      if (!std::isfinite(x)) throw ConfigError("coefficient table contains non-finite values");
  }
  auto sp = std::make_shared<const Partition>(p);
  auto impl = make_impl<Table>(sp);
  impl->v = std::move(values);
  return CoefficientSet(CoefficientFamily::explicit_table, role, sp, impl);
}

CoefficientSet CoefficientSet::tabulate(const Partition& p, const std::function<double(std::size_t, double)>& fn,
                                        CoefficientRole role) {
  std::vector<std::vector<double>> v(p.n() + 1, std::vector<double>(p.n_nodes()));
  for (std::size_t i = 0; i <= p.n(); ++i)
    for (std::size_t k = 0; k < p.n_nodes(); ++k) v[i][k] = fn(i, p.grid()[k]);
  return explicit_table(p, std::move(v), role);
}

double CoefficientSet::operator()(std::size_t i, double t) const {
  if (i > part_->n()) throw DomainError("coefficient index out of range");
  if (!part_->contains(t)) throw DomainError("time " + std::to_string(t) + " outside [T_0, T_n]");
  return impl_->eval(i, t);
}

std::vector<double> CoefficientSet::eval_all(double t) const {
  if (!part_->contains(t)) throw DomainError("time " + std::to_string(t) + " outside [T_0, T_n]");
  std::vector<double> out(size());
  impl_->eval_all(t, out.data());
  return out;
}

double CoefficientSet::derivative(std::size_t i, double t) const {
  if (i > part_->n()) throw DomainError("coefficient index out of range");
  if (!part_->contains(t)) throw DomainError("time " + std::to_string(t) + " outside [T_0, T_n]");
  return impl_->deriv(i, t);
}

CoefficientSet CoefficientSet::with_role(CoefficientRole r) const {
  CoefficientSet c = *this;
  c.role_ = r;
  return c;
}

std::vector<std::vector<double>> CoefficientSet::table() const {
  std::vector<std::vector<double>> v(size(), std::vector<double>(part_->n_nodes()));
  std::vector<double> buf(size());
  for (std::size_t k = 0; k < part_->n_nodes(); ++k) {
    impl_->eval_all(part_->grid()[k], buf.data());
    for (std::size_t i = 0; i < size(); ++i) v[i][k] = buf[i];
  }
  return v;
}

double damping_map(double x) {
  const double a = std::abs(x);
  if (a == 0.0) return 0.0;
  return std::copysign(std::pow(a, 2.0 * (1.0 - a)), x);
}

CoefficientSet damp_lagrange(const CoefficientSet& set) {
  if (set.family() != CoefficientFamily::lagrange)
    throw ConfigError(std::string("damping applies to lagrange coefficients, got ") + family_name(set.family()));
  auto impl = make_impl<Damped>(set.part_);
  impl->base = set.impl_;
  return CoefficientSet(CoefficientFamily::lagrange_damped, set.role_, set.part_, impl);
}

double eval_coefficient(const CoefficientSet& set, std::size_t i, double t) { return set(i, t); }

CoefficientReport validate_coefficient_set(const CoefficientSet& set, double tol, double continuity_c) {
  CoefficientReport r;
  r.tol = tol;
  r.continuity_bound = continuity_c;
  const Partition& p = set.partition();
  const auto& T = p.dates();
  for (std::size_t j = 0; j < T.size(); ++j) {
    auto v = set.eval_all(T[j]);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i == j)
        r.max_diag_error = std::max(r.max_diag_error, std::abs(v[i] - 1.0));
      else
        r.max_offdiag = std::max(r.max_offdiag, std::abs(v[i]));
    }
  }
  const auto tab = set.table();
  const auto& g = p.grid();
  for (std::size_t k = 0; k + 1 < g.size(); ++k) {
    const std::size_t m = p.arc_of_node(k);
    const double L = T[m + 1] - T[m];
    const double scale = std::sqrt((g[k + 1] - g[k]) / L);
    for (std::size_t i = 0; i < tab.size(); ++i) {
      const double jump = std::abs(tab[i][k + 1] - tab[i][k]);
      r.max_jump = std::max(r.max_jump, jump);
      r.continuity_modulus = std::max(r.continuity_modulus, jump / scale);
    }
  }
  r.pass = r.max_diag_error <= tol && r.max_offdiag <= tol && r.continuity_modulus <= continuity_c &&
           std::isfinite(r.max_jump);
  return r;
}

}  // namespace arcade
