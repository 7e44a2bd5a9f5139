#include "arcade/catalog.hpp"

#include <cmath>

#include "arcade/errors.hpp"

namespace arcade {

namespace {

void require_two_arcs(const Partition& p, const char* what) {
  if (p.n() != 2) throw ConfigError(std::string(what) + " needs exactly two arcs");
  if (p.steps_per_arc() % 2 != 0) throw ConfigError(std::string(what) + " needs an even number of steps per arc");
}

}  // namespace

CoefficientSet nonstarcade_coefficients(const Partition& p) {
  require_two_arcs(p, "nonstarcade table");
  const double T0 = p.date(0), T1 = p.date(1), T2 = p.date(2);
  const double mid = 0.5 * (T1 + T2);
  return CoefficientSet::tabulate(p, [=](std::size_t i, double t) -> double {
           switch (i) {
             case 0: return t <= mid ? (T1 - t) / (T1 - T0) : -(T2 - t) / (T1 - T0);
             case 1: return t <= T1 ? (t - T0) / (T1 - T0) : (T2 - t) / (T2 - T1);
             default: return t >= T1 ? (t - T1) / (T2 - T1) : 0.0;
           }
         });
}

CoefficientSet exf_signal_coefficients(const Partition& p) {
  require_two_arcs(p, "exf table");
  const double T0 = p.date(0), T1 = p.date(1), T2 = p.date(2);
  const double mid = 0.5 * (T1 + T2);
  const double c = T0 / ((T1 - T0) * (T1 - T0));
  return CoefficientSet::tabulate(p, [=](std::size_t i, double t) -> double {
        switch (i) {
          case 0: return t <= T1 ? (T1 - t) / (T1 - T0) : 0.0;
          case 1: return t <= T1 ? (t - T0) / (T1 - T0) : (T2 - t) / (T2 - T1);
          default:
            if (t <= T1) return 0.0;
            return (t - T1) / (T2 - T1) + (t <= mid ? (t - T1) : (T2 - t)) * c;
        }
      }, CoefficientRole::signal_g);
}

CoefficientSet violating_signal_coefficients(const Partition& p) {
  require_two_arcs(p, "violating signal");
  const double T0 = p.date(0), T1 = p.date(1), T2 = p.date(2);
  const double mid = 0.5 * (T0 + T1);
  return CoefficientSet::tabulate(p, [=](std::size_t i, double t) -> double {
        switch (i) {
          case 0: return t <= T1 ? (T1 - t) / (T1 - T0) : 0.0;
          case 1: return t <= T1 ? (t - T0) / (T1 - T0) : (T2 - t) / (T2 - T1);
          default:
            if (t >= T1) return (t - T1) / (T2 - T1);
            return 1.0 - std::abs(t - mid) / (mid - T0);
        }
      }, CoefficientRole::signal_g);
}

RapConfig exf_rap(const Partition& p) {
  const DiscreteMarginal pm1({-1.0, 1.0}, {0.5, 0.5});
  return RapConfig(ArcadeConfig(GaussMarkovDriver::brownian(), nonstarcade_coefficients(p)),
                   exf_signal_coefficients(p), CouplingKernel::product({pm1, pm1, pm1}));
}

}  // namespace arcade
