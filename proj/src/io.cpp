#include "arcade/io.hpp"

#include <cmath>
#include <fstream>

#include "arcade/catalog.hpp"
#include "arcade/errors.hpp"

namespace arcade::io {

namespace {

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <class T>
T get(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key);
}

template <class T>
T as(const json& j, const char* what) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

std::string preset_name(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  return get<std::string>(j, "preset");
}

ChainStep step_from_json(const json& s) {
  ChainStep st;
  if (s.contains("gamma")) {
    st.kind = ChainStep::Kind::matrix;
    st.from = get<std::vector<double>>(s, "from");
    st.to = get<std::vector<double>>(s, "to");
    st.gamma = get<std::vector<std::vector<double>>>(s, "gamma");
  } else if (s.contains("slope")) {
    st.kind = ChainStep::Kind::affine_mixture;
    st.slope = get<std::vector<double>>(s, "slope");
    st.shift = get<std::vector<double>>(s, "shift");
    st.prob = get<std::vector<double>>(s, "prob");
  } else {
    st.kind = ChainStep::Kind::gaussian;
    st.c0 = get_or<double>(s, "c0", 0.0);
    st.c1 = get_or<double>(s, "c1", 1.0);
    st.v = get<double>(s, "v");
  }
  return st;
}

std::vector<DiscreteMarginal> marginals_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("'marginals' must be an array");
  std::vector<DiscreteMarginal> out;
  for (const auto& m : j) out.push_back(marginal_from_json(m));
  return out;
}

}  // namespace

GaussMarkovDriver driver_from_json(const json& j) {
  const std::string name = preset_name(j);
  if (name == "brownian") return GaussMarkovDriver::brownian();
  if (name == "scaled_bm") return GaussMarkovDriver::scaled_bm();
  if (name == "ou")
    return GaussMarkovDriver::ou(get<double>(j, "theta"), get<double>(j, "sigma"), get_or<double>(j, "mu", 0.0),
                                 get_or<double>(j, "d0", 0.0), get_or<double>(j, "t0", 0.0));
  throw ConfigError("unknown driver preset '" + name + "'");
}

Partition partition_from_json(const json& j) {
  const auto steps = get<std::size_t>(j, "steps_per_arc");
  if (j.contains("dates")) return Partition(get<std::vector<double>>(j, "dates"), steps);
  return Partition::equispaced(get<double>(j, "t0"), get<double>(j, "t1"), get<std::size_t>(j, "arcs"), steps);
}

CoefficientSet coefficients_from_json(const json& j, const Partition& p, const GaussMarkovDriver& d,
                                      CoefficientRole role) {
  if (j.is_object() && j.contains("table"))
    return CoefficientSet::explicit_table(p, get<std::vector<std::vector<double>>>(j, "table"), role);
  const std::string name = j.is_string() ? j.get<std::string>() : get<std::string>(j, "family");
  if (name == "nonstarcade") return nonstarcade_coefficients(p).with_role(role);
  if (name == "exf_signal") return exf_signal_coefficients(p).with_role(role);
  if (name == "violating_signal") return violating_signal_coefficients(p).with_role(role);
  switch (family_from_name(name)) {
    case CoefficientFamily::piecewise_linear: return CoefficientSet::piecewise_linear(p, role);
    case CoefficientFamily::lagrange: return CoefficientSet::lagrange(p, role);
    case CoefficientFamily::lagrange_damped: return damp_lagrange(CoefficientSet::lagrange(p, role));
    case CoefficientFamily::elliptic: return CoefficientSet::elliptic(p, role);
    case CoefficientFamily::standard: return standard_coefficients(d, p).with_role(role);
    case CoefficientFamily::gram: return CoefficientSet::gram(p, d.factors(), role);
    case CoefficientFamily::explicit_table: break;
  }
  throw ConfigError("coefficient family 'explicit_table' needs a 'table' field");
}

DiscreteMarginal marginal_from_json(const json& j) {
  if (j.is_array()) {
    std::vector<double> v, w;
    for (const auto& a : j) {
      if (!a.is_array() || a.size() != 2) throw ConfigError("marginal atoms must be [value, weight] pairs");
      v.push_back(as<double>(a[0], "atom value"));
      w.push_back(as<double>(a[1], "atom weight"));
    }
    return DiscreteMarginal::from_unsorted(std::move(v), std::move(w));
  }
  const auto m = get<std::size_t>(j, "atoms");
  if (j.contains("uniform")) {
    const auto ab = get<std::vector<double>>(j, "uniform");
    if (ab.size() != 2) throw ConfigError("'uniform' needs [a, b]");
    return DiscreteMarginal::uniform(ab[0], ab[1], m);
  }
  if (j.contains("normal")) {
    const auto mv = get<std::vector<double>>(j, "normal");
    if (mv.size() != 2) throw ConfigError("'normal' needs [mean, variance]");
    return DiscreteMarginal::normal(mv[0], mv[1], m);
  }
  throw ConfigError("marginal must be an atom list, 'uniform' or 'normal'");
}

CouplingKernel coupling_from_json(const json& j, std::size_t n_arcs) {
  CouplingKernel k = [&]() -> CouplingKernel {
    if (j.is_string() || (j.is_object() && j.contains("preset"))) return builtin_kernel(preset_name(j));
    if (j.is_object() && j.contains("atoms_mu"))
      return CouplingKernel::discrete_kernel(marginal_from_json(field(j, "atoms_mu")),
                                             get<std::vector<double>>(j, "values_nu"),
                                             get<std::vector<std::vector<double>>>(j, "gamma"));
    const std::string kind = get<std::string>(j, "kind");
    if (kind == "brownian") return CouplingKernel::brownian(get_or<double>(j, "sigma2", 1.0), get_or<double>(j, "T", 1.0));
    if (kind == "gaussian")
      return CouplingKernel::gaussian(get<std::vector<double>>(j, "mean"), get<std::vector<std::vector<double>>>(j, "cov"));
    if (kind == "product") return CouplingKernel::product(marginals_from_json(field(j, "marginals")));
    if (kind == "comonotone") return CouplingKernel::comonotone(marginals_from_json(field(j, "marginals")));
    if (kind == "antithetic") return CouplingKernel::antithetic(marginal_from_json(field(j, "initial")), n_arcs);
    if (kind == "constant") return CouplingKernel::constant(get<double>(j, "value"), n_arcs);
    if (kind == "chain") {
      const DiscreteMarginal mu0 = marginal_from_json(field(j, "initial"));
      std::vector<ChainStep> steps;
      for (const auto& s : field(j, "steps")) steps.push_back(step_from_json(s));
      return CouplingKernel::discrete_chain(mu0, std::move(steps));
    }
    throw ConfigError("unknown coupling kind '" + kind + "'");
  }();
  if (k.n() != n_arcs)
    throw ConfigError("coupling '" + k.name() + "' has " + std::to_string(k.n() + 1) + " targets, partition needs " +
                      std::to_string(n_arcs + 1));
  return k;
}

ArcadeConfig arcade_from_json(const json& j) {
  const GaussMarkovDriver d = driver_from_json(j.contains("driver") ? field(j, "driver") : json("brownian"));
  const Partition p = partition_from_json(field(j, "partition"));
  return ArcadeConfig(d, coefficients_from_json(j.contains("coefficients") ? field(j, "coefficients") : json("standard"),
                                                p, d, CoefficientRole::noise_f));
}

RapConfig rap_from_json(const json& j) {
  if (j.contains("preset")) {
    const auto name = get<std::string>(j, "preset");
    if (name != "exf") throw ConfigError("unknown RAP preset '" + name + "'");
    return exf_rap(partition_from_json(field(j, "partition")));
  }
  if (!j.contains("partition")) throw ConfigError("missing field 'partition'");
  if (!j.contains("coupling")) throw ConfigError("missing field 'coupling'");
  const GaussMarkovDriver d = driver_from_json(j.contains("driver") ? field(j, "driver") : json("brownian"));
  const Partition p = partition_from_json(field(j, "partition"));
  CouplingKernel k = coupling_from_json(field(j, "coupling"), p.n());
  const bool standard = get_or<bool>(j, "standard", !j.contains("coefficients") && !j.contains("signal"));
  if (standard && !j.contains("coefficients") && !j.contains("signal")) return RapConfig::standard(d, p, std::move(k));
  const json fj = j.contains("coefficients") ? field(j, "coefficients") : json("standard");
  CoefficientSet f = coefficients_from_json(fj, p, d, CoefficientRole::noise_f);
  CoefficientSet g = coefficients_from_json(j.contains("signal") ? field(j, "signal") : fj, p, d, CoefficientRole::signal_g);
  return RapConfig(ArcadeConfig(d, std::move(f)), std::move(g), std::move(k), standard);
}

IbmotProblem ibmot_problem_from_json(const json& j) {
  if (!j.contains("mu") || !j.contains("nu")) throw ConfigError("IB-MOT problem needs 'mu' and 'nu'");
  IbmotProblem p(marginal_from_json(field(j, "mu")), marginal_from_json(field(j, "nu")), get_or<double>(j, "T", 1.0));
  if (j.contains("options")) p.steps = get_or<std::size_t>(field(j, "options"), "steps", p.steps);
  if (p.steps == 0) throw ConfigError("'steps' must be positive");
  return p;
}

IbmotOptions ibmot_options_from_json(const json& j) {
  IbmotOptions o;
  if (!j.contains("options")) return o;
  const json& oj = field(j, "options");
  o.gap = get_or<double>(oj, "gap", o.gap);
  o.max_iter = get_or<std::size_t>(oj, "max_iter", o.max_iter);
  o.start_seed = get_or<std::uint64_t>(oj, "start_seed", o.start_seed);
  const auto method = get_or<std::string>(oj, "method", "barrier");
  if (method == "barrier") o.method = IbmotMethod::barrier;
  else if (method == "frank_wolfe") o.method = IbmotMethod::frank_wolfe;
  else throw ConfigError("unknown IB-MOT method '" + method + "'");
  if (oj.contains("start_costs")) o.start_costs = get<Matrix>(oj, "start_costs");
  if (!(o.gap > 0)) throw ConfigError("'gap' must be positive");
  return o;
}

FilterMode filter_mode_from_json(const json& j) {
  const auto m = get_or<std::string>(j, "mode", "automatic");
  if (m == "automatic") return FilterMode::automatic;
  if (m == "reduced") return FilterMode::reduced;
  if (m == "full") return FilterMode::full;
  throw ConfigError("unknown filter mode '" + m + "'");
}

std::uint64_t seed_from_json(const json& j) {
  if (!j.is_object() || !j.contains("seed")) throw ConfigError("config must set 'seed'");
  const json& s = field(j, "seed");
  if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) throw ConfigError("'seed' must be a non-negative integer");
  return s.get<std::uint64_t>();
}

json to_json(const CoefficientReport& r) {
  return {{"pass", r.pass},
          {"tol", r.tol},
          {"max_diag_error", r.max_diag_error},
          {"max_offdiag", r.max_offdiag},
          {"max_jump", r.max_jump},
          {"continuity_modulus", r.continuity_modulus},
          {"continuity_bound", r.continuity_bound}};
}

json to_json(const FactorizationReport& r) {
  json out = {{"pass", r.pass}, {"max_residual", r.max_residual}, {"cross_arc_max", r.cross_arc_max}, {"tol", r.tol}};
  json a1 = json::array(), a2 = json::array();
  if (r.factorization) {
    for (const auto& v : r.factorization->A1) a1.push_back(v);
    for (const auto& v : r.factorization->A2) a2.push_back(v);
    out["per_arc"] = r.factorization->per_arc;
    out["monotone_ratio"] = r.factorization->monotone_ratio;
  }
  out["A1"] = a1;
  out["A2"] = a2;
  return out;
}

json to_json(const NearlyMarkovReport& r) {
  json c1 = to_json(r.cond1);
  c1.erase("A1");
  c1.erase("A2");
  return {{"pass", r.pass},
          {"tol", r.tol},
          {"condition1", c1},
          {"subcond1", {{"pass", r.subcond1}, {"max_residual", r.subcond1_residual}}},
          {"subcond2", {{"pass", r.subcond2}, {"max_residual", r.subcond2_residual}}}};
}

json to_json(const ConvexOrderReport& r) {
  return {{"ok", r.ok},           {"mean_mu", r.mean_mu}, {"mean_nu", r.mean_nu},     {"strike", r.strike},
          {"call_mu", r.call_mu}, {"call_nu", r.call_nu}, {"violation", r.violation}, {"witness", r.witness()}};
}

json to_json(const IsometryReport& r) {
  return {{"lhs", r.lhs}, {"lhs_se", r.lhs_se}, {"rhs", r.rhs}, {"rhs_se", r.rhs_se}, {"diff_se", r.diff_se},
          {"z", r.z},     {"pass", std::abs(r.z) <= 3.0}};
}

json to_json(const IbmotSolution& s) {
  return {{"kernel", s.kernel},
          {"objective_quantile", s.objective_quantile},
          {"objective_KI", s.objective_KI},
          {"duality_gap", s.duality_gap},
          {"iterations", s.iterations},
          {"converged", s.converged}};
}

json to_json(const McObjective& m) {
  return {{"integral", m.integral}, {"integral_se", m.integral_se}, {"terminal", m.terminal},
          {"terminal_se", m.terminal_se}, {"diff_se", m.diff_se}, {"paths", m.n_paths},
          {"agree", std::abs(m.integral - m.terminal) <= 3.0 * m.diff_se}};
}

json error_json(const Error& e) {
  return {{"error", {{"kind", e.kind_name()}, {"message", e.what()}, {"exit_code", e.exit_code()}}}};
}

std::uint64_t config_hash(const json& j) { return stream_tag(j.dump()); }

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace arcade::io
