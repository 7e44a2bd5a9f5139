#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "arcade/errors.hpp"
#include "arcade/fam.hpp"
#include "arcade/ibmot.hpp"
#include "arcade/io.hpp"

using namespace arcade;
using io::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<std::size_t> paths;
  bool quiet = false;
};

struct Context {
  json cfg;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  bool quiet = false;
};

Context load(const Globals& g, bool needs_seed) {
  Context c;
  c.cfg = io::read_json_file(g.config);
  if (!c.cfg.is_object()) throw ConfigError("config root must be an object");
  if (g.seed) c.cfg["seed"] = *g.seed;
  if (g.paths) c.cfg["paths"] = *g.paths;
  if (needs_seed) c.seed = io::seed_from_json(c.cfg);
  c.out = g.out;
  c.quiet = g.quiet;
  return c;
}

std::size_t path_count(const json& cfg, std::size_t fallback) {
  std::size_t n = fallback;
  if (cfg.contains("paths")) {
    if (!cfg["paths"].is_number_unsigned()) throw ConfigError("'paths' must be a positive integer");
    n = cfg["paths"].get<std::size_t>();
  }
  if (n == 0) throw ConfigError("'paths' must be positive");
  return n;
}

void prepare_out(const Context& c) {
  std::error_code ec;
  std::filesystem::create_directories(c.out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + c.out.string() + "': " + ec.message());
}

void write_text(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  body(os);
}

std::string hex(std::uint64_t x) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

void finish(const Context& c, const std::string& name, const json& summary) {
  io::write_json_file((c.out / name).string(), summary);
  if (!c.quiet) std::cout << summary.dump(2) << '\n';
}

// interior grid nodes that are not dates, up to `count`
std::vector<std::size_t> probe_nodes(const Partition& p, std::size_t count) {
  std::vector<std::size_t> out;
  const std::size_t N = p.n_nodes();
  for (std::size_t k = 1; k <= count; ++k) {
    std::size_t node = k * (N - 1) / (count + 1);
    if (p.date_index(p.grid()[node]) >= 0) ++node;
    if (node + 1 < N && (out.empty() || out.back() != node)) out.push_back(node);
  }
  return out;
}

struct Moments {
  double mean = 0, mean_se = 0, var = 0, var_se = 0;
};

Moments column_moments(const RowMatrix& v, Eigen::Index col) {
  const auto x = v.col(col);
  const double n = static_cast<double>(x.size());
  Moments m;
  m.mean = x.mean();
  const Eigen::ArrayXd d = x.array() - m.mean;
  m.var = (d * d).sum() / (n - 1);
  m.mean_se = std::sqrt(m.var / n);
  const double m4 = (d * d * d * d).sum() / n;
  m.var_se = std::sqrt(std::max(m4 - m.var * m.var, 0.0) / n);
  return m;
}

json moment_check(const RowMatrix& v, const Partition& p, const std::function<std::pair<double, double>(double)>& exact) {
  json probes = json::array();
  bool pass = true;
  for (std::size_t k : probe_nodes(p, 5)) {
    const auto m = column_moments(v, static_cast<Eigen::Index>(k));
    const auto [mu, var] = exact(p.grid()[k]);
    const double zm = m.mean_se > 0 ? (m.mean - mu) / m.mean_se : 0.0;
    const double zv = m.var_se > 0 ? (m.var - var) / m.var_se : 0.0;
    pass = pass && std::abs(zm) <= 3 && std::abs(zv) <= 3;
    probes.push_back({{"t", p.grid()[k]}, {"mean", m.mean}, {"mean_exact", mu}, {"mean_z", zm},
                      {"var", m.var},      {"var_exact", var}, {"var_z", zv}});
  }
  return {{"pass", pass}, {"probes", probes}};
}

void write_targets(const std::filesystem::path& path, const RowMatrix& X) {
  write_text(path, [&](std::ostream& os) {
    for (Eigen::Index i = 0; i < X.cols(); ++i) os << (i ? "," : "") << "X_" << i;
    os << '\n';
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      for (Eigen::Index i = 0; i < X.cols(); ++i) os << (i ? "," : "") << format_double(X(r, i));
      os << '\n';
    }
  });
}

int cmd_simulate(const Globals& g, const std::string& kind) {
  Context c = load(g, true);
  const std::size_t n = path_count(c.cfg, 10);
  json summary = {{"command", "simulate"}, {"kind", kind}, {"seed", c.seed}, {"paths", n}};
  summary["config_hash"] = hex(io::config_hash(c.cfg));

  if (kind == "driver" || kind == "ap") {
    const ArcadeConfig acfg = io::arcade_from_json(c.cfg);
    const Partition& p = acfg.partition();
    acfg.driver().validate_on(p);
    summary["coefficients"] = io::to_json(validate_coefficient_set(acfg.coeffs(), 1e-9));
    prepare_out(c);
    PathBundle d = simulate_driver(acfg.driver(), p, n, c.seed);
    d.meta["config_hash"] = summary["config_hash"];
    if (kind == "driver") {
      summary["driver"] = acfg.driver().label();
      if (n >= 100)
        summary["moments"] = moment_check(d.values, p, [&](double t) {
          return std::pair{acfg.driver().mean(t), acfg.driver().variance(t)};
        });
      write_text(c.out / "paths.csv", [&](std::ostream& os) { d.write_csv(os); });
    } else {
      const PathBundle a = build_ap_paths(acfg, d);
      double pin = 0;
      for (std::size_t i = 0; i <= p.n(); ++i)
        pin = std::max(pin, a.values.col(static_cast<Eigen::Index>(p.node_of_date(i))).cwiseAbs().maxCoeff());
      summary["max_pinning_residual"] = pin;
      summary["pinning_pass"] = pin <= 1e-12;
      if (n >= 100)
        summary["moments"] = moment_check(a.values, p, [&](double t) {
          const auto m = ap_moments(acfg, t, t);
          return std::pair{m.mean_t, m.cov};
        });
      summary["markov"] = io::to_json(markov_factorization_check(acfg));
      summary["markov"].erase("A1");
      summary["markov"].erase("A2");
      write_text(c.out / "paths.csv", [&](std::ostream& os) { a.write_csv(os); });
    }
  } else if (kind == "rap") {
    const RapConfig rcfg = io::rap_from_json(c.cfg);
    const Partition& p = rcfg.partition();
    rcfg.driver().validate_on(p);
    summary["nearly_markov"] = io::to_json(nearly_markov_check(rcfg));
    summary["martingale_coupling"] = rcfg.coupling().is_martingale();
    prepare_out(c);
    RapPaths r = build_rap_paths(rcfg, n, c.seed);
    r.I.meta["config_hash"] = summary["config_hash"];
    double pin = 0;
    for (std::size_t i = 0; i <= p.n(); ++i)
      pin = std::max(pin, (r.I.values.col(static_cast<Eigen::Index>(p.node_of_date(i))) -
                           r.X.col(static_cast<Eigen::Index>(i)))
                              .cwiseAbs()
                              .maxCoeff());
    summary["max_pinning_residual"] = pin;
    summary["pinning_pass"] = pin <= 1e-12;
    write_text(c.out / "paths.csv", [&](std::ostream& os) { r.I.write_csv(os); });
    write_targets(c.out / "targets.csv", r.X);
  } else {
    throw ConfigError("simulate kind must be ap, rap or driver");
  }
  finish(c, "summary.json", summary);
  return 0;
}

int cmd_fam(const Globals& g) {
  Context c = load(g, true);
  const std::size_t n = path_count(c.cfg, 1000);
  const RapConfig cfg = io::rap_from_json(c.cfg);
  const FilterMode mode = io::filter_mode_from_json(c.cfg);
  const std::size_t n_trace = c.cfg.value("trace_paths", std::size_t{5});
  const bool want_isometry = c.cfg.value("isometry", true);
  const Partition& p = cfg.partition();
  cfg.driver().validate_on(p);
  const auto nm = nearly_markov_check(cfg);
  if (!nm.pass) throw ConfigError("fam needs a nearly-Markov configuration");
  prepare_out(c);

  const auto& grid = p.grid();
  const std::size_t N = grid.size();
  const double T0 = p.t0(), Tn = p.tn();
  const bool tanh_case = cfg.coupling().name() == "binary_pm1" && p.n() == 1 && cfg.standard_flag() &&
                         cfg.driver().label() == "brownian";
  const bool brownian_case = cfg.coupling().kind() == CouplingKind::brownian && cfg.standard_flag() &&
                             cfg.driver().label() == "brownian";

  std::vector<double> sd(N, 0.0), sd2(N, 0.0);
  std::vector<double> qv;
  double tanh_dev = 0, mi_dev = 0;
  const FamRunInfo info = fam_for_each(cfg, n, c.seed, [&](std::size_t, const FamPathView& v) {
    for (std::size_t k = 0; k < N; ++k) {
      const double d = v.M[k] - v.X[0];
      sd[k] += d;
      sd2[k] += d * d;
    }
    for (std::size_t k = 1; k + 1 < N; ++k) {
      if (tanh_case) {
        const double ref = v.X[0] + std::tanh((v.I[k] - v.X[0]) / (p.date(1) - grid[k]));
        tanh_dev = std::max(tanh_dev, std::abs(v.M[k] - ref));
      }
      if (brownian_case) mi_dev = std::max(mi_dev, std::abs(v.M[k] - v.I[k]));
    }
    if (v.W) {
      double s = 0;
      for (std::size_t k = 0; k + 1 < N; ++k) s += (v.W[k + 1] - v.W[k]) * (v.W[k + 1] - v.W[k]);
      qv.push_back(s);
    }
  }, mode);

  json diag = {{"command", "fam"}, {"seed", c.seed}, {"paths", n}, {"config_hash", hex(io::config_hash(c.cfg))}};
  diag["reduced"] = info.reduced;
  diag["innovations"] = info.innovations;
  diag["fallbacks"] = info.fallbacks;
  {
    double zmax = 0;
    const double nn = static_cast<double>(n);
    for (std::size_t k = 0; k < N && n > 1; ++k) {
      const double m = sd[k] / nn;
      const double var = std::max(sd2[k] / nn - m * m, 0.0);
      if (var <= 0) continue;
      zmax = std::max(zmax, std::abs(m) / std::sqrt(var / (nn - 1)));
    }
    diag["martingale_mean"] = {{"max_z", zmax}, {"pass", zmax <= 3.0}};
  }
  if (tanh_case) diag["closed_form"] = {{"max_deviation", tanh_dev}, {"pass", tanh_dev <= 1e-10}};
  if (brownian_case) diag["m_equals_i"] = {{"max_deviation", mi_dev}, {"pass", mi_dev <= 1e-8}};
  if (!qv.empty()) {
    std::nth_element(qv.begin(), qv.begin() + static_cast<long>(qv.size() / 2), qv.end());
    const double med = qv[qv.size() / 2];
    const double rel = med / (Tn - T0) - 1.0;
    diag["quadratic_variation"] = {{"median", med}, {"relative_error", rel}, {"pass", std::abs(rel) <= 0.02}};
  }
  if (want_isometry && info.innovations && p.n() == 1 && n > 1)
    diag["isometry"] = io::to_json(ito_isometry_check(cfg, n, c.seed));

  const FamTrace trace = fam_paths(cfg, std::min(n_trace, n), c.seed, mode);
  for (std::size_t k = 0; k < trace.n_paths(); ++k)
    write_text(c.out / ("fam_path_" + std::to_string(k) + ".csv"), [&](std::ostream& os) { trace.write_csv(os, k); });
  finish(c, "diagnostics.json", diag);
  return 0;
}

int cmd_ibmot(const Globals& g) {
  Context c = load(g, false);
  const IbmotProblem prob = io::ibmot_problem_from_json(c.cfg);
  const IbmotOptions opts = io::ibmot_options_from_json(c.cfg);
  const json oj = c.cfg.value("options", json::object());
  std::size_t mc_paths = oj.value("mc_paths", std::size_t{0});
  if (g.paths) mc_paths = *g.paths;
  const bool oracle = oj.value("oracle", false);
  if (mc_paths > 0) c.seed = io::seed_from_json(c.cfg);
  const ConvexOrderReport order = convex_order_report(prob.mu, prob.nu, 1e-9);
  if (!order.ok) throw InfeasibleError("marginals are not in convex order: " + order.witness());
  prepare_out(c);

  const IbmotSolution sol = solve_ibmot(prob, opts);
  json out = io::to_json(sol);
  out["command"] = "ibmot";
  out["correlation"] = coupling_correlation(prob, sol.kernel);
  out["polytope_violation"] = polytope_violation(prob, sol.pi);
  out["convex_order"] = io::to_json(order);
  if (oracle) {
    const SegmentSearch s = ibmot_segment_search(prob);
    out["oracle"] = {{"objective", s.objective},
                     {"dimension", s.dimension},
                     {"difference", sol.objective_quantile - s.objective},
                     {"pass", std::abs(sol.objective_quantile - s.objective) <= 1e-5}};
  }
  if (mc_paths > 0) {
    const McObjective mc = ibmot_objective_mc(prob, sol.kernel, mc_paths, c.seed);
    json m = io::to_json(mc);
    m["seed"] = c.seed;
    // quantile form is a lower bound for E[(X_1 - W)^2], so MC K_I <= quantile K_I
    const double se = std::max(mc.integral_se, mc.terminal_se);
    m["quantile_bound_pass"] = mc.terminal <= sol.objective_KI + 3.0 * se;
    out["mc"] = m;
  }
  finish(c, "solution.json", out);
  return 0;
}

int cmd_check(const Globals& g) {
  Context c = load(g, false);
  json out = {{"command", "check"}};
  bool any = false;
  if (c.cfg.contains("mu") && c.cfg.contains("nu")) {
    any = true;
    const auto mu = io::marginal_from_json(c.cfg.at("mu"));
    const auto nu = io::marginal_from_json(c.cfg.at("nu"));
    out["convex_order"] = io::to_json(convex_order_report(mu, nu, c.cfg.value("tol", 1e-9)));
  }
  if (c.cfg.contains("partition")) {
    any = true;
    const ArcadeConfig acfg = io::arcade_from_json(c.cfg);
    out["coefficients"] = io::to_json(validate_coefficient_set(acfg.coeffs(), c.cfg.value("tol", 1e-9)));
    out["markov"] = io::to_json(markov_factorization_check(acfg));
    if (c.cfg.contains("coupling") || c.cfg.contains("preset")) {
      const RapConfig rcfg = io::rap_from_json(c.cfg);
      const auto& k = rcfg.coupling();
      out["coupling"] = {{"name", k.name()},
                         {"kind", kind_name(k.kind())},
                         {"martingale_defect", k.martingale_defect()},
                         {"martingale", k.is_martingale()}};
      out["nearly_markov"] = io::to_json(nearly_markov_check(rcfg));
    }
  }
  if (!any) throw ConfigError("check needs 'partition' (coefficients, coupling) or 'mu'/'nu'");
  prepare_out(c);
  finish(c, "check.json", out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Arcade processes, filtered arcade martingales and IB-MOT"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  std::size_t paths = 0;
  app.add_option("--config", g.config, "experiment config (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "overrides the config seed");
  auto* paths_opt = app.add_option("--paths", paths, "overrides the path count");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--quiet", g.quiet, "do not echo the summary");

  std::string kind;
  auto* sim = app.add_subcommand("simulate", "simulate driver, AP or RAP paths");
  sim->add_option("kind", kind, "ap | rap | driver")->required()->check(CLI::IsMember({"ap", "rap", "driver"}));
  auto* fam = app.add_subcommand("fam", "filter RAP paths and report martingale diagnostics");
  auto* ibm = app.add_subcommand("ibmot", "solve an IB-MOT problem");
  auto* chk = app.add_subcommand("check", "validate coefficients, kernels and marginals");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed;
  if (*paths_opt) g.paths = paths;

  try {
    if (*sim) return cmd_simulate(g, kind);
    if (*fam) return cmd_fam(g);
    if (*ibm) return cmd_ibmot(g);
    if (*chk) return cmd_check(g);
  } catch (const Error& e) {
    std::cerr << io::error_json(e).dump() << '\n';
    return e.exit_code();
  } catch (const json::exception& e) {
    const ConfigError ce(std::string("malformed config: ") + e.what());
    std::cerr << io::error_json(ce).dump() << '\n';
    return ce.exit_code();
  }
  return 0;
}
