#pragma once

#include <cstdint>
#include <string>

#include "arcade/errors.hpp"
#include "arcade/fam.hpp"
#include "arcade/ibmot.hpp"
#include "json.hpp"

namespace arcade::io {

using json = nlohmann::json;

// {"preset": "brownian" | "scaled_bm" | "ou", "theta", "sigma", "mu", "d0"}; a bare string names a preset
GaussMarkovDriver driver_from_json(const json& j);

// {"dates": [...], "steps_per_arc": k} or {"t0", "t1", "arcs", "steps_per_arc"}
Partition partition_from_json(const json& j);

// family name, "nonstarcade", "exf_signal", "violating_signal", or {"table": [[...]]} on grid nodes
CoefficientSet coefficients_from_json(const json& j, const Partition& p, const GaussMarkovDriver& d,
                                      CoefficientRole role);

// [[x, w], ...], {"uniform": [a, b], "atoms": m} or {"normal": [mean, var], "atoms": m}
DiscreteMarginal marginal_from_json(const json& j);

// preset name, {"preset": name}, {"atoms_mu", "values_nu", "gamma"}, {"kind": "brownian" | "gaussian" | "product" |
// "comonotone" | "antithetic" | "constant" | "chain", ...}
CouplingKernel coupling_from_json(const json& j, std::size_t n_arcs);

// {"preset": "exf"} or driver/partition/coefficients/signal/coupling/standard
RapConfig rap_from_json(const json& j);
ArcadeConfig arcade_from_json(const json& j);

IbmotProblem ibmot_problem_from_json(const json& j);
IbmotOptions ibmot_options_from_json(const json& j);
FilterMode filter_mode_from_json(const json& j);

// required unsigned seed; throws ConfigError when absent
std::uint64_t seed_from_json(const json& j);

json to_json(const CoefficientReport& r);
json to_json(const FactorizationReport& r);
json to_json(const NearlyMarkovReport& r);
json to_json(const ConvexOrderReport& r);
json to_json(const IsometryReport& r);
json to_json(const IbmotSolution& s);
json to_json(const McObjective& m);
json error_json(const Error& e);

// FNV-1a of the canonical dump
std::uint64_t config_hash(const json& j);

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);

}  // namespace arcade::io
