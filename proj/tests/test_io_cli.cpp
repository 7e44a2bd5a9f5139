#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "arcade/io.hpp"
#include "doctest.h"

using namespace arcade;
using io::json;
namespace fs = std::filesystem;

namespace {

const fs::path work = fs::path(ARCADE_TEST_WORKDIR) / "cli_work";

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(ARCADE_CLI) + " " + args + " > " + (work / "stdout.txt").string() + " 2> " +
                          (work / "stderr.txt").string();
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string config(const std::string& name) { return (fs::path(ARCADE_CONFIG_DIR) / name).string(); }

fs::path write_config(const std::string& name, const json& j) {
  const fs::path p = work / name;
  std::ofstream(p) << j.dump();
  return p;
}

struct Workdir {
  Workdir() { fs::create_directories(work); }
};

}  // namespace

TEST_CASE("simulate is reproducible and honours --seed") {
  Workdir w;
  const auto a = work / "a", b = work / "b", c = work / "c";
  REQUIRE(run("--config " + config("binary_rap.json") + " --out " + a.string() + " --paths 20 --quiet simulate rap") == 0);
  REQUIRE(run("--config " + config("binary_rap.json") + " --out " + b.string() + " --paths 20 --quiet simulate rap") == 0);
  REQUIRE(run("--config " + config("binary_rap.json") + " --out " + c.string() +
              " --paths 20 --seed 99 --quiet simulate rap") == 0);
  CHECK(slurp(a / "paths.csv") == slurp(b / "paths.csv"));
  CHECK(slurp(a / "targets.csv") == slurp(b / "targets.csv"));
  CHECK(slurp(a / "paths.csv") != slurp(c / "paths.csv"));
  CHECK(slurp(a / "paths.csv").rfind("t,path_0,", 0) == 0);
  const json s = io::read_json_file((c / "summary.json").string());
  CHECK(s["seed"] == 99);
  CHECK(s["paths"] == 20);
}

TEST_CASE("driver simulation reports moments") {
  Workdir w;
  const auto out = work / "ou";
  REQUIRE(run("--config " + config("ou_driver.json") + " --out " + out.string() + " --paths 2000 simulate driver") == 0);
  const json s = io::read_json_file((out / "summary.json").string());
  CHECK(s["moments"]["pass"] == true);
  CHECK(json::parse(slurp(work / "stdout.txt")) == s);
}

TEST_CASE("fam and ibmot subcommands") {
  Workdir w;
  const auto f = work / "fam";
  REQUIRE(run("--config " + config("tanh_fam.json") + " --out " + f.string() + " --paths 200 --quiet fam") == 0);
  CHECK(fs::exists(f / "diagnostics.json"));
  CHECK(slurp(f / "fam_path_0.csv").rfind("t,I,M,W,vol", 0) == 0);

  const auto o = work / "oracle";
  REQUIRE(run("--config " + config("oracle_2x3_ibmot.json") + " --out " + o.string() + " --quiet ibmot") == 0);
  const json s = io::read_json_file((o / "solution.json").string());
  CHECK(s["oracle"]["pass"] == true);
  CHECK(s["converged"] == true);
  CHECK(s["polytope_violation"].get<double>() <= 1e-9);
}

TEST_CASE("exit codes") {
  Workdir w;
  CHECK(run("--config " + config("nonconvex_ibmot.json") + " --out " + (work / "nc").string() + " ibmot") == 3);
  const json err = json::parse(slurp(work / "stderr.txt"));
  CHECK(err["error"]["kind"] == "infeasible");
  CHECK(err["error"]["exit_code"] == 3);

  json noseed = io::read_json_file(config("binary_rap.json"));
  noseed.erase("seed");
  CHECK(run("--config " + write_config("noseed.json", noseed).string() + " --out " + (work / "ns").string() +
            " simulate rap") == 2);
  CHECK(json::parse(slurp(work / "stderr.txt"))["error"]["kind"] == "config");
  CHECK(run("--config " + (work / "missing.json").string() + " simulate rap") == 2);
  std::ofstream(work / "broken.json") << "{\"seed\": ";
  CHECK(run("--config " + (work / "broken.json").string() + " simulate rap") == 2);
  CHECK(run("--config " + config("binary_rap.json") + " simulate sideways") == 2);
  CHECK(run("simulate rap") == 2);

  CHECK(run("--config " + config("check_violating.json") + " --out " + (work / "chk").string() + " --quiet check") == 0);
  const json chk = io::read_json_file((work / "chk" / "check.json").string());
  CHECK(chk["nearly_markov"]["pass"] == false);
}

TEST_CASE("json parsers") {
  CHECK(io::driver_from_json("brownian").label() == GaussMarkovDriver::brownian().label());
  CHECK_THROWS_AS(io::driver_from_json("levy"), ConfigError);
  CHECK_THROWS_AS(io::driver_from_json(json{{"preset", "ou"}, {"theta", 1.0}}), ConfigError);

  const auto p = io::partition_from_json(json{{"t0", 0.0}, {"t1", 2.0}, {"arcs", 2}, {"steps_per_arc", 5}});
  CHECK(p.n() == 2);
  CHECK(p.n_nodes() == 11);
  CHECK_THROWS_AS(io::partition_from_json(json{{"dates", {0.0, 1.0}}}), ConfigError);

  const auto m = io::marginal_from_json(json::parse("[[1, 0.5], [-1, 0.5]]"));
  CHECK(m.values() == std::vector<double>{-1, 1});
  CHECK(io::marginal_from_json(json{{"uniform", {-1, 1}}, {"atoms", 4}}).size() == 4);
  CHECK_THROWS_AS(io::marginal_from_json(json{{"normal", {0.0}}, {"atoms", 3}}), ConfigError);
  CHECK_THROWS_AS(io::marginal_from_json(json::parse("[[1, 0.5, 2]]")), ConfigError);

  CHECK(io::coupling_from_json("binary_pm1", 1).is_martingale());
  CHECK_THROWS_AS(io::coupling_from_json("binary_pm1", 2), ConfigError);
  CHECK_THROWS_AS(io::coupling_from_json(json{{"kind", "teleport"}}, 1), ConfigError);
  CHECK(io::coupling_from_json(json{{"kind", "constant"}, {"value", 0.5}}, 3).n() == 3);

  CHECK(io::seed_from_json(json{{"seed", 4}}) == 4);
  CHECK(io::seed_from_json(json::parse("{\"seed\": 18446744073709551615}")) == 18446744073709551615ull);
  CHECK_THROWS_AS(io::seed_from_json(json::object()), ConfigError);
  CHECK_THROWS_AS(io::seed_from_json(json{{"seed", -4}}), ConfigError);
  CHECK_THROWS_AS(io::seed_from_json(json{{"seed", "4"}}), ConfigError);

  const auto o = io::ibmot_options_from_json(json{{"options", {{"method", "frank_wolfe"}, {"gap", 1e-6}}}});
  CHECK(o.method == IbmotMethod::frank_wolfe);
  CHECK(o.gap == 1e-6);
  CHECK_THROWS_AS(io::ibmot_options_from_json(json{{"options", {{"method", "simplex"}}}}), ConfigError);
  CHECK_THROWS_AS(io::ibmot_options_from_json(json{{"options", {{"gap", 0.0}}}}), ConfigError);
  CHECK(io::filter_mode_from_json(json{{"mode", "full"}}) == FilterMode::full);
  CHECK_THROWS_AS(io::filter_mode_from_json(json{{"mode", "partial"}}), ConfigError);

  CHECK(io::config_hash(json{{"a", 1}, {"b", 2}}) == io::config_hash(json::parse("{\"b\": 2, \"a\": 1}")));
  CHECK(io::config_hash(json{{"a", 1}}) != io::config_hash(json{{"a", 2}}));
}

TEST_CASE("error json") {
  const json e = io::error_json(NumericError("singular system"));
  CHECK(e["error"]["kind"] == "numeric");
  CHECK(e["error"]["exit_code"] == 4);
  CHECK(e["error"]["message"] == "singular system");
  CHECK(io::error_json(DomainError("t out of range"))["error"]["exit_code"] == 2);
  CHECK(io::error_json(InfeasibleError("x"))["error"]["exit_code"] == 3);
}
