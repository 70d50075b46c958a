// End-to-end runs of the command-line driver: exit codes, report contents,
// strict config validation, and byte-determinism of the artifacts.

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CLI_BINARY_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

std::string bundled(const std::string& name) {
    return std::string(CLI_CONFIG_DIR) + "/" + name;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

// Scratch directory, removed on scope exit.
struct TempDir {
    fs::path path;

    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() /
               ("spherealign_cli_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    std::string sub(const std::string& name) const { return (path / name).string(); }

    std::string write(const std::string& name, const std::string& content) const {
        const fs::path p = path / name;
        std::ofstream os(p);
        os << content;
        return p.string();
    }
};

bool missing_or_empty(const fs::path& dir) {
    return !fs::exists(dir) || fs::is_empty(dir);
}

} // namespace

TEST_CASE("cli: symmetric pair resolves aligned with a passing report") {
    TempDir tmp("aligned");
    CHECK(run_cli("particles --config " + bundled("two_particle_symmetric.json") + " --out " +
                  tmp.sub("out") + " --quiet") == 0);

    const json report = load_json(tmp.path / "out" / "regime_report.json");
    CHECK(report["regime"] == "aligned");
    CHECK(report["i0"].is_null());
    CHECK(std::fabs(report["lambda"].get<double>() - 1.0) < 1e-9);
    CHECK(report["all_pass"] == true);

    const std::string traj = slurp(tmp.path / "out" / "trajectory.csv");
    CHECK(traj.rfind("t,J_1,J_2,absJ,E,v_1_1,v_1_2,v_2_1,v_2_2\n", 0) == 0);
}

TEST_CASE("cli: antipodal pair resolves one_back") {
    TempDir tmp("oneback");
    CHECK(run_cli("particles --config " + bundled("antipodal_quarter.json") + " --out " +
                  tmp.sub("out") + " --quiet") == 0);

    const json report = load_json(tmp.path / "out" / "regime_report.json");
    CHECK(report["regime"] == "one_back");
    CHECK(report["i0"] == 0);
    CHECK(std::fabs(report["lambda"].get<double>() - 0.5) < 1e-9);
    CHECK(report["all_pass"] == true);
}

TEST_CASE("cli: malformed and over-specified configs exit 2 leaving no files") {
    TempDir tmp("badcfg");
    const std::string bad = tmp.write("bad.json", "{\"system\": [");
    CHECK(run_cli("particles --config " + bad + " --out " + tmp.sub("b1")) == 2);
    CHECK(missing_or_empty(tmp.path / "b1"));

    const std::string unknown = tmp.write("unknown.json",
                                          "{\"system\": {\"masses\": [1.0], \"points\": [[1.0, "
                                          "0.0]]}, \"t_end\": 5.0, \"typo\": 1}");
    CHECK(run_cli("particles --config " + unknown + " --out " + tmp.sub("b2")) == 2);
    CHECK(missing_or_empty(tmp.path / "b2"));

    const std::string absent = tmp.sub("no_such.json");
    CHECK(run_cli("particles --config " + absent + " --out " + tmp.sub("b3")) == 2);

    // Usage errors from the argument parser map to the same code.
    CHECK(run_cli("particles") == 2);
    CHECK(run_cli("no_such_command --config x.json") == 2);
}

TEST_CASE("cli: backward point report for a held single-particle field") {
    TempDir tmp("vback");
    CHECK(run_cli("vback --config " + bundled("single_particle_field.json") + " --out " +
                  tmp.sub("out") + " --quiet") == 0);

    const json report = load_json(tmp.path / "out" / "vback_report.json");
    CHECK(report["all_pass"] == true);
    CHECK(std::fabs(report["result"]["v_back"][0].get<double>() + 1.0) < 1e-9);
    CHECK(std::fabs(report["result"]["lambda"].get<double>() - 1.0) < 1e-12);
    CHECK(report["verify"]["all_pass"] == true);
    CHECK(report["mesh"]["escaped"] == report["mesh"]["points"]);
}

TEST_CASE("cli: kinetic decay envelopes hold for the tilted density") {
    TempDir tmp("kinetic");
    CHECK(run_cli("kinetic --config " + bundled("tilted_n2_kinetic.json") + " --out " +
                  tmp.sub("out") + " --quiet") == 0);

    const json report = load_json(tmp.path / "out" / "rates_report.json");
    CHECK(report["dim"] == 2);
    CHECK(report["w1"]["stable"] == true);
    CHECK(report["w2"]["stable"] == true);
    CHECK(report["w1"]["spread"].get<double>() < 1.15);
    CHECK(report["w2"]["spread"].get<double>() < 1.15);
    CHECK(report["all_pass"] == true);

    const std::string csv = slurp(tmp.path / "out" / "kinetic.csv");
    CHECK(csv.rfind("t,lambda,alpha,w1,w2\n", 0) == 0);

    // A window too short to judge the envelopes is a config error.
    const std::string short_cfg = tmp.write(
        "short.json", "{\"density\": {\"kind\": \"tilted\", \"dim\": 2, \"beta\": 0.5}, "
                      "\"t_end\": 10.0}");
    CHECK(run_cli("kinetic --config " + short_cfg + " --out " + tmp.sub("s")) == 2);
}

TEST_CASE("cli: slow decay ordering holds and bad envelopes are rejected") {
    TempDir tmp("slow");
    CHECK(run_cli("slowdecay --config " + bundled("slow_exponential.json") + " --out " +
                  tmp.sub("out") + " --quiet") == 0);

    const json report = load_json(tmp.path / "out" / "slowdecay_report.json");
    CHECK(report["alpha0"].get<double>() > 0.0);
    CHECK(report["deficit_dominates"] == true);
    CHECK(report["w1_dominates"] == true);
    CHECK(report["all_pass"] == true);

    // Non-decaying g cannot be normalized into a density.
    const std::string gconst =
        tmp.write("gconst.json", "{\"g\": {\"kind\": \"const\", \"c\": 0.4}, \"eps\": 0.05}");
    CHECK(run_cli("slowdecay --config " + gconst + " --out " + tmp.sub("c")) == 2);

    // g(0) >= 1/2 leaves no room for an aligned component.
    const std::string gbig = tmp.write(
        "gbig.json", "{\"g\": {\"kind\": \"exp\", \"c\": 0.6, \"tau\": 10.0}, \"eps\": 0.05}");
    CHECK(run_cli("slowdecay --config " + gbig + " --out " + tmp.sub("b")) == 2);
}

TEST_CASE("cli: measure runs audit the two-atom limit") {
    TempDir tmp("measure");
    CHECK(run_cli("measure --config " + bundled("antipodal_pair_measure.json") + " --out " +
                  tmp.sub("pair") + " --quiet") == 0);
    const json pair = load_json(tmp.path / "pair" / "two_atom_report.json");
    CHECK(pair["back_index"] == 0);
    CHECK(pair["back_mass"] == 0.25);
    CHECK(pair["all_pass"] == true);

    CHECK(run_cli("measure --config " + bundled("atom_back_mass02.json") + " --out " +
                  tmp.sub("aimed") + " --quiet") == 0);
    const json aimed = load_json(tmp.path / "aimed" / "two_atom_report.json");
    CHECK(std::fabs(aimed["back_mass"].get<double>() - 0.2) < 1e-15);
    CHECK(std::fabs(aimed["final_j_norm"].get<double>() - 0.6) < 1e-6);
    CHECK(aimed["all_pass"] == true);

    const std::string csv = slurp(tmp.path / "pair" / "measure.csv");
    CHECK(csv.rfind("t,j_norm,w1,mass_plus,mass_minus,mass_undecided\n", 0) == 0);
}

TEST_CASE("cli: a horizon too short to resolve the limit exits 3") {
    TempDir tmp("early");
    const std::string cfg = tmp.write(
        "early.json", "{\"spec\": {\"atoms\": [{\"point\": [1.0, 0.0], \"mass\": 0.9}, "
                      "{\"point\": [0.0, 1.0], \"mass\": 0.1}]}, \"horizon\": 0.05}");
    CHECK(run_cli("measure --config " + cfg + " --out " + tmp.sub("out")) == 3);
    CHECK(missing_or_empty(tmp.path / "out"));
}

TEST_CASE("cli: sampled runs are byte-deterministic and seeded") {
    TempDir tmp("seeded");
    const std::string cfg = tmp.write(
        "cloud.json", "{\"seed\": 7, \"spec\": {\"density\": {\"kind\": \"tilted\", \"dim\": 3, "
                      "\"beta\": 0.5}}, \"count\": 60, \"horizon\": 15.0}");

    CHECK(run_cli("measure --config " + cfg + " --out " + tmp.sub("a") + " --quiet") == 0);
    CHECK(run_cli("measure --config " + cfg + " --out " + tmp.sub("b") + " --quiet") == 0);
    CHECK(slurp(tmp.path / "a" / "measure.csv") == slurp(tmp.path / "b" / "measure.csv"));
    CHECK(slurp(tmp.path / "a" / "two_atom_report.json") ==
          slurp(tmp.path / "b" / "two_atom_report.json"));

    // --seed overrides the config's seed and shifts every sampled artifact.
    CHECK(run_cli("measure --config " + cfg + " --out " + tmp.sub("c") + " --quiet --seed 99") ==
          0);
    CHECK(slurp(tmp.path / "a" / "measure.csv") != slurp(tmp.path / "c" / "measure.csv"));
}
