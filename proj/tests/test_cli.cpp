#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "effspec/cli.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::temp_directory_path() / "effspec_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(EFFSPEC_CLI_PATH) + " " + args + " >" + (kWork / "stdout.txt").string() +
                          " 2>" + (kWork / "stderr.txt").string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kWork);
  const fs::path p = kWork / name;
  std::ofstream(p) << text;
  return p;
}

const char* kSmall = R"({
  "task": {"k": 3, "lambda": 3.0, "phi": 4.0, "profile": {"kind": "logistic-hessian"}},
  "init": {"kind": "zero"},
  "solver": {"density_points": 200},
  "empirical": {"d": 200, "seeds": [1, 2]},
  "dynamics": {"dt": 1e-3, "T": 0.002, "checkpoints": [0.0, 0.001, 0.002]}
})";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("hashing") {
    CHECK(effspec::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("prediction and comparison pipeline") {
    fs::remove_all(kWork);
    const fs::path cfg = write_config("small.json", kSmall);
    const fs::path out = kWork / "out";
    const std::string base = "--config " + cfg.string() + " --out " + out.string();
    CHECK(run("--version") == 0);

    REQUIRE(run(base + " predict-bulk") == 0);
    for (const char* f : {"density.csv", "support.json", "diagnostics.json"}) {
      CHECK(fs::exists(out / f));
      CHECK(fs::exists(out / (std::string(f) + ".meta.json")));
    }
    const json sup = json::parse(slurp(out / "support.json"));
    const json meta = json::parse(slurp(out / "support.json.meta.json"));
    CHECK(meta["command"] == "predict-bulk");
    CHECK(meta["content_sha256"] == effspec::sha256_hex(slurp(out / "support.json")));
    CHECK(sup.dump().find("0.1666666") != std::string::npos);
    CHECK(slurp(out / "density.csv").rfind("x,density\n", 0) == 0);

    REQUIRE(run(base + " predict-outliers") == 0);
    CHECK(slurp(out / "roots.json").find("0.185185") != std::string::npos);

    // compare needs the empirical bundle
    CHECK(run(base + " compare") == 1);
    REQUIRE(run(base + " --threads 1 empirical") == 0);
    CHECK(fs::exists(out / "eigenvalues.csv"));
    CHECK(fs::exists(out / "histogram.csv"));
    REQUIRE(run(base + " compare") == 0);
    const json cmp = json::parse(slurp(out / "comparison.json"));
    CHECK(cmp["summary"]["median_ks"].get<double>() < 0.1);

    // a changed scenario does not accept stale inputs
    std::string other = kSmall;
    other.replace(other.find("3.0"), 3, "3.5");
    const fs::path cfg2 = write_config("other.json", other);
    CHECK(run("--config " + cfg2.string() + " --out " + (kWork / "out2").string() + " compare --inputs " +
              out.string()) == 1);
    CHECK(slurp(kWork / "stderr.txt").find("different config") != std::string::npos);
  }

  TEST_CASE("dynamics replay is reproducible") {
    const fs::path cfg = write_config("dyn.json", kSmall);
    const fs::path a = kWork / "dyn_a", b = kWork / "dyn_b";
    REQUIRE(run("--config " + cfg.string() + " --out " + a.string() + " dynamics") == 0);
    for (const char* f : {"trajectory.csv", "spectra.json", "flow.csv", "edges.csv"}) CHECK(fs::exists(a / f));
    REQUIRE(run("--config " + cfg.string() + " --out " + b.string() + " dynamics --replay " +
                (a / "trajectory.csv").string()) == 0);
    CHECK(slurp(a / "trajectory.csv") == slurp(b / "trajectory.csv"));
    CHECK(slurp(a / "flow.csv") == slurp(b / "flow.csv"));
  }

  TEST_CASE("malformed configuration") {
    const fs::path cfg = write_config("bad.json", "{\n  \"task\": {\"k\": 3, \"lambda\": 3.0, \"phi\": 4.0,\n"
                                                  "    \"profile\": {\"kind\": \"logistic-hessian\"}},\n"
                                                  "  \"solver\": {\"density_points\": -5}\n}\n");
    const fs::path out = kWork / "bad_out";
    CHECK(run("--config " + cfg.string() + " --out " + out.string() + " predict-bulk") == 1);
    const std::string err = slurp(kWork / "stderr.txt");
    CHECK(err.find("bad.json:4:") != std::string::npos);
    CHECK(err.find("solver.density_points") != std::string::npos);
    CHECK_FALSE(fs::exists(out));
    CHECK(run("--config " + (kWork / "nope.json").string() + " --out " + out.string() + " predict-bulk") == 1);
    CHECK_FALSE(fs::exists(out));
    CHECK(run("predict-bulk") == 1);
  }
}
