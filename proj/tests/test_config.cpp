#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "effspec/config.hpp"

using namespace effspec;
namespace fs = std::filesystem;

namespace {

const char* kBase = R"({
  "task": {"k": 3, "lambda": 3.0, "phi": 4.0, "profile": {"kind": "logistic-hessian"}},
  "init": {"kind": "zero"},
  "output": "out/x"
})";

// runs the parser and returns the error, or "" on success
std::string error_of(const std::string& text) {
  try {
    parse_scenario(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("minimal scenario") {
    const Scenario s = parse_scenario(kBase);
    CHECK(s.task.k == 3);
    CHECK(s.task.C == 3);
    CHECK(s.task.lambda == 3.0);
    CHECK((s.task.mean_gram - Mat::Identity(3, 3)).norm() == 0.0);
    CHECK(s.init.kind == InitKind::Zero);
    CHECK(s.output == "out/x");
    CHECK(s.empirical.d == 2000);
    CHECK(s.solver.scaling == Scaling::Data);
    const SummaryMatrix G = initial_summary(s);
    CHECK((G.G - zero_init_summary(s.task).G).norm() == 0.0);
  }

  TEST_CASE("errors carry line and field") {
    const std::string unknown = "{\n  \"task\": {\"k\": 3, \"lambda\": 3.0, \"phi\": 4.0,\n"
                                "    \"profile\": {\"kind\": \"logistic-hessian\"}},\n"
                                "  \"empirica\": {\"d\": 10}\n}";
    const std::string e1 = error_of(unknown);
    CHECK(e1.find("cfg.json:4:") == 0);
    CHECK(e1.find("empirica") != std::string::npos);

    const std::string bad_type = "{\n  \"task\": {\"k\": 3, \"lambda\": \"three\", \"phi\": 4.0,\n"
                                 "    \"profile\": {\"kind\": \"logistic-hessian\"}}\n}";
    const std::string e2 = error_of(bad_type);
    CHECK(e2.find("cfg.json:2:") == 0);
    CHECK(e2.find("task.lambda") != std::string::npos);

    const std::string tol = "{\n  \"task\": {\"k\": 3, \"lambda\": 3.0, \"phi\": 4.0,\n"
                            "    \"profile\": {\"kind\": \"logistic-hessian\"}},\n"
                            "  \"solver\": {\n    \"residual_tol\": -1e-10\n  }\n}";
    const std::string e3 = error_of(tol);
    CHECK(e3.find("cfg.json:5:") == 0);
    CHECK(e3.find("solver.residual_tol") != std::string::npos);

    try {
      parse_scenario(tol, "cfg.json");
      FAIL("expected an error");
    } catch (const ConfigError& e) {
      CHECK(e.field == "solver.residual_tol");
      CHECK(e.line == 5);
    }
    CHECK(error_of("{\"task\": ").find("syntax error") != std::string::npos);
    CHECK_FALSE(error_of("{}").empty());
    CHECK(error_of(R"({"task": {"k": 3, "lambda": 3.0, "phi": 4.0, "profile": {"kind": "nope"}}})")
              .find("task.profile.kind") != std::string::npos);
    CHECK_FALSE(error_of(R"({"task": {"k": 3, "lambda": 3.0, "phi": 4.0, "profile": {"kind": "logistic-hessian"}},
                             "figure": {"name": "fig9"}})")
                    .empty());
    CHECK_FALSE(error_of(R"({"task": {"k": 3, "lambda": 3.0, "phi": 4.0, "profile": {"kind": "logistic-hessian"}},
                             "init": {"kind": "explicit", "G": [[1, 0], [0, 1]]}})")
                    .empty());
  }

  TEST_CASE("canonical form ignores layout and key order") {
    const std::string b = R"({"output": "out/x", "init": {"kind": "zero"},
      "task": {"profile": {"kind": "logistic-hessian", "alpha": 0}, "phi": 4, "lambda": 3, "k": 3, "mean_gram": "identity"}})";
    CHECK(canonical_json(parse_scenario(kBase)) == canonical_json(parse_scenario(b)));
    const std::string c = R"({"task": {"k": 3, "lambda": 3.5, "phi": 4.0, "profile": {"kind": "logistic-hessian"}}})";
    CHECK(canonical_json(parse_scenario(kBase)) != canonical_json(parse_scenario(c)));
  }

  TEST_CASE("explicit and isotropic initial summaries") {
    const std::string g = R"({"task": {"k": 3, "lambda": 3.0, "phi": 4.0, "profile": {"kind": "logistic-hessian"}},
      "init": {"kind": "explicit", "G": [[1,0,0,0.5,0,0],[0,1,0,0,0,0],[0,0,1,0,0,0],
                                          [0.5,0,0,1,0,0],[0,0,0,0,1,0],[0,0,0,0,0,1]]}})";
    const Scenario s = parse_scenario(g);
    CHECK(s.init.kind == InitKind::Explicit);
    CHECK(initial_summary(s).G(0, 3) == 0.5);
    const Scenario iso = parse_scenario(R"({"task": {"k": 3, "lambda": 3.0, "phi": 4.0,
      "profile": {"kind": "logistic-hessian"}}, "init": {"kind": "gaussian"}})");
    CHECK((initial_summary(iso).G - Mat::Identity(6, 6)).norm() == 0.0);
  }

  TEST_CASE("task files resolve relative to the scenario") {
    const fs::path dir = fs::temp_directory_path() / "effspec_config_test";
    fs::create_directories(dir / "tasks");
    std::ofstream(dir / "tasks" / "t.json") << R"({"k": 3, "lambda": 2.5, "phi": 4.0, "profile": {"kind": "logistic-gradient"}})";
    std::ofstream(dir / "s.json") << R"({"task": "tasks/t.json", "empirical": {"d": 100, "seeds": [3, 4]}})";
    const Scenario s = load_scenario((dir / "s.json").string());
    CHECK(s.task.lambda == 2.5);
    CHECK(s.task.profile.kind == ProfileKind::LogisticGradient);
    CHECK(s.empirical.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK_THROWS_AS(load_scenario((dir / "missing.json").string()), ConfigError);
    fs::remove_all(dir);
  }
}
