#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "doctest.h"
#include "labplan/cli.hpp"
#include "support.hpp"

using testsupport::fixture;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "labplan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = labplan::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("labplan_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("exit codes") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"plan", fixture("domains/washing.pddl")}).code == 2);
  CHECK(run({"plan", fixture("domains/washing.pddl"), fixture("domains/washing-problem.pddl"), "--mode", "fast"}).code ==
        2);
  CHECK(run({"--help"}).code == 0);

  const auto missing = run({"plan", "/nonexistent.pddl", fixture("domains/washing-problem.pddl")});
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: ", 0) == 0);

  const auto empty = run({"fit", fixture("data/empty.csv")});
  CHECK(empty.code == 1);
  CHECK(empty.err == "error: need at least 2 distinct pH values\n");
}

TEST_CASE("washing plan, gantt and validation") {
  const auto plan = scratch("washing.json");
  const auto r = run({"plan", fixture("domains/washing.pddl"), fixture("domains/washing-problem.pddl"), "--mode",
                      "sequential", "-o", plan.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("plan (sequential): 3 steps, cost 360, makespan 180 s\n", 0) == 0);
  CHECK(r.out.find("(wash beaker1 washer)") != std::string::npos);

  const auto v = run({"validate", fixture("domains/washing.pddl"), fixture("domains/washing-problem.pddl"),
                      plan.string()});
  CHECK(v.code == 0);
  CHECK(v.out == "valid: 3 steps, cost 360, makespan 180 s\n");

  const auto a = run({"gantt", plan.string(), "--format", "ascii"});
  const auto b = run({"gantt", plan.string(), "--format", "ascii"});
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.rfind("Gantt chart: makespan 180 s", 0) == 0);

  const auto svg1 = scratch("g1.svg");
  const auto svg2 = scratch("g2.svg");
  CHECK(run({"gantt", plan.string(), "-o", svg1.string()}).code == 0);
  CHECK(run({"gantt", plan.string(), "-o", svg2.string()}).code == 0);
  CHECK(slurp(svg1) == slurp(svg2));
  CHECK(slurp(svg1).rfind("<svg", 0) == 0);

  // Tampered plan fails validation with a nonzero code.
  std::string text = slurp(plan);
  const auto pos = text.find("\"wash\"");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 6, "\"pick\"");
  std::ofstream(plan) << text;
  const auto bad = run({"validate", fixture("domains/washing.pddl"), fixture("domains/washing-problem.pddl"),
                        plan.string()});
  CHECK(bad.code == 1);
  CHECK(bad.out.rfind("invalid: ", 0) == 0);
}

TEST_CASE("fit and report") {
  const auto fit = scratch("fit.json");
  const auto post = scratch("posterior.json");
  const auto f = run({"fit", fixture("data/synthetic.csv"), "--samples", "5000", "--seed", "3", "-o", fit.string(),
                      "--posterior", post.string()});
  REQUIRE(f.code == 0);
  CHECK(f.out.rfind("MLE: pKa1 ", 0) == 0);
  CHECK(fs::exists(post));

  const auto plan = scratch("p.json");
  REQUIRE(run({"plan", fixture("domains/washing.pddl"), fixture("domains/washing-problem.pddl"), "-o",
               plan.string()})
              .code == 0);
  const auto md = scratch("report.md");
  const auto r = run({"report", plan.string(), fit.string(), fixture("data/logs.json"), "-o", md.string(),
                      "--timestamp", "2026-01-01T00:00:00Z"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(scratch("report.json")));
  const std::string first = slurp(md);
  CHECK(first.find("Generated: 2026-01-01T00:00:00Z") != std::string::npos);
  REQUIRE(run({"report", plan.string(), fit.string(), fixture("data/logs.json"), "-o", md.string(), "--timestamp",
               "2026-01-01T00:00:00Z"})
              .code == 0);
  CHECK(slurp(md) == first);

  CHECK(run({"report", plan.string(), fit.string(), fixture("data/synthetic.csv")}).code == 1);
  fs::remove_all(md.parent_path());
}
