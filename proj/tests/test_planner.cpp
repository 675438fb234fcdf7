#include "doctest.h"
#include "labplan/planner.hpp"
#include "labplan/schedule.hpp"
#include "support.hpp"

using namespace labplan;
using testsupport::load;

namespace {

struct Fixture {
  pddl::Domain dom;
  pddl::Problem prob;
  pddl::StreamSpecSet specs;
  temporal::DurativeConfig cfg;

  planner::SolveResult solve(planner::Mode mode) const {
    planner::SolveOptions opts;
    opts.mode = mode;
    return planner::solve_temporal(dom, prob, specs, cfg, opts);
  }
  GroundTask task(planner::Mode mode, const planner::Plan& p) const {
    FactSet extra;
    extra.certified.insert(p.certified.begin(), p.certified.end());
    return planner::planning_task(dom, prob, specs, cfg, mode, extra);
  }
};

Fixture washing() {
  Fixture f;
  f.dom = pddl::parse_domain(load("domains/washing.pddl"));
  f.prob = pddl::parse_problem(load("domains/washing-problem.pddl"), f.dom);
  return f;
}

Fixture electrochem() {
  Fixture f;
  f.dom = pddl::parse_domain(load("domains/electrochem.pddl"));
  f.prob = pddl::parse_problem(load("domains/electrochem-problem.pddl"), f.dom);
  f.cfg = temporal::parse_config(load("domains/electrochem.toml"));
  return f;
}

// Goal needs a location that only an optimistic stream can supply.
Fixture docking(const std::string& generator_tail) {
  Fixture f;
  f.dom = pddl::parse_domain(SourceText{
      "(define (domain dock) (:requirements :typing) (:types robot loc)\n"
      " (:predicates (ready ?r - robot) (slot ?l - loc) (parked ?r - robot ?l - loc) (done ?r - robot))\n"
      " (:action park :parameters (?r - robot ?l - loc) :precondition (and (ready ?r) (slot ?l))\n"
      "   :effect (and (parked ?r ?l) (done ?r))))"});
  f.prob = pddl::parse_problem(SourceText{"(define (problem dp) (:domain dock) (:objects r1 - robot bay - loc)\n"
                                          " (:init (ready r1)) (:goal (done r1)))"},
                               f.dom);
  f.specs = pddl::parse_streams(SourceText{"(:stream find-slot :kind optimistic :inputs (?r - robot)\n"
                                           " :domain (ready ?r) :outputs (?l - loc) :certified (slot ?l)\n"
                                           " :generator " +
                                           generator_tail + ")"},
                                f.dom);
  return f;
}

}  // namespace

TEST_CASE("washing, sequential") {
  const auto f = washing();
  const auto res = f.solve(planner::Mode::kSequential);
  REQUIRE(res.plan);
  const auto& p = *res.plan;
  REQUIRE(p.steps.size() == 3);
  CHECK(p.steps[0].name() == "(pick franka beaker1 table_loc)");
  CHECK(p.steps[1].name() == "(place franka beaker1 washing_station_loc)");
  CHECK(p.steps[2].name() == "(wash beaker1 washer)");
  CHECK(p.steps[0].t_start == 0);
  CHECK(p.steps[1].t_start == 60);
  CHECK(p.steps[2].t_start == 120);
  // 60 + 120 + 180
  CHECK(p.cost == 360);
  CHECK(p.makespan == 180);
  CHECK(planner::plan_cost(p) == 360);

  const auto rep = planner::validate_plan(p, f.task(planner::Mode::kSequential, p));
  CHECK(rep.valid);
  CHECK(rep.cost == 360);
}

TEST_CASE("washing, parallel") {
  const auto f = washing();
  const auto res = f.solve(planner::Mode::kParallel);
  REQUIRE(res.plan);
  const auto& p = *res.plan;
  CHECK(p.steps.size() == 6);
  // Each step depends on the previous one, so nothing overlaps.
  CHECK(p.makespan == 180);
  CHECK(planner::validate_plan(p, f.task(planner::Mode::kParallel, p)).valid);
}

TEST_CASE("electrochem: parallel beats sequential") {
  const auto f = electrochem();
  const auto seq = f.solve(planner::Mode::kSequential);
  const auto par = f.solve(planner::Mode::kParallel);
  REQUIRE(seq.plan);
  REQUIRE(par.plan);
  CHECK(par.plan->makespan < seq.plan->makespan);
  CHECK(planner::validate_plan(*par.plan, f.task(planner::Mode::kParallel, *par.plan)).valid);
  CHECK(planner::validate_plan(*seq.plan, f.task(planner::Mode::kSequential, *seq.plan)).valid);
  CHECK_FALSE(schedule::find_overlap(schedule::extract_schedule(*par.plan)));
  // Each action of the domain runs exactly once.
  CHECK(par.plan->steps.size() == 2 * f.dom.actions.size());
}

TEST_CASE("horizon too short") {
  auto f = washing();
  f.cfg.t_max = 60;
  const auto par = f.solve(planner::Mode::kParallel);
  CHECK_FALSE(par.plan);
  CHECK(par.reason == "no plan within t_max");
  const auto seq = f.solve(planner::Mode::kSequential);
  CHECK_FALSE(seq.plan);
  CHECK(seq.reason == "no plan within t_max");
}

TEST_CASE("validation pinpoints the first bad step") {
  const auto f = washing();
  auto p = *f.solve(planner::Mode::kSequential).plan;
  const auto task = f.task(planner::Mode::kSequential, p);

  SUBCASE("swapped steps") {
    std::swap(p.steps[0], p.steps[2]);
    const auto rep = planner::validate_plan(p, task);
    CHECK_FALSE(rep.valid);
    CHECK(rep.failed_step == 1);
    CHECK(rep.failing_literal == "(at ?glsw washing_station_loc)");
  }
  SUBCASE("empty plan") {
    p.steps.clear();
    const auto rep = planner::validate_plan(p, task);
    CHECK_FALSE(rep.valid);
    CHECK_FALSE(rep.goal_satisfied);
    CHECK(rep.failed_step == 0);
  }
  SUBCASE("gap between sequential steps") {
    p.steps[2].t_start = 180;
    const auto rep = planner::validate_plan(p, task);
    CHECK_FALSE(rep.valid);
    CHECK(rep.failed_step == 3);
  }
  SUBCASE("unknown action") {
    p.steps[0].action = "fly";
    const auto rep = planner::validate_plan(p, task);
    CHECK(rep.failed_step == 1);
    CHECK(rep.message.find("unknown action") != std::string::npos);
  }
}

TEST_CASE("plan JSON round trip") {
  const auto f = electrochem();
  const auto p = *f.solve(planner::Mode::kParallel).plan;
  const auto text = planner::plan_to_json(p);
  CHECK(planner::plan_from_json(text) == p);
  CHECK(planner::plan_to_json(planner::plan_from_json(text)) == text);
  CHECK_THROWS_AS(planner::plan_from_json("{\"steps\": 3}"), planner::PlannerError);
  CHECK_THROWS_AS(planner::plan_from_json("not json"), planner::PlannerError);
}

TEST_CASE("plan cost needs paired steps") {
  planner::Plan p;
  p.mode = planner::Mode::kParallel;
  p.steps.push_back({"wash", {"beaker1", "washer"}, planner::Phase::kStart, 60, 120, {"washer"}});
  CHECK_THROWS_AS(planner::plan_cost(p), planner::PlannerError);
  p.steps.push_back({"wash", {"beaker1", "washer"}, planner::Phase::kEnd, 60, 120, {"washer"}});
  CHECK(planner::plan_cost(p) == 180);
  CHECK(planner::plan_makespan(p) == 180);
}

TEST_CASE("mode and phase names") {
  CHECK(planner::parse_mode("sequential") == planner::Mode::kSequential);
  CHECK(planner::to_string(planner::Mode::kParallel) == "parallel");
  CHECK(planner::parse_phase(planner::to_string(planner::Phase::kEnd)) == planner::Phase::kEnd);
  CHECK_THROWS_AS(planner::parse_mode("eager"), planner::PlannerError);
}

TEST_CASE("optimistic stream is bound during planning") {
  const auto f = docking("sample-token :args (bay)");
  for (auto mode : {planner::Mode::kSequential, planner::Mode::kParallel}) {
    const auto res = f.solve(mode);
    REQUIRE(res.plan);
    const auto& p = *res.plan;
    CHECK(p.steps.back().name() == "(park r1 bay)");
    CHECK(std::find(p.certified.begin(), p.certified.end(), GroundAtom{"slot", {"bay"}}) != p.certified.end());
    // Replays only with the certified facts.
    CHECK(planner::validate_plan(p, f.task(mode, p)).valid);
    CHECK_FALSE(planner::validate_plan(p, planner::planning_task(f.dom, f.prob, f.specs, f.cfg, mode)).valid);
  }
}

TEST_CASE("exhausted stream leaves no plan") {
  const auto f = docking("constant");
  const auto res = f.solve(planner::Mode::kSequential);
  CHECK_FALSE(res.plan);
  CHECK(res.reason == "no plan exists");
  CHECK(res.iterations >= 2);
}
