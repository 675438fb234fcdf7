#include <random>

#include "doctest.h"
#include "labplan/search.hpp"
#include "support.hpp"

using namespace labplan;
using testsupport::load;

namespace {

GroundTask from_text(const std::string& d, const std::string& p) {
  const auto dom = pddl::parse_domain(SourceText{d});
  return ground_task(dom, pddl::parse_problem(SourceText{p}, dom));
}

// a: {} -> x (cost 2), b: {} -> y (cost 3), c: x,y -> g (cost 1)
GroundTask diamond() {
  return from_text(
      "(define (domain dia) (:requirements :action-costs) (:predicates (x) (y) (g)) (:functions (total-cost))\n"
      " (:action a :parameters () :precondition (and) :effect (and (x) (increase (total-cost) 2)))\n"
      " (:action b :parameters () :precondition (and) :effect (and (y) (increase (total-cost) 3)))\n"
      " (:action c :parameters () :precondition (and (x) (y)) :effect (and (g) (increase (total-cost) 1))))",
      "(define (problem dp) (:domain dia) (:init) (:goal (g)) (:metric minimize (total-cost)))");
}

}  // namespace

TEST_CASE("h_add and h_max by hand") {
  const auto task = diamond();
  // h_add = cost(c) + h(x) + h(y) = 1 + 2 + 3; h_max = 1 + max(2, 3).
  CHECK(search::h_add(task, task.init) == doctest::Approx(6));
  CHECK(search::h_max(task, task.init) == doctest::Approx(4));
  const State goal = task.make_state({{"g", {}}});
  CHECK(search::h_add(task, goal) == 0);
  CHECK(search::h_max(task, goal) == 0);
}

TEST_CASE("unreachable goal is infinite") {
  const auto task = from_text(
      "(define (domain u) (:predicates (x) (g)) (:action a :parameters () :precondition (and) :effect (x)))",
      "(define (problem up) (:domain u) (:init) (:goal (g)))");
  CHECK(search::h_add(task, task.init) == search::kInfinity);
  CHECK_FALSE(search::weighted_astar(task, {}).has_value());
}

TEST_CASE("goal already satisfied gives an empty plan") {
  const auto task = from_text("(define (domain s) (:predicates (x)))",
                              "(define (problem sp) (:domain s) (:init (x)) (:goal (x)))");
  const auto res = search::weighted_astar(task, {});
  REQUIRE(res);
  CHECK(res->steps.empty());
  CHECK(res->g == 0);
}

TEST_CASE("washing plan") {
  const auto dom = pddl::parse_domain(load("domains/washing.pddl"));
  const auto task = ground_task(dom, pddl::parse_problem(load("domains/washing-problem.pddl"), dom));
  const auto res = search::weighted_astar(task, {});
  REQUIRE(res);
  REQUIRE(res->steps.size() == 3);
  CHECK(res->steps[0].name() == "(pick franka beaker1 table_loc)");
  CHECK(res->steps[1].name() == "(place franka beaker1 washing_station_loc)");
  CHECK(res->steps[2].name() == "(wash beaker1 washer)");
}

TEST_CASE("node limit is reported separately") {
  const auto task = diamond();
  search::SearchConfig cfg;
  cfg.node_limit = 1;
  cfg.heuristic = search::HeuristicKind::kBlind;
  CHECK_THROWS_AS(search::weighted_astar(task, cfg), search::SearchLimitExceeded);
}

TEST_CASE("bad configuration") {
  search::SearchConfig cfg;
  cfg.weight = 0.5;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("random tasks against Dijkstra") {
  std::mt19937_64 rng(3);
  int solvable = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const auto spec = testsupport::random_strips(rng);
    const auto dom = pddl::parse_domain(SourceText{spec.domain_pddl()});
    const auto task = ground_task(dom, pddl::parse_problem(SourceText{spec.problem_pddl()}, dom));
    const auto oracle = spec.dijkstra();
    CAPTURE(trial);

    // w = 1 with h_max is admissible, so the cost must be optimal.
    search::SearchConfig opt;
    opt.weight = 1;
    opt.heuristic = search::HeuristicKind::kMax;
    const auto exact = search::weighted_astar(task, opt);
    REQUIRE(exact.has_value() == oracle.has_value());
    if (!oracle) continue;
    ++solvable;
    CHECK(exact->g == doctest::Approx(*oracle));

    // The default configuration returns a valid plan whose cost matches its steps.
    const auto res = search::weighted_astar(task, {});
    REQUIRE(res);
    State s = task.init;
    double cost = 0;
    for (const auto& a : res->steps) {
      REQUIRE(holds(s, a.precondition));
      s = apply(s, a, task);
      cost += a.cost;
    }
    CHECK(holds(s, task.goal));
    CHECK(res->g == doctest::Approx(cost));
    CHECK(res->g >= *oracle - 1e-9);
  }
  CHECK(solvable > 30);
}
