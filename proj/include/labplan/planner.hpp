#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "labplan/model.hpp"
#include "labplan/pddl.hpp"
#include "labplan/search.hpp"
#include "labplan/streams.hpp"
#include "labplan/temporal.hpp"

namespace labplan::planner {

class PlannerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Phase { kStart, kEnd, kInstantaneous };
enum class Mode { kSequential, kParallel };

std::string to_string(Phase p);
std::string to_string(Mode m);
Phase parse_phase(const std::string& s);
Mode parse_mode(const std::string& s);

/// One step of a plan in terms of the original (instantaneous) action. For
/// end steps t_start is the start time of the paired start step.
struct PlanStep {
  std::string action;
  std::vector<std::string> args;
  Phase phase = Phase::kInstantaneous;
  std::int64_t t_start = 0;
  std::int64_t duration = 0;
  std::vector<std::string> agents;

  bool operator==(const PlanStep&) const = default;
  /// "(action a b)"
  std::string name() const;
};

struct Plan {
  std::vector<PlanStep> steps;
  double cost = 0;
  std::int64_t makespan = 0;
  Mode mode = Mode::kSequential;
  /// Facts certified while binding optimistic streams (needed to replay).
  std::vector<GroundAtom> certified;

  bool operator==(const Plan&) const = default;
};

/// Sum of (t_start + duration) over start and instantaneous steps; throws
/// PlannerError when start and end steps do not pair up.
double plan_cost(const Plan& plan);
std::int64_t plan_makespan(const Plan& plan);

std::string plan_to_json(const Plan& plan);
/// Throws PlannerError on malformed input.
Plan plan_from_json(const std::string& text);

struct SolveOptions {
  Mode mode = Mode::kParallel;
  search::SearchConfig search;
  int iteration_limit = 25;
  std::uint64_t seed = 0;
  /// Defaults to the built-in registry.
  const streams::GeneratorRegistry* registry = nullptr;
  std::function<void(const std::string&)> log;
};

struct SolveResult {
  std::optional<Plan> plan;
  /// Why no plan was returned ("no plan within t_max", ...).
  std::string reason;
  int iterations = 0;
  search::SearchStats stats;
  std::size_t ground_actions = 0;
};

/// The planning loop: eager streams once, then optimistic instantiation,
/// search and stream binding until a concrete plan is found.
SolveResult solve_temporal(const pddl::Domain& dom, const pddl::Problem& prob, const pddl::StreamSpecSet& specs,
                           const temporal::DurativeConfig& cfg, const SolveOptions& opts);

/// Ground task a plan of `mode` is replayed against. `extra` holds facts from
/// bound optimistic streams.
GroundTask planning_task(const pddl::Domain& dom, const pddl::Problem& prob, const pddl::StreamSpecSet& specs,
                         const temporal::DurativeConfig& cfg, Mode mode, const FactSet& extra = {});

struct EvaluationResult {
  bool ok = false;
  /// Search steps with placeholders replaced by concrete objects.
  std::vector<GroundAction> steps;
  /// Newly certified facts.
  FactSet psi;
  /// Identifiers of failed stream instances.
  std::set<std::string> failed;
};

/// Binds the placeholders of `steps` in plan order.
EvaluationResult evaluate_optimistic_plan(const std::vector<GroundAction>& steps, streams::StreamEpisode& episode);

struct ValidationReport {
  bool valid = false;
  bool goal_satisfied = false;
  /// 1-based index of the first failing step, 0 if none.
  std::size_t failed_step = 0;
  /// Failing precondition as written in the schema.
  std::string failing_literal;
  std::string message;
  double cost = 0;
};

ValidationReport validate_plan(const Plan& plan, const GroundTask& task);

}  // namespace labplan::planner
