#include "labplan/planner.hpp"

#include <algorithm>
#include <map>

namespace labplan::planner {

namespace {

struct Prepared {
  pddl::Domain domain;
  pddl::Problem problem;
  std::optional<temporal::DurativeDomain> dd;
  temporal::DurativeConfig cfg;
  pddl::StreamSpecSet specs;
  streams::Universe universe;
  std::string timing_type = "timing";
};

Prepared prepare(const pddl::Domain& dom, const pddl::Problem& prob, const pddl::StreamSpecSet& specs,
                 const temporal::DurativeConfig& cfg, Mode mode) {
  Prepared p;
  p.cfg = temporal::complete_config(dom, cfg);
  p.cfg.validate();
  if (mode == Mode::kParallel) {
    p.dd = temporal::make_durative(dom, p.cfg);
    p.domain = p.dd->domain;
    p.problem = temporal::make_durative_problem(*p.dd, prob);
    p.specs = p.dd->eager_streams;
    p.timing_type = p.dd->timing_type;
  } else {
    // Back-to-back execution: each action costs its duration.
    p.domain = dom;
    p.domain.requirements.insert(":action-costs");
    if (!p.domain.find_function(pddl::kTotalCost)) p.domain.functions.push_back({pddl::kTotalCost, {}});
    for (auto& a : p.domain.actions) a.effect.cost = pddl::CostTerm{static_cast<double>(p.cfg.duration_of(a.name))};
    p.problem = prob;
    p.problem.minimize_total_cost = true;
  }
  p.specs.streams.insert(p.specs.streams.end(), specs.streams.begin(), specs.streams.end());
  p.universe = streams::make_universe(p.domain, p.problem);
  return p;
}

FactSet init_facts(const pddl::Problem& prob) {
  FactSet f;
  for (const auto& a : prob.init) f.certified.insert(GroundAtom{a.predicate, a.args});
  return f;
}

GroundTask ground(const Prepared& p, const FactSet& extra) {
  GroundTask task = ground_task(p.domain, p.problem, extra);
  if (p.dd) task.temporal = p.dd->layout();
  return task;
}

std::vector<std::string> resolve_agents(const std::vector<std::string>& terms, const pddl::ActionSchema& schema,
                                        const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (const auto& term : terms) {
    if (!pddl::is_variable(term)) {
      out.push_back(term);
      continue;
    }
    for (std::size_t i = 0; i < schema.parameters.size() && i < args.size(); ++i) {
      if (schema.parameters[i].name == term) out.push_back(args[i]);
    }
  }
  return out;
}

Plan to_plan(const Prepared& p, const pddl::Domain& base, const std::vector<GroundAction>& steps, Mode mode) {
  Plan plan;
  plan.mode = mode;
  std::int64_t clock = 0;
  for (const auto& g : steps) {
    PlanStep s;
    if (mode == Mode::kSequential) {
      const pddl::ActionSchema* schema = base.find_action(g.schema);
      s.action = g.schema;
      s.args = g.binding;
      s.phase = Phase::kInstantaneous;
      s.duration = p.cfg.duration_of(g.schema);
      s.t_start = clock;
      clock += s.duration;
      auto ag = p.cfg.agents.find(g.schema);
      if (schema && ag != p.cfg.agents.end()) s.agents = resolve_agents(ag->second, *schema, s.args);
    } else {
      bool is_start = false;
      const temporal::DurativeAction* da = p.dd->find_by_schema(g.schema, &is_start);
      if (!da) throw PlannerError("search returned unknown step " + g.name());
      const pddl::ActionSchema* schema = base.find_action(da->name);
      s.action = da->name;
      s.args.assign(g.binding.begin(), g.binding.begin() + static_cast<std::ptrdiff_t>(da->parameter_count));
      s.phase = is_start ? Phase::kStart : Phase::kEnd;
      s.duration = da->duration;
      const auto t = streams::timing_value(g.binding.at(da->parameter_count));
      if (!t) throw PlannerError("step " + g.name() + " has no timing argument");
      s.t_start = *t;
      s.agents = resolve_agents(da->agents, *schema, s.args);
    }
    plan.steps.push_back(std::move(s));
  }
  plan.cost = plan_cost(plan);
  plan.makespan = plan_makespan(plan);
  return plan;
}

std::string step_key(const PlanStep& s) {
  std::string k = s.action;
  for (const auto& a : s.args) k += '\x1f' + a;
  return k;
}

}  // namespace

std::string to_string(Phase p) {
  switch (p) {
    case Phase::kStart:
      return "start";
    case Phase::kEnd:
      return "end";
    case Phase::kInstantaneous:
      return "instantaneous";
  }
  return "instantaneous";
}

std::string to_string(Mode m) { return m == Mode::kSequential ? "sequential" : "parallel"; }

Phase parse_phase(const std::string& s) {
  if (s == "start") return Phase::kStart;
  if (s == "end") return Phase::kEnd;
  if (s == "instantaneous") return Phase::kInstantaneous;
  throw PlannerError("unknown phase '" + s + "'");
}

Mode parse_mode(const std::string& s) {
  if (s == "sequential") return Mode::kSequential;
  if (s == "parallel") return Mode::kParallel;
  throw PlannerError("unknown mode '" + s + "'");
}

std::string PlanStep::name() const {
  std::string out = "(" + action;
  for (const auto& a : args) out += " " + a;
  return out + ")";
}

double plan_cost(const Plan& plan) {
  std::map<std::string, std::vector<std::int64_t>> open;
  double cost = 0;
  for (const auto& s : plan.steps) {
    switch (s.phase) {
      case Phase::kInstantaneous:
        cost += static_cast<double>(s.t_start + s.duration);
        break;
      case Phase::kStart:
        cost += static_cast<double>(s.t_start + s.duration);
        open[step_key(s)].push_back(s.t_start);
        break;
      case Phase::kEnd: {
        auto& starts = open[step_key(s)];
        auto it = std::find(starts.begin(), starts.end(), s.t_start);
        if (it == starts.end()) throw PlannerError("end step " + s.name() + " has no matching start");
        starts.erase(it);
        break;
      }
    }
  }
  for (const auto& [k, starts] : open) {
    if (!starts.empty()) throw PlannerError("start step without matching end");
  }
  return cost;
}

std::int64_t plan_makespan(const Plan& plan) {
  std::int64_t m = 0;
  for (const auto& s : plan.steps) m = std::max(m, s.t_start + s.duration);
  return m;
}

GroundTask planning_task(const pddl::Domain& dom, const pddl::Problem& prob, const pddl::StreamSpecSet& specs,
                         const temporal::DurativeConfig& cfg, Mode mode, const FactSet& extra) {
  const Prepared p = prepare(dom, prob, specs, cfg, mode);
  const auto registry = streams::GeneratorRegistry::with_builtins();
  FactSet facts = streams::eval_eager(p.specs, init_facts(p.problem), p.cfg, p.universe, registry, p.timing_type);
  facts.merge(extra);
  return ground(p, facts);
}

EvaluationResult evaluate_optimistic_plan(const std::vector<GroundAction>& steps, streams::StreamEpisode& episode) {
  EvaluationResult r;
  std::map<std::string, std::string> concrete;
  for (const auto& step : steps) {
    for (const auto& arg : step.binding) {
      if (!streams::is_placeholder(arg) || concrete.count(arg)) continue;
      const int producer = episode.producer_of(arg);
      if (producer < 0) throw PlannerError("plan mentions unknown placeholder " + arg);
      auto& inst = episode.instances()[static_cast<std::size_t>(producer)];
      if (inst.status == streams::InstanceStatus::kUntried) {
        streams::BindResult b = episode.bind_stream(static_cast<std::size_t>(producer));
        if (!b.ok) {
          r.failed.insert(b.failed);
          return r;
        }
        r.psi.merge(b.facts);
      } else if (inst.status == streams::InstanceStatus::kFailed) {
        r.failed.insert(inst.id());
        return r;
      }
      for (std::size_t i = 0; i < inst.placeholders.size(); ++i) concrete[inst.placeholders[i]] = inst.outputs[i];
    }
  }
  r.steps = steps;
  for (auto& step : r.steps) {
    for (auto& arg : step.binding) {
      if (auto it = concrete.find(arg); it != concrete.end()) arg = it->second;
    }
  }
  r.psi.objects.clear();
  r.ok = true;
  return r;
}

SolveResult solve_temporal(const pddl::Domain& dom, const pddl::Problem& prob, const pddl::StreamSpecSet& specs,
                           const temporal::DurativeConfig& cfg, const SolveOptions& opts) {
  auto log = [&](const std::string& msg) {
    if (opts.log) opts.log(msg);
  };
  const Prepared p = prepare(dom, prob, specs, cfg, opts.mode);
  const auto builtins = streams::GeneratorRegistry::with_builtins();
  const streams::GeneratorRegistry& registry = opts.registry ? *opts.registry : builtins;

  const FactSet init = init_facts(p.problem);
  const FactSet certified = streams::eval_eager(p.specs, init, p.cfg, p.universe, registry, p.timing_type);
  log("eager streams certified " + std::to_string(certified.certified.size()) + " facts");
  FactSet base = init;
  base.merge(certified);

  streams::StreamEpisode episode(p.specs, registry, opts.seed, &p.cfg);
  SolveResult result;
  const std::string no_plan = opts.mode == Mode::kParallel ? "no plan within t_max" : "no plan exists";
  for (int iter = 1; iter <= opts.iteration_limit; ++iter) {
    result.iterations = iter;
    const FactSet optimistic = episode.instantiate_optimistic(base, p.universe);
    FactSet extra = certified;
    extra.merge(optimistic);
    const GroundTask task = ground(p, extra);
    result.ground_actions = task.actions.size();
    log("iteration " + std::to_string(iter) + ": " + std::to_string(task.actions.size()) + " ground actions, " +
        std::to_string(optimistic.certified.size()) + " optimistic facts");
    const auto found = search::weighted_astar(task, opts.search);
    if (!found) {
      result.reason = no_plan;
      return result;
    }
    result.stats = found->stats;
    EvaluationResult eval = evaluate_optimistic_plan(found->steps, episode);
    if (!eval.ok) {
      for (const auto& f : eval.failed) log("stream instance failed: " + f);
      episode.reset_bound();
      continue;
    }
    if (!eval.psi.certified.empty()) log("psi: " + std::to_string(eval.psi.certified.size()) + " new facts");

    Plan plan = to_plan(p, dom, eval.steps, opts.mode);
    plan.certified.assign(eval.psi.certified.begin(), eval.psi.certified.end());
    if (opts.mode == Mode::kSequential && plan.makespan >= p.cfg.t_max) {
      result.reason = "no plan within t_max";
      return result;
    }
    FactSet replay = certified;
    replay.merge(eval.psi);
    const ValidationReport report = validate_plan(plan, ground(p, replay));
    if (!report.valid) throw PlannerError("internal error: returned plan does not validate: " + report.message);
    result.plan = std::move(plan);
    return result;
  }
  throw PlannerError("iteration limit of " + std::to_string(opts.iteration_limit) + " exceeded");
}

ValidationReport validate_plan(const Plan& plan, const GroundTask& task) {
  ValidationReport r;
  State state = task.init;
  auto fail = [&](std::size_t i, std::string literal, std::string msg) {
    r.failed_step = i + 1;
    r.failing_literal = std::move(literal);
    r.message = "step " + std::to_string(i + 1) + ": " + msg;
    r.cost = state.total_cost;
    return r;
  };
  // Sequential plans run back to back; their cost is recomputed from the clock.
  std::int64_t clock = 0;
  double sequential_cost = 0;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const PlanStep& s = plan.steps[i];
    std::string schema = s.action;
    std::vector<std::string> binding = s.args;
    if (s.phase != Phase::kInstantaneous) {
      if (!task.temporal) return fail(i, "", "durative step " + s.name() + " on an instantaneous task");
      schema += s.phase == Phase::kStart ? "-start" : "-end";
      binding.push_back(temporal::timing_object(s.t_start));
      if (s.phase == Phase::kEnd) {
        std::optional<std::int64_t> now;
        for (const auto& [name, value] : task.temporal->timing_values) {
          auto id = task.find_atom(GroundAtom{task.temporal->at_time_predicate, {name}});
          if (id && state.atoms.test(*id)) now = value;
        }
        if (!now) return fail(i, "", "no current time in state");
        binding.push_back(temporal::timing_object(*now));
        binding.push_back(temporal::timing_object(std::max(*now, s.t_start + s.duration)));
      }
    }
    const GroundAction* a = task.find_action(schema, binding);
    if (!a) {
      auto it = std::find_if(task.schemas.begin(), task.schemas.end(),
                             [&](const pddl::ActionSchema& x) { return x.name == schema; });
      if (it == task.schemas.end()) return fail(i, "", "unknown action '" + schema + "'");
      if (it->parameters.size() != binding.size()) return fail(i, "", "wrong number of arguments for " + s.name());
      std::map<std::string, std::string> sub;
      for (std::size_t k = 0; k < binding.size(); ++k) sub[it->parameters[k].name] = binding[k];
      for (const auto& lit : it->precondition) {
        GroundAtom g{lit.atom.predicate, {}};
        for (const auto& t : lit.atom.args) g.args.push_back(sub.count(t) ? sub[t] : t);
        bool truth = false;
        if (g.predicate == "=") {
          truth = g.args[0] == g.args[1];
        } else if (auto id = task.find_atom(g)) {
          truth = state.atoms.test(*id);
        }
        if (truth == lit.negated) {
          return fail(i, lit.to_string(), "precondition " + lit.to_string() + " of " + s.name() + " does not hold");
        }
      }
      return fail(i, "", "action " + s.name() + " is not applicable in the task");
    }
    try {
      state = apply(state, *a, task);
    } catch (const InapplicableAction& e) {
      return fail(i, e.literal(), "precondition " + e.literal() + " of " + s.name() + " does not hold");
    }
    if (s.phase == Phase::kInstantaneous && !task.temporal) {
      if (s.t_start != clock) {
        return fail(i, "", s.name() + " starts at " + std::to_string(s.t_start) + " but the previous step ends at " +
                               std::to_string(clock));
      }
      sequential_cost += static_cast<double>(clock + s.duration);
      clock += s.duration;
    }
  }
  r.cost = task.temporal ? state.total_cost : sequential_cost;
  r.goal_satisfied = holds(state, task.goal);
  r.valid = r.goal_satisfied;
  r.message = r.valid ? "plan valid" : "goal not satisfied after " + std::to_string(plan.steps.size()) + " steps";
  return r;
}

}  // namespace labplan::planner
