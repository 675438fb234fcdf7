#include "labplan/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace labplan::temporal {

namespace {

using pddl::Atom;
using pddl::Literal;

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
  s = trim(std::move(s));
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

// Picks `base`, or `base` with a "tp_" prefix if the domain already uses it.
std::string fresh_name(const std::string& base, const std::set<std::string>& taken) {
  std::string name = base;
  while (taken.count(name)) name = "tp_" + name;
  return name;
}

std::string fresh_var(const std::string& base, const std::vector<pddl::TypedName>& params) {
  std::string name = base;
  auto used = [&](const std::string& n) {
    return std::any_of(params.begin(), params.end(), [&](const pddl::TypedName& p) { return p.name == n; });
  };
  while (used(name)) name += "_";
  return name;
}

}  // namespace

std::int64_t quantize_duration(double seconds, std::int64_t unit_T) {
  if (!(seconds > 0)) throw std::invalid_argument("duration must be positive");
  if (unit_T <= 0) throw std::invalid_argument("unit_T must be positive");
  return static_cast<std::int64_t>(std::ceil(seconds / static_cast<double>(unit_T) - 1e-12));
}

void DurativeConfig::validate() const {
  if (unit_T <= 0) throw TemporalError("unit_T must be positive");
  if (t_max < 0 || t_max % unit_T != 0) {
    throw TemporalError("t_max must be a non-negative multiple of unit_T");
  }
  for (const auto& [a, d] : durations) {
    if (!(d > 0)) throw TemporalError("duration of '" + a + "' must be positive");
  }
}

std::int64_t DurativeConfig::duration_of(const std::string& action) const {
  auto it = durations.find(action);
  if (it == durations.end()) throw TemporalError("action '" + action + "' missing from durations map");
  return quantize_duration(it->second, unit_T) * unit_T;
}

std::vector<std::int64_t> DurativeConfig::grid() const {
  std::vector<std::int64_t> g;
  for (std::int64_t t = 0; t <= t_max; t += unit_T) g.push_back(t);
  return g;
}

DurativeConfig parse_config(const SourceText& src) {
  DurativeConfig cfg;
  std::istringstream in(src.content);
  std::string line;
  std::string section;
  int lineno = 0;
  auto fail = [&](const std::string& msg) { throw ParseError(src.origin, {lineno, 1}, msg); };
  auto number = [&](const std::string& v) {
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(v, &used);
    } catch (const std::exception&) {
      fail("expected a number, got '" + v + "'");
    }
    if (used != v.size()) fail("expected a number, got '" + v + "'");
    return x;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      section = to_lower(trim(line.substr(1, line.size() - 2)));
      if (section != "durations" && section != "agents") fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = to_lower(unquote(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      if (key == "unit_t") {
        cfg.unit_T = static_cast<std::int64_t>(number(value));
      } else if (key == "t_max") {
        cfg.t_max = static_cast<std::int64_t>(number(value));
      } else {
        fail("unknown key '" + key + "'");
      }
    } else if (section == "durations") {
      cfg.durations[key] = number(value);
    } else {
      std::vector<std::string> agents;
      std::string body = value;
      if (!body.empty() && body.front() == '[') {
        if (body.back() != ']') fail("unterminated agent list");
        body = body.substr(1, body.size() - 2);
      }
      std::istringstream items(body);
      std::string item;
      while (std::getline(items, item, ',')) {
        item = to_lower(unquote(item));
        if (!item.empty()) agents.push_back(item);
      }
      if (agents.empty()) fail("empty agent list for '" + key + "'");
      cfg.agents[key] = std::move(agents);
    }
  }
  try {
    cfg.validate();
  } catch (const TemporalError& e) {
    throw ParseError(src.origin, {lineno, 1}, e.what());
  }
  return cfg;
}

DurativeConfig complete_config(const pddl::Domain& dom, DurativeConfig cfg) {
  for (const auto& a : dom.actions) {
    if (!cfg.durations.count(a.name)) cfg.durations[a.name] = static_cast<double>(cfg.unit_T);
    if (!cfg.agents.count(a.name) && !a.parameters.empty()) cfg.agents[a.name] = {a.parameters.front().name};
  }
  return cfg;
}

std::string timing_object(std::int64_t seconds) { return "t" + std::to_string(seconds); }
std::string update_time_predicate(const std::string& a) { return "update_time_" + a; }
std::string cost_start_function(const std::string& a) { return "cost_start_" + a; }
std::string cost_end_function(const std::string& a) { return "cost_end_" + a; }

const DurativeAction* DurativeDomain::find(const std::string& action) const {
  for (const auto& a : actions) {
    if (a.name == action) return &a;
  }
  return nullptr;
}

const DurativeAction* DurativeDomain::find_by_schema(const std::string& schema, bool* is_start) const {
  for (const auto& a : actions) {
    if (a.start_name == schema || a.end_name == schema) {
      if (is_start) *is_start = a.start_name == schema;
      return &a;
    }
  }
  return nullptr;
}

TemporalLayout DurativeDomain::layout() const {
  TemporalLayout l;
  l.at_time_predicate = at_time_predicate;
  for (auto t : config.grid()) l.timing_values[timing_object(t)] = t;
  return l;
}

DurativeDomain make_durative(const pddl::Domain& dom, const DurativeConfig& cfg) {
  cfg.validate();
  for (const auto& [name, _] : cfg.durations) {
    if (!dom.find_action(name)) throw TemporalError("configured action '" + name + "' is not in the domain");
  }
  for (const auto& [name, _] : cfg.agents) {
    if (!dom.find_action(name)) throw TemporalError("configured action '" + name + "' is not in the domain");
  }

  DurativeDomain dd;
  dd.base = dom;
  dd.config = cfg;
  pddl::Domain& d = dd.domain;
  d.name = dom.name;
  d.requirements = dom.requirements;
  for (const char* r : {":typing", ":negative-preconditions", ":equality", ":conditional-effects", ":action-costs"}) {
    d.requirements.insert(r);
  }
  d.types = dom.types;
  d.constants = dom.constants;
  d.predicates = dom.predicates;
  d.functions = dom.functions;

  std::set<std::string> taken_types;
  for (const auto& [t, _] : dom.types) taken_types.insert(t);
  std::set<std::string> taken_preds;
  for (const auto& p : dom.predicates) taken_preds.insert(p.name);
  for (const auto& f : dom.functions) taken_preds.insert(f.name);
  std::set<std::string> taken_actions;
  for (const auto& a : dom.actions) taken_actions.insert(a.name);

  dd.timing_type = fresh_name("timing", taken_types);
  dd.free_predicate = fresh_name("is_free", taken_preds);
  dd.at_time_predicate = fresh_name("at_time", taken_preds);
  dd.agent_at_time_predicate = fresh_name("agent_at_time", taken_preds);
  const std::string& timing = dd.timing_type;
  d.types[timing] = pddl::kObjectType;
  d.predicates.push_back({dd.at_time_predicate, {{"?t", timing}}});
  d.predicates.push_back({dd.free_predicate, {{"?agent", pddl::kObjectType}}});
  d.predicates.push_back({dd.agent_at_time_predicate, {{"?agent", pddl::kObjectType}, {"?t", timing}}});
  if (!d.find_function(pddl::kTotalCost)) d.functions.push_back({pddl::kTotalCost, {}});

  for (const auto& a : dom.actions) {
    DurativeAction da;
    da.name = a.name;
    da.duration = cfg.duration_of(a.name);
    da.parameter_count = a.parameters.size();
    da.start_name = a.name + "-start";
    da.end_name = a.name + "-end";
    for (const auto* n : {&da.start_name, &da.end_name}) {
      if (taken_actions.count(*n)) throw TemporalError("domain already declares reserved action '" + *n + "'");
    }
    auto ag = cfg.agents.find(a.name);
    if (ag == cfg.agents.end() || ag->second.empty()) {
      throw TemporalError("agent_param unresolvable: no agent configured for action '" + a.name + "'");
    }
    for (const auto& term : ag->second) {
      if (pddl::is_variable(term)) {
        const bool found = std::any_of(a.parameters.begin(), a.parameters.end(),
                                       [&](const pddl::TypedName& p) { return p.name == term; });
        if (!found) {
          throw TemporalError("agent_param unresolvable: '" + term + "' is not a parameter of '" + a.name + "'");
        }
      }
      da.agents.push_back(term);
    }

    // Stream and cost names must stay canonical so eval_eager can produce them.
    const std::string upd = update_time_predicate(a.name);
    const std::string c_start = cost_start_function(a.name);
    const std::string c_end = cost_end_function(a.name);
    // Pairs an end with the start of the same instance; agent bookkeeping alone
    // would let an end bind different arguments than its start.
    const std::string running = "running_" + a.name;
    for (const auto* n : {&upd, &c_start, &c_end, &running}) {
      if (taken_preds.count(*n)) throw TemporalError("domain already declares reserved name '" + *n + "'");
    }
    d.predicates.push_back({upd, {{"?agent_t", timing}, {"?t", timing}, {"?new_t", timing}}});
    d.functions.push_back({c_start, {{"?t", timing}}});
    d.functions.push_back({c_end, {}});
    d.predicates.push_back({running, a.parameters});
    std::vector<std::string> param_names;
    for (const auto& prm : a.parameters) param_names.push_back(prm.name);

    const std::string t = fresh_var("?t", a.parameters);
    const std::string agent_t = fresh_var("?agent_t", a.parameters);
    const std::string new_t = fresh_var("?new_t", a.parameters);

    pddl::ActionSchema start;
    start.name = da.start_name;
    start.parameters = a.parameters;
    start.parameters.push_back({t, timing});
    start.precondition = a.precondition;
    start.precondition.push_back({Atom{dd.at_time_predicate, {t}}, false});
    for (const auto& g : da.agents) start.precondition.push_back({Atom{dd.free_predicate, {g}}, false});
    for (const auto& g : da.agents) {
      start.effect.literals.push_back({Atom{dd.agent_at_time_predicate, {g, t}}, false});
      start.effect.literals.push_back({Atom{dd.free_predicate, {g}}, true});
    }
    start.effect.literals.push_back({Atom{running, param_names}, false});
    start.effect.cost = pddl::CostTerm{Atom{c_start, {t}}};

    pddl::ActionSchema end;
    end.name = da.end_name;
    end.parameters = a.parameters;
    end.parameters.push_back({agent_t, timing});
    end.parameters.push_back({t, timing});
    end.parameters.push_back({new_t, timing});
    end.precondition = a.precondition;
    end.precondition.push_back({Atom{dd.at_time_predicate, {t}}, false});
    for (const auto& g : da.agents) {
      end.precondition.push_back({Atom{dd.free_predicate, {g}}, true});
      end.precondition.push_back({Atom{dd.agent_at_time_predicate, {g, agent_t}}, false});
    }
    end.precondition.push_back({Atom{upd, {agent_t, t, new_t}}, false});
    end.precondition.push_back({Atom{running, param_names}, false});
    end.effect.literals = a.effect.literals;
    end.effect.literals.push_back({Atom{running, param_names}, true});
    end.effect.conditional = a.effect.conditional;
    for (const auto& g : da.agents) {
      end.effect.literals.push_back({Atom{dd.agent_at_time_predicate, {g, agent_t}}, true});
      end.effect.literals.push_back({Atom{dd.free_predicate, {g}}, false});
    }
    pddl::ConditionalEffect swap;
    swap.condition.push_back({Atom{"=", {t, new_t}}, true});
    swap.effects.push_back({Atom{dd.at_time_predicate, {t}}, true});
    swap.effects.push_back({Atom{dd.at_time_predicate, {new_t}}, false});
    end.effect.conditional.push_back(std::move(swap));
    end.effect.cost = pddl::CostTerm{Atom{c_end, {}}};

    d.actions.push_back(std::move(start));
    d.actions.push_back(std::move(end));

    pddl::StreamSpec s;
    s.name = upd;
    s.kind = pddl::StreamKind::kEager;
    s.inputs = {{"?agent_t", timing}, {"?t", timing}};
    s.outputs = {{"?new_t", timing}};
    s.certified_facts = {Atom{upd, {"?agent_t", "?t", "?new_t"}}};
    s.generator = "update_time";
    s.args = {{a.name}};
    dd.eager_streams.streams.push_back(std::move(s));
    dd.actions.push_back(std::move(da));
  }
  pddl::validate_domain(d);
  return dd;
}

pddl::Problem make_durative_problem(const DurativeDomain& dd, const pddl::Problem& prob) {
  pddl::Problem p = prob;
  p.domain_name = dd.domain.name;
  std::map<std::string, std::string> types;
  for (const auto& c : dd.domain.constants) types[c.name] = c.type;
  for (const auto& o : prob.objects) types[o.name] = o.type;
  for (auto t : dd.config.grid()) {
    const std::string name = timing_object(t);
    if (types.count(name)) throw TemporalError("object name '" + name + "' clashes with a timing object");
    p.objects.push_back({name, dd.timing_type});
  }
  p.init.push_back({dd.at_time_predicate, {timing_object(0)}});

  std::set<std::string> agents;
  for (const auto& da : dd.actions) {
    const pddl::ActionSchema* schema = dd.base.find_action(da.name);
    for (const auto& term : da.agents) {
      if (!pddl::is_variable(term)) {
        if (!types.count(term)) throw TemporalError("agent_param unresolvable: unknown agent object '" + term + "'");
        agents.insert(term);
        continue;
      }
      std::string type;
      for (const auto& prm : schema->parameters) {
        if (prm.name == term) type = prm.type;
      }
      for (const auto& [obj, ot] : types) {
        if (dd.domain.is_subtype(ot, type)) agents.insert(obj);
      }
    }
  }
  for (const auto& ag : agents) p.init.push_back({dd.free_predicate, {ag}});
  p.init_functions[pddl::Atom{pddl::kTotalCost, {}}] = 0;
  p.minimize_total_cost = true;
  return p;
}

}  // namespace labplan::temporal
