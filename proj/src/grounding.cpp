#include <algorithm>
#include <unordered_set>

#include "labplan/model.hpp"

namespace labplan {

namespace {

using pddl::ActionSchema;
using pddl::Domain;
using pddl::is_variable;
using pddl::Literal;

struct Candidate {
  std::size_t schema = 0;
  std::vector<std::string> binding;
  double cost = 0;
};

// Instantiates schemas whose positive preconditions are reachable under the
// delete relaxation. Negative literals are ignored for reachability.
class Grounder {
 public:
  Grounder(const Domain& dom, const pddl::Problem& prob, const FactSet& extra)
      : dom_(dom), prob_(prob), extra_(extra) {}

  GroundTask run() {
    build_universe();
    check_goal();
    for (const auto& a : prob_.init) reach(GroundAtom{a.predicate, a.args});
    for (const auto& a : extra_.certified) reach(a);
    functions_ = extra_.function_values;
    for (const auto& [f, v] : prob_.init_functions) functions_[GroundAtom{f.predicate, f.args}] = v;
    uses_costs_ = std::any_of(dom_.actions.begin(), dom_.actions.end(),
                              [](const ActionSchema& a) { return a.effect.cost.has_value(); });

    bool changed = true;
    while (changed) {
      changed = false;
      std::vector<std::size_t> fresh;
      for (std::size_t s = 0; s < dom_.actions.size(); ++s) enumerate(s, fresh);
      for (std::size_t idx : fresh) {
        const Candidate& c = found_[idx];
        const ActionSchema& a = dom_.actions[c.schema];
        for (const auto& lit : a.effect.literals) {
          if (!lit.negated) changed |= reach(instantiate(lit.atom, a, c.binding));
        }
      }
      changed |= !fresh.empty();
      // Conditional adds become reachable once their condition is.
      for (const auto& c : found_) {
        const ActionSchema& a = dom_.actions[c.schema];
        for (const auto& ce : a.effect.conditional) {
          if (!relaxed_holds(ce.condition, a, c.binding)) continue;
          for (const auto& lit : ce.effects) {
            if (!lit.negated) changed |= reach(instantiate(lit.atom, a, c.binding));
          }
        }
      }
    }
    return build();
  }

 private:
  void build_universe() {
    auto add = [&](const std::string& name, const std::string& type) {
      if (!dom_.types.count(type)) throw GroundingError("object '" + name + "' has unknown type '" + type + "'");
      objects_[name] = type;
      order_.push_back(name);
    };
    for (const auto& c : dom_.constants) add(c.name, c.type);
    for (const auto& o : prob_.objects) add(o.name, o.type);
    for (const auto& [name, type] : extra_.objects) {
      if (!objects_.count(name)) add(name, type);
    }
    for (const auto& [t, _] : dom_.types) {
      auto& list = by_type_[t];
      for (const auto& o : order_) {
        if (dom_.is_subtype(objects_[o], t)) list.push_back(o);
      }
    }
  }

  void check_goal() const {
    for (const auto& lit : prob_.goal) {
      for (const auto& arg : lit.atom.args) {
        if (!objects_.count(arg)) throw GroundingError("goal mentions unknown object '" + arg + "'");
      }
    }
  }

  bool reach(const GroundAtom& a) {
    auto [it, inserted] = reached_.insert(a);
    if (inserted) by_pred_[a.predicate].push_back(&*it);
    return inserted;
  }

  static GroundAtom instantiate(const pddl::Atom& atom, const ActionSchema& a,
                                const std::vector<std::string>& binding) {
    GroundAtom g{atom.predicate, {}};
    g.args.reserve(atom.args.size());
    for (const auto& t : atom.args) {
      if (is_variable(t)) {
        for (std::size_t i = 0; i < a.parameters.size(); ++i) {
          if (a.parameters[i].name == t) {
            g.args.push_back(binding[i]);
            break;
          }
        }
      } else {
        g.args.push_back(t);
      }
    }
    return g;
  }

  bool relaxed_holds(const pddl::Condition& c, const ActionSchema& a, const std::vector<std::string>& binding) const {
    for (const auto& lit : c) {
      GroundAtom g = instantiate(lit.atom, a, binding);
      if (g.predicate == "=") {
        if ((g.args[0] == g.args[1]) == lit.negated) return false;
      } else if (!lit.negated && !reached_.count(g)) {
        return false;
      }
    }
    return true;
  }

  int param_index(const ActionSchema& a, const std::string& var) const {
    for (std::size_t i = 0; i < a.parameters.size(); ++i) {
      if (a.parameters[i].name == var) return static_cast<int>(i);
    }
    return -1;
  }

  void enumerate(std::size_t s, std::vector<std::size_t>& fresh) {
    const ActionSchema& a = dom_.actions[s];
    std::vector<const Literal*> positive;
    for (const auto& lit : a.precondition) {
      if (!lit.negated && lit.atom.predicate != "=") positive.push_back(&lit);
    }
    std::vector<std::string> binding(a.parameters.size());
    std::vector<bool> done(positive.size(), false);
    join(s, positive, done, positive.size(), binding, fresh);
  }

  void join(std::size_t s, const std::vector<const Literal*>& positive, std::vector<bool>& done,
            std::size_t remaining, std::vector<std::string>& binding, std::vector<std::size_t>& fresh) {
    const ActionSchema& a = dom_.actions[s];
    if (remaining == 0) {
      fill_free(s, 0, binding, fresh);
      return;
    }
    // Most-bound literal first keeps the join narrow.
    std::size_t pick = 0;
    int best = -1;
    for (std::size_t i = 0; i < positive.size(); ++i) {
      if (done[i]) continue;
      int bound = 0;
      for (const auto& t : positive[i]->atom.args) {
        if (!is_variable(t) || !binding[static_cast<std::size_t>(param_index(a, t))].empty()) ++bound;
      }
      if (bound > best) {
        best = bound;
        pick = i;
      }
    }
    const auto& atom = positive[pick]->atom;
    done[pick] = true;
    auto it = by_pred_.find(atom.predicate);
    if (it != by_pred_.end()) {
      const auto& facts = it->second;
      const std::size_t n = facts.size();
      for (std::size_t f = 0; f < n; ++f) {
        const GroundAtom& fact = *facts[f];
        std::vector<std::size_t> newly;
        bool ok = fact.args.size() == atom.args.size();
        for (std::size_t k = 0; ok && k < atom.args.size(); ++k) {
          const auto& t = atom.args[k];
          if (!is_variable(t)) {
            ok = t == fact.args[k];
            continue;
          }
          const auto pi = static_cast<std::size_t>(param_index(a, t));
          if (!binding[pi].empty()) {
            ok = binding[pi] == fact.args[k];
            continue;
          }
          auto ot = objects_.find(fact.args[k]);
          ok = ot != objects_.end() && dom_.is_subtype(ot->second, a.parameters[pi].type);
          if (ok) {
            binding[pi] = fact.args[k];
            newly.push_back(pi);
          }
        }
        if (ok) join(s, positive, done, remaining - 1, binding, fresh);
        for (auto pi : newly) binding[pi].clear();
      }
    }
    done[pick] = false;
  }

  void fill_free(std::size_t s, std::size_t from, std::vector<std::string>& binding,
                 std::vector<std::size_t>& fresh) {
    const ActionSchema& a = dom_.actions[s];
    for (std::size_t i = from; i < binding.size(); ++i) {
      if (!binding[i].empty()) continue;
      for (const auto& o : by_type_.at(a.parameters[i].type)) {
        binding[i] = o;
        fill_free(s, i + 1, binding, fresh);
      }
      binding[i].clear();
      return;
    }
    finish(s, binding, fresh);
  }

  void finish(std::size_t s, const std::vector<std::string>& binding, std::vector<std::size_t>& fresh) {
    const ActionSchema& a = dom_.actions[s];
    for (const auto& lit : a.precondition) {
      if (lit.atom.predicate != "=") continue;
      const GroundAtom g = instantiate(lit.atom, a, binding);
      if ((g.args[0] == g.args[1]) == lit.negated) return;
    }
    double cost = uses_costs_ ? 0.0 : 1.0;
    if (a.effect.cost) {
      if (a.effect.cost->is_constant()) {
        cost = std::get<double>(a.effect.cost->value);
      } else {
        const auto& term = std::get<pddl::Atom>(a.effect.cost->value);
        auto it = functions_.find(instantiate(term, a, binding));
        if (it == functions_.end()) return;  // undefined cost: not applicable
        cost = it->second;
      }
    }
    std::string key = std::to_string(s);
    for (const auto& b : binding) {
      key += '\x1f';
      key += b;
    }
    if (!seen_.insert(std::move(key)).second) return;
    found_.push_back({s, binding, cost});
    fresh.push_back(found_.size() - 1);
  }

  GroundTask build() {
    GroundTask task;
    task.objects = objects_;
    task.schemas = dom_.actions;
    task.atoms.assign(reached_.begin(), reached_.end());
    std::sort(task.atoms.begin(), task.atoms.end());
    std::sort(found_.begin(), found_.end(), [](const Candidate& x, const Candidate& y) {
      return std::tie(x.schema, x.binding) < std::tie(y.schema, y.binding);
    });
    task.reindex();

    auto id_of = [&](const GroundAtom& g) { return task.find_atom(g); };
    for (const auto& c : found_) {
      const ActionSchema& a = dom_.actions[c.schema];
      GroundAction ga;
      ga.schema = a.name;
      ga.binding = c.binding;
      ga.schema_index = static_cast<int>(c.schema);
      ga.cost = c.cost;
      for (std::size_t i = 0; i < a.precondition.size(); ++i) {
        const auto& lit = a.precondition[i];
        if (lit.atom.predicate == "=") continue;
        auto id = id_of(instantiate(lit.atom, a, c.binding));
        if (!id) continue;  // negative literal over an unreachable atom
        ga.precondition.push_back({*id, lit.negated, static_cast<int>(i)});
      }
      for (const auto& lit : a.effect.literals) {
        auto id = id_of(instantiate(lit.atom, a, c.binding));
        if (!id) continue;
        (lit.negated ? ga.del : ga.add).push_back(*id);
      }
      for (const auto& ce : a.effect.conditional) {
        GroundConditionalEffect gce;
        bool possible = true;
        for (const auto& lit : ce.condition) {
          GroundAtom g = instantiate(lit.atom, a, c.binding);
          if (g.predicate == "=") {
            possible &= (g.args[0] == g.args[1]) != lit.negated;
            continue;
          }
          auto id = id_of(g);
          if (!id) {
            possible &= lit.negated;
            continue;
          }
          gce.condition.push_back({*id, lit.negated, -1});
        }
        if (!possible) continue;
        for (const auto& lit : ce.effects) {
          auto id = id_of(instantiate(lit.atom, a, c.binding));
          if (!id) continue;
          (lit.negated ? gce.del : gce.add).push_back(*id);
        }
        ga.conditional.push_back(std::move(gce));
      }
      task.actions.push_back(std::move(ga));
    }
    task.reindex();

    std::vector<GroundAtom> init;
    for (const auto& a : prob_.init) init.push_back({a.predicate, a.args});
    init.insert(init.end(), extra_.certified.begin(), extra_.certified.end());
    double cost0 = 0;
    if (auto it = prob_.init_functions.find(pddl::Atom{pddl::kTotalCost, {}}); it != prob_.init_functions.end()) {
      cost0 = it->second;
    }
    task.init = task.make_state(init, cost0);
    task.goal = task.condition(prob_.goal);
    check_goal_achievable(task);
    return task;
  }

  // A goal predicate whose every producer needs objects of an empty type can
  // never be achieved; report it instead of searching.
  void check_goal_achievable(const GroundTask& task) const {
    if (holds(task.init, task.goal)) return;
    for (const auto& lit : prob_.goal) {
      if (lit.negated || lit.atom.predicate == "=") continue;
      if (task.find_atom(GroundAtom{lit.atom.predicate, lit.atom.args})) continue;
      std::string empty_type;
      bool has_producer = false;
      for (const auto& a : dom_.actions) {
        bool adds = false;
        for (const auto& e : a.effect.literals) adds |= !e.negated && e.atom.predicate == lit.atom.predicate;
        for (const auto& ce : a.effect.conditional) {
          for (const auto& e : ce.effects) adds |= !e.negated && e.atom.predicate == lit.atom.predicate;
        }
        if (!adds) continue;
        has_producer = true;
        bool blocked = false;
        for (const auto& p : a.parameters) {
          if (by_type_.at(p.type).empty()) {
            blocked = true;
            if (empty_type.empty()) empty_type = p.type;
          }
        }
        if (!blocked) return;
      }
      if (has_producer) {
        throw GroundingError("universe empty for type '" + empty_type + "' required by goal " +
                             lit.atom.to_string());
      }
    }
  }

  const Domain& dom_;
  const pddl::Problem& prob_;
  const FactSet& extra_;
  std::map<std::string, std::string> objects_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<std::string>> by_type_;
  std::map<GroundAtom, double> functions_;
  bool uses_costs_ = false;
  std::unordered_set<GroundAtom, GroundAtomHash> reached_;
  std::unordered_map<std::string, std::vector<const GroundAtom*>> by_pred_;
  std::unordered_set<std::string> seen_;
  std::vector<Candidate> found_;
};

}  // namespace

GroundTask ground_task(const pddl::Domain& dom, const pddl::Problem& prob, const FactSet& extra) {
  return Grounder(dom, prob, extra).run();
}

}  // namespace labplan
