// Independent oracles shared by the unit tests and the acceptance binary.
// None of them call into the code they check beyond parsing inputs.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "labplan/analyzer.hpp"
#include "labplan/model.hpp"
#include "labplan/pddl.hpp"
#include "labplan/planner.hpp"
#include "labplan/sexpr.hpp"

namespace testsupport {

inline std::string fixture(const std::string& rel) { return std::string(LABPLAN_SOURCE_DIR) + "/" + rel; }

inline labplan::SourceText load(const std::string& rel) { return labplan::SourceText::from_file(fixture(rel)); }

// ---------------------------------------------------------------------------
// Random propositional tasks with a Dijkstra oracle over bitmask states.

struct StripsAction {
  std::uint32_t pre_pos = 0;
  std::uint32_t pre_neg = 0;
  std::uint32_t add = 0;
  std::uint32_t del = 0;
  int cost = 1;
};

struct StripsTask {
  int n_atoms = 0;
  std::vector<StripsAction> actions;
  std::uint32_t init = 0;
  std::uint32_t goal = 0;

  std::uint32_t successor(std::uint32_t s, const StripsAction& a) const { return (s & ~a.del) | a.add; }
  bool applicable(std::uint32_t s, const StripsAction& a) const {
    return (s & a.pre_pos) == a.pre_pos && (s & a.pre_neg) == 0;
  }

  std::optional<double> dijkstra() const {
    std::map<std::uint32_t, double> dist;
    using Item = std::pair<double, std::uint32_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    dist[init] = 0;
    open.push({0, init});
    while (!open.empty()) {
      auto [d, s] = open.top();
      open.pop();
      if (d > dist[s]) continue;
      if ((s & goal) == goal) return d;
      for (const auto& a : actions) {
        if (!applicable(s, a)) continue;
        const std::uint32_t t = successor(s, a);
        const double nd = d + a.cost;
        auto it = dist.find(t);
        if (it == dist.end() || nd < it->second) {
          dist[t] = nd;
          open.push({nd, t});
        }
      }
    }
    return std::nullopt;
  }

  std::string domain_pddl() const {
    std::ostringstream o;
    o << "(define (domain rnd)\n  (:requirements :strips :negative-preconditions :action-costs)\n  (:predicates";
    for (int i = 0; i < n_atoms; ++i) o << " (p" << i << ")";
    o << ")\n  (:functions (total-cost))\n";
    for (std::size_t k = 0; k < actions.size(); ++k) {
      const auto& a = actions[k];
      o << "  (:action a" << k << " :parameters ()\n    :precondition (and";
      for (int i = 0; i < n_atoms; ++i) {
        if (a.pre_pos >> i & 1) o << " (p" << i << ")";
        if (a.pre_neg >> i & 1) o << " (not (p" << i << "))";
      }
      o << ")\n    :effect (and";
      for (int i = 0; i < n_atoms; ++i) {
        if (a.add >> i & 1) o << " (p" << i << ")";
        if (a.del >> i & 1) o << " (not (p" << i << "))";
      }
      o << " (increase (total-cost) " << a.cost << ")))\n";
    }
    o << ")\n";
    return o.str();
  }

  std::string problem_pddl() const {
    std::ostringstream o;
    o << "(define (problem rp) (:domain rnd)\n  (:init";
    for (int i = 0; i < n_atoms; ++i) {
      if (init >> i & 1) o << " (p" << i << ")";
    }
    o << " (= (total-cost) 0))\n  (:goal (and";
    for (int i = 0; i < n_atoms; ++i) {
      if (goal >> i & 1) o << " (p" << i << ")";
    }
    o << "))\n  (:metric minimize (total-cost)))\n";
    return o.str();
  }
};

inline StripsTask random_strips(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  StripsTask t;
  t.n_atoms = pick(3, 10);
  const int n_actions = pick(3, 12);
  auto bits = [&](int count, std::uint32_t avoid) {
    std::uint32_t m = 0;
    for (int i = 0; i < count; ++i) {
      const int b = pick(0, t.n_atoms - 1);
      if (!(avoid >> b & 1)) m |= 1u << b;
    }
    return m;
  };
  for (int k = 0; k < n_actions; ++k) {
    StripsAction a;
    a.pre_pos = bits(pick(0, 2), 0);
    a.pre_neg = pick(0, 3) == 0 ? bits(1, a.pre_pos) : 0;
    a.add = bits(pick(1, 2), 0);
    a.del = bits(pick(0, 2), a.add);
    a.cost = pick(0, 5);
    t.actions.push_back(a);
  }
  t.init = bits(pick(1, 3), 0);
  t.goal = bits(pick(1, 3), 0);
  return t;
}

// ---------------------------------------------------------------------------
// update_time, written straight from its definition.

inline std::optional<std::int64_t> update_time_formula(std::int64_t t_agent, std::int64_t t, std::int64_t T_action,
                                                       std::int64_t t_max) {
  const std::int64_t t_agent_end = t_agent + T_action;
  const std::int64_t t_new = std::max(t, t_agent_end);
  if (!(t_agent <= t && t <= t_agent_end) || t_new >= t_max) return std::nullopt;
  return t_new;
}

// ---------------------------------------------------------------------------
// Brute-force grounding: every type-correct binding, then a naive relaxed
// reachability fixpoint. Returns (action count, atom count).

inline std::pair<std::size_t, std::size_t> brute_force_ground(const labplan::pddl::Domain& dom,
                                                              const labplan::pddl::Problem& prob) {
  using labplan::pddl::ActionSchema;
  std::map<std::string, std::string> objects;
  for (const auto& c : dom.constants) objects[c.name] = c.type;
  for (const auto& o : prob.objects) objects[o.name] = o.type;
  auto extends = [&](std::string t, const std::string& anc) {
    while (!t.empty()) {
      if (t == anc) return true;
      t = dom.types.at(t);
    }
    return false;
  };
  struct Inst {
    const ActionSchema* a;
    std::map<std::string, std::string> sub;
  };
  std::vector<Inst> all;
  for (const auto& a : dom.actions) {
    std::vector<std::map<std::string, std::string>> subs{{}};
    for (const auto& p : a.parameters) {
      std::vector<std::map<std::string, std::string>> next;
      for (const auto& s : subs) {
        for (const auto& [name, type] : objects) {
          if (!extends(type, p.type)) continue;
          auto s2 = s;
          s2[p.name] = name;
          next.push_back(s2);
        }
      }
      subs = next;
    }
    for (auto& s : subs) all.push_back({&a, s});
  }
  auto ground = [](const labplan::pddl::Atom& at, const std::map<std::string, std::string>& sub) {
    std::string out = "(" + at.predicate;
    for (const auto& x : at.args) out += " " + (sub.count(x) ? sub.at(x) : x);
    return out + ")";
  };
  auto arg = [](const std::string& x, const std::map<std::string, std::string>& sub) {
    return sub.count(x) ? sub.at(x) : x;
  };
  std::set<std::string> reach;
  for (const auto& a : prob.init) reach.insert(ground(a, {}));
  std::set<std::size_t> usable;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto& [a, sub] = all[i];
      bool ok = true;
      bool has_cost = true;
      for (const auto& lit : a->precondition) {
        if (lit.atom.predicate == "=") {
          ok &= (arg(lit.atom.args[0], sub) == arg(lit.atom.args[1], sub)) != lit.negated;
        } else if (!lit.negated) {
          ok &= reach.count(ground(lit.atom, sub)) > 0;
        }
      }
      if (a->effect.cost && !a->effect.cost->is_constant()) {
        const auto& f = std::get<labplan::pddl::Atom>(a->effect.cost->value);
        labplan::pddl::Atom g{f.predicate, {}};
        for (const auto& x : f.args) g.args.push_back(arg(x, sub));
        has_cost = prob.init_functions.count(g) > 0;
      }
      if (!ok || !has_cost) continue;
      changed |= usable.insert(i).second;
      for (const auto& lit : a->effect.literals) {
        if (!lit.negated) changed |= reach.insert(ground(lit.atom, sub)).second;
      }
      for (const auto& ce : a->effect.conditional) {
        bool cond = true;
        for (const auto& lit : ce.condition) {
          if (lit.atom.predicate == "=") {
            cond &= (arg(lit.atom.args[0], sub) == arg(lit.atom.args[1], sub)) != lit.negated;
          } else if (!lit.negated) {
            cond &= reach.count(ground(lit.atom, sub)) > 0;
          }
        }
        if (!cond) continue;
        for (const auto& lit : ce.effects) {
          if (!lit.negated) changed |= reach.insert(ground(lit.atom, sub)).second;
        }
      }
    }
  }
  return {usable.size(), reach.size()};
}

// ---------------------------------------------------------------------------
// Pourbaix model oracles. The model is re-derived here rather than calling
// the analyzer: mu = E - k*g(pH) with g piecewise.

inline double g_of(double pH, double pKa1, double pKa2) {
  if (pH < pKa1) return (pKa2 - pKa1) + 2 * (pKa1 - pH);
  if (pH <= pKa2) return pKa2 - pH;
  return 0;
}

inline double mu_oracle(double pH, double pKa1, double pKa2, double k, double E) { return E - k * g_of(pH, pKa1, pKa2); }

inline double loglik_oracle(const labplan::analyzer::Dataset& d, double pKa1, double pKa2, double k, double E,
                            double sigma) {
  double ll = 0;
  for (const auto& p : d) {
    const double r = p.eV - mu_oracle(p.pH, pKa1, pKa2, k, E);
    ll += -std::log(sigma * std::sqrt(2 * M_PI)) - 0.5 * (r / sigma) * (r / sigma);
  }
  return ll;
}

struct GridFit {
  double pKa1 = 0, pKa2 = 0, k = 0, E = 0, sigma = 0, ll = -std::numeric_limits<double>::infinity();
};

/// Dense grid over (pKa1, pKa2); for each pair (k, E) is the closed-form
/// least-squares line in g and sigma its profile optimum.
inline GridFit grid_mle(const labplan::analyzer::Dataset& d, double lo, double hi, double step) {
  GridFit best;
  const double n = static_cast<double>(d.size());
  for (double a = lo; a <= hi + 1e-12; a += step) {
    for (double b = a; b <= hi + 1e-12; b += step) {
      double sg = 0, sy = 0, sgg = 0, sgy = 0;
      for (const auto& p : d) {
        const double g = g_of(p.pH, a, b);
        sg += g;
        sy += p.eV;
        sgg += g * g;
        sgy += g * p.eV;
      }
      const double den = n * sgg - sg * sg;
      if (std::fabs(den) < 1e-12) continue;
      const double slope = (n * sgy - sg * sy) / den;  // eV = E + slope*g, slope = -k
      const double E = (sy - slope * sg) / n;
      double rss = 0;
      for (const auto& p : d) {
        const double r = p.eV - (E + slope * g_of(p.pH, a, b));
        rss += r * r;
      }
      const double sigma = std::max(1e-6, std::sqrt(rss / n));
      const double ll = -n * std::log(sigma * std::sqrt(2 * M_PI)) - rss / (2 * sigma * sigma);
      if (ll > best.ll) best = {a, b, -slope, E, sigma, ll};
    }
  }
  return best;
}

/// Posterior marginals by midpoint Riemann sums over `G` points per axis of
/// the prior box, accumulated into `bins` equal bins per parameter.
inline std::array<std::vector<double>, 5> riemann_marginals(const labplan::analyzer::Dataset& d,
                                                            const labplan::analyzer::PriorRanges& box, int G,
                                                            int bins) {
  using labplan::analyzer::kParamNames;
  std::array<std::vector<double>, 5> axis;
  for (int k = 0; k < 5; ++k) {
    const auto& r = box.get(kParamNames[static_cast<std::size_t>(k)]);
    for (int i = 0; i < G; ++i) axis[static_cast<std::size_t>(k)].push_back(r.low + (r.high - r.low) * (i + 0.5) / G);
  }
  std::vector<double> logp;
  logp.reserve(static_cast<std::size_t>(std::pow(G, 5)));
  double mx = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < G; ++a)
    for (int b = 0; b < G; ++b)
      for (int c = 0; c < G; ++c)
        for (int e = 0; e < G; ++e)
          for (int s = 0; s < G; ++s) {
            const double p1 = axis[0][a], p2 = axis[1][b];
            double l = -std::numeric_limits<double>::infinity();
            if (p1 <= p2) l = loglik_oracle(d, p1, p2, axis[2][c], axis[3][e], std::max(1e-6, axis[4][s]));
            logp.push_back(l);
            mx = std::max(mx, l);
          }
  std::array<std::vector<double>, 5> mass;
  for (auto& m : mass) m.assign(static_cast<std::size_t>(bins), 0.0);
  double total = 0;
  std::size_t q = 0;
  for (int a = 0; a < G; ++a)
    for (int b = 0; b < G; ++b)
      for (int c = 0; c < G; ++c)
        for (int e = 0; e < G; ++e)
          for (int s = 0; s < G; ++s) {
            const double w = std::exp(logp[q++] - mx);
            total += w;
            const int idx[5] = {a, b, c, e, s};
            for (int k = 0; k < 5; ++k) mass[static_cast<std::size_t>(k)][static_cast<std::size_t>(idx[k] * bins / G)] += w;
          }
  for (auto& m : mass)
    for (double& v : m) v /= total;
  return mass;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double tv = 0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::fabs(p[i] - q[i]);
  return tv / 2;
}

/// Deterministic synthetic dataset: pH uniform in [lo, hi], Gaussian noise.
inline labplan::analyzer::Dataset synthetic(std::uint64_t seed, int n, double noise, double lo = 3, double hi = 12,
                                            double pKa1 = 7.68, double pKa2 = 10.92, double k = -30.7,
                                            double E = -450) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  std::normal_distribution<double> N(0, 1);
  labplan::analyzer::Dataset d;
  for (int i = 0; i < n; ++i) {
    const double p = U(rng);
    d.push_back({p, mu_oracle(p, pKa1, pKa2, k, E) + noise * N(rng)});
  }
  return d;
}

// ---------------------------------------------------------------------------
// Exhaustive scheduling oracle over a fixed set of ground actions. Semantics
// follow the start/end encoding: preconditions checked at start, effects at
// end, ends processed in time order, an agent runs one action at a time.

struct SchedAction {
  std::string name;
  std::set<std::string> pre_pos;
  std::set<std::string> pre_neg;
  std::set<std::string> add;
  std::set<std::string> del;
  std::int64_t duration = 0;
  std::vector<std::string> agents;
};

class ScheduleOracle {
 public:
  ScheduleOracle(std::vector<SchedAction> actions, std::set<std::string> init, std::set<std::string> goal)
      : acts_(std::move(actions)), init_(std::move(init)), goal_(std::move(goal)) {}

  /// Minimum makespan reaching the goal, or nullopt.
  std::optional<std::int64_t> optimal_makespan() {
    best_ = std::numeric_limits<std::int64_t>::max();
    Node n;
    n.facts = init_;
    n.used.assign(acts_.size(), false);
    dfs(n);
    if (best_ == std::numeric_limits<std::int64_t>::max()) return std::nullopt;
    return best_;
  }
  std::size_t nodes() const { return nodes_; }

 private:
  struct Running {
    std::size_t action;
    std::int64_t finish;
  };
  struct Node {
    std::set<std::string> facts;
    std::vector<bool> used;
    std::vector<Running> running;
    std::int64_t clock = 0;
  };

  bool goal_holds(const std::set<std::string>& f) const {
    return std::all_of(goal_.begin(), goal_.end(), [&](const std::string& g) { return f.count(g) > 0; });
  }

  bool busy(const Node& n, const std::string& agent) const {
    for (const auto& r : n.running) {
      const auto& ag = acts_[r.action].agents;
      if (std::find(ag.begin(), ag.end(), agent) != ag.end()) return true;
    }
    return false;
  }

  std::int64_t lower_bound(const Node& n) const {
    std::int64_t lb = n.clock;
    for (const auto& r : n.running) lb = std::max(lb, r.finish);
    return lb;
  }

  std::string key(const Node& n) const {
    std::string k;
    for (const auto& f : n.facts) k += f + ";";
    k += "|";
    for (bool u : n.used) k += u ? '1' : '0';
    k += "|";
    std::vector<std::pair<std::size_t, std::int64_t>> r;
    for (const auto& x : n.running) r.push_back({x.action, x.finish - n.clock});
    std::sort(r.begin(), r.end());
    for (const auto& [a, f] : r) k += std::to_string(a) + "@" + std::to_string(f) + ",";
    return k;
  }

  void dfs(const Node& n) {
    ++nodes_;
    if (lower_bound(n) >= best_) return;
    if (n.running.empty() && goal_holds(n.facts)) {
      best_ = std::min(best_, n.clock);
      return;
    }
    // Memo on (facts, used, running offsets) keeps the smallest clock seen.
    const std::string k = key(n);
    auto it = memo_.find(k);
    if (it != memo_.end() && it->second <= n.clock) return;
    memo_[k] = n.clock;

    // Option 1: start an unused applicable action whose agents are free.
    for (std::size_t i = 0; i < acts_.size(); ++i) {
      if (n.used[i]) continue;
      const auto& a = acts_[i];
      const bool ok = preconditions_hold(a, n.facts) && std::none_of(a.agents.begin(), a.agents.end(), [&](const std::string& g) { return busy(n, g); });
      if (!ok) continue;
      Node m = n;
      m.used[i] = true;
      m.running.push_back({i, n.clock + a.duration});
      dfs(m);
    }
    // Option 2: finish one of the earliest running actions. Ends re-check the
    // preconditions, as the end half of the encoding does.
    if (!n.running.empty()) {
      std::int64_t first = n.running[0].finish;
      for (const auto& r : n.running) first = std::min(first, r.finish);
      for (std::size_t e = 0; e < n.running.size(); ++e) {
        if (n.running[e].finish != first) continue;
        const auto& a = acts_[n.running[e].action];
        if (!preconditions_hold(a, n.facts)) continue;
        Node m = n;
        for (const auto& d : a.del) m.facts.erase(d);
        for (const auto& d : a.add) m.facts.insert(d);
        m.clock = std::max(n.clock, first);
        m.running.erase(m.running.begin() + static_cast<std::ptrdiff_t>(e));
        dfs(m);
      }
    }
  }

  bool preconditions_hold(const SchedAction& a, const std::set<std::string>& f) const {
    return std::all_of(a.pre_pos.begin(), a.pre_pos.end(), [&](const std::string& p) { return f.count(p) > 0; }) &&
           std::none_of(a.pre_neg.begin(), a.pre_neg.end(), [&](const std::string& p) { return f.count(p) > 0; });
  }

  std::vector<SchedAction> acts_;
  std::set<std::string> init_;
  std::set<std::string> goal_;
  std::int64_t best_ = 0;
  std::size_t nodes_ = 0;
  std::map<std::string, std::int64_t> memo_;
};

/// Builds oracle actions for the steps of a sequential plan from the
/// instantaneous ground task; durations and agents come from the plan steps.
inline ScheduleOracle oracle_for_plan(const labplan::planner::Plan& seq, const labplan::GroundTask& task) {
  std::vector<SchedAction> acts;
  for (const auto& s : seq.steps) {
    const labplan::GroundAction* g = task.find_action(s.action, s.args);
    if (!g) throw std::runtime_error("oracle: action not grounded: " + s.name());
    SchedAction a;
    a.name = s.name();
    for (const auto& l : g->precondition) (l.negated ? a.pre_neg : a.pre_pos).insert(task.atom_text(l.atom));
    for (auto id : g->add) a.add.insert(task.atom_text(id));
    for (auto id : g->del) a.del.insert(task.atom_text(id));
    for (const auto& x : a.add) a.del.erase(x);
    a.duration = s.duration;
    a.agents = s.agents;
    acts.push_back(a);
  }
  std::set<std::string> init;
  for (const auto& a : task.state_atoms(task.init)) init.insert(a.to_string());
  std::set<std::string> goal;
  for (const auto& l : task.goal.literals) goal.insert(task.atom_text(l.atom));
  return ScheduleOracle(acts, init, goal);
}

}  // namespace testsupport
