#include "labplan/search.hpp"

#include <algorithm>
#include <queue>
#include <string>
#include <unordered_map>

namespace labplan::search {

void SearchConfig::validate() const {
  if (!(weight >= 1.0)) throw std::invalid_argument("search weight must be >= 1");
  if (node_limit == 0) throw std::invalid_argument("node limit must be positive");
}

SearchLimitExceeded::SearchLimitExceeded(std::size_t limit)
    : std::runtime_error("search node limit of " + std::to_string(limit) + " exceeded"), limit_(limit) {}

RelaxedHeuristic::RelaxedHeuristic(const GroundTask& task, HeuristicKind kind) : task_(task), kind_(kind) {
  auto add_op = [&](std::vector<AtomId> pre, std::vector<AtomId> add, double cost) {
    std::sort(pre.begin(), pre.end());
    pre.erase(std::unique(pre.begin(), pre.end()), pre.end());
    ops_.push_back({std::move(pre), std::move(add), cost});
  };
  bool any = false;
  for (const auto& a : task.actions) {
    min_cost_ = any ? std::min(min_cost_, a.cost) : a.cost;
    any = true;
    std::vector<AtomId> pre;
    for (const auto& l : a.precondition) {
      if (!l.negated) pre.push_back(l.atom);
    }
    add_op(pre, a.add, a.cost);
    for (const auto& ce : a.conditional) {
      if (ce.add.empty()) continue;
      std::vector<AtomId> cpre = pre;
      for (const auto& l : ce.condition) {
        if (!l.negated) cpre.push_back(l.atom);
      }
      add_op(std::move(cpre), ce.add, a.cost);
    }
  }
  consumers_.assign(task.atoms.size(), {});
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    if (ops_[i].pre.empty()) no_pre_.push_back(i);
    for (AtomId p : ops_[i].pre) consumers_[p].push_back(i);
  }
  goal_unsatisfiable_ = task.goal.unsatisfiable;
  for (const auto& l : task.goal.literals) {
    if (!l.negated) goal_.push_back(l.atom);
  }
}

double RelaxedHeuristic::operator()(const State& s) const {
  if (kind_ == HeuristicKind::kBlind) return holds(s, task_.goal) ? 0.0 : (min_cost_ > 0 ? min_cost_ : 0.0);
  if (goal_unsatisfiable_) return kInfinity;
  if (holds(s, task_.goal)) return 0.0;

  const std::size_t n = task_.atoms.size();
  std::vector<double> cost(n, kInfinity);
  std::vector<std::size_t> unmet(ops_.size());
  std::vector<double> acc(ops_.size(), 0.0);
  for (std::size_t i = 0; i < ops_.size(); ++i) unmet[i] = ops_[i].pre.size();

  using Entry = std::pair<double, AtomId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  auto relax = [&](AtomId p, double c) {
    if (c < cost[p]) {
      cost[p] = c;
      queue.push({c, p});
    }
  };
  auto fire = [&](std::size_t i) {
    const double c = ops_[i].cost + acc[i];
    for (AtomId q : ops_[i].add) relax(q, c);
  };
  for (AtomId p : s.atoms.ids()) relax(p, 0.0);
  for (std::size_t i : no_pre_) fire(i);

  std::size_t goals_left = goal_.size();
  std::vector<char> is_goal(n, 0);
  for (AtomId g : goal_) is_goal[g] = 1;
  std::vector<char> done(n, 0);
  while (!queue.empty() && goals_left > 0) {
    auto [c, p] = queue.top();
    queue.pop();
    if (done[p] || c > cost[p]) continue;
    done[p] = 1;
    if (is_goal[p]) {
      --goals_left;
      is_goal[p] = 0;
    }
    for (std::size_t i : consumers_[p]) {
      acc[i] = kind_ == HeuristicKind::kAdd ? acc[i] + c : std::max(acc[i], c);
      if (--unmet[i] == 0) fire(i);
    }
  }

  double h = 0;
  for (AtomId g : goal_) {
    if (cost[g] == kInfinity) return kInfinity;
    h = kind_ == HeuristicKind::kAdd ? h + cost[g] : std::max(h, cost[g]);
  }
  // The goal is false here, so keep h strictly positive.
  if (h <= 0) h = min_cost_ > 0 ? min_cost_ : 1e-9;
  return h;
}

double h_add(const GroundTask& task, const State& s) { return RelaxedHeuristic(task, HeuristicKind::kAdd)(s); }
double h_max(const GroundTask& task, const State& s) { return RelaxedHeuristic(task, HeuristicKind::kMax)(s); }

namespace {

struct AtomSetHash {
  std::size_t operator()(const AtomSet& s) const noexcept { return s.hash(); }
};

struct Node {
  State state;
  double g = 0;
  double h = 0;
  std::size_t parent = SIZE_MAX;
  std::size_t action = SIZE_MAX;
  bool closed = false;
};

struct OpenEntry {
  double f;
  double h;
  std::size_t seq;
  std::size_t node;
  double g;

  bool operator>(const OpenEntry& o) const {
    if (f != o.f) return f > o.f;
    if (h != o.h) return h > o.h;
    return seq > o.seq;
  }
};

// Each action hangs off its rarest positive precondition, so expanding a
// state only inspects actions whose trigger atom is true.
class SuccessorGenerator {
 public:
  explicit SuccessorGenerator(const GroundTask& task) : task_(task), triggered_(task.atoms.size()) {
    std::vector<std::size_t> freq(task.atoms.size(), 0);
    for (const auto& a : task.actions) {
      for (const auto& l : a.precondition) {
        if (!l.negated) ++freq[l.atom];
      }
    }
    for (std::size_t i = 0; i < task.actions.size(); ++i) {
      const auto& a = task.actions[i];
      std::size_t best = SIZE_MAX;
      AtomId trigger = 0;
      for (const auto& l : a.precondition) {
        if (!l.negated && freq[l.atom] < best) {
          best = freq[l.atom];
          trigger = l.atom;
        }
      }
      if (best == SIZE_MAX) {
        always_.push_back(i);
      } else {
        triggered_[trigger].push_back(i);
      }
    }
  }

  void applicable(const State& s, std::vector<std::size_t>& out) const {
    out.clear();
    for (std::size_t i : always_) {
      if (holds(s, task_.actions[i].precondition)) out.push_back(i);
    }
    for (AtomId p : s.atoms.ids()) {
      for (std::size_t i : triggered_[p]) {
        if (holds(s, task_.actions[i].precondition)) out.push_back(i);
      }
    }
    std::sort(out.begin(), out.end());
  }

 private:
  const GroundTask& task_;
  std::vector<std::vector<std::size_t>> triggered_;
  std::vector<std::size_t> always_;
};

}  // namespace

std::optional<PlanPrefix> weighted_astar(const GroundTask& task, const SearchConfig& cfg) {
  cfg.validate();
  RelaxedHeuristic heuristic(task, cfg.heuristic);
  SuccessorGenerator successors(task);

  std::vector<Node> nodes;
  std::unordered_map<AtomSet, std::size_t, AtomSetHash> index;
  std::priority_queue<OpenEntry, std::vector<OpenEntry>, std::greater<>> open;
  std::size_t seq = 0;
  SearchStats stats;

  const double h0 = heuristic(task.init);
  if (h0 == kInfinity) return std::nullopt;
  nodes.push_back({task.init, 0.0, h0});
  index.emplace(task.init.atoms, 0);
  open.push({cfg.weight * h0, h0, seq++, 0, 0.0});

  std::vector<std::size_t> ops;
  while (!open.empty()) {
    const OpenEntry e = open.top();
    open.pop();
    Node& node = nodes[e.node];
    if (e.g > node.g) continue;  // stale entry
    if (holds(node.state, task.goal)) {
      PlanPrefix plan;
      plan.g = node.g;
      plan.state = node.state;
      std::vector<std::size_t> chain;
      for (std::size_t n = e.node; nodes[n].parent != SIZE_MAX; n = nodes[n].parent) chain.push_back(nodes[n].action);
      std::reverse(chain.begin(), chain.end());
      for (std::size_t a : chain) plan.steps.push_back(task.actions[a]);
      plan.stats = stats;
      return plan;
    }
    node.closed = true;
    if (++stats.expanded > cfg.node_limit) throw SearchLimitExceeded(cfg.node_limit);

    const State current = node.state;
    const double g = node.g;
    successors.applicable(current, ops);
    for (std::size_t ai : ops) {
      const GroundAction& a = task.actions[ai];
      State next = apply(current, a);
      const double ng = g + a.cost;
      ++stats.generated;
      auto it = index.find(next.atoms);
      if (it != index.end()) {
        Node& old = nodes[it->second];
        if (ng >= old.g) continue;
        if (old.closed) ++stats.reopened;
        old.g = ng;
        old.state.total_cost = next.total_cost;
        old.parent = e.node;
        old.action = ai;
        old.closed = false;
        open.push({ng + cfg.weight * old.h, old.h, seq++, it->second, ng});
        continue;
      }
      const double h = heuristic(next);
      if (h == kInfinity) continue;
      const std::size_t id = nodes.size();
      index.emplace(next.atoms, id);
      nodes.push_back({std::move(next), ng, h, e.node, ai});
      open.push({ng + cfg.weight * h, h, seq++, id, ng});
    }
  }
  return std::nullopt;
}

}  // namespace labplan::search
