#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "labplan/model.hpp"

namespace labplan::search {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class HeuristicKind { kAdd, kMax, kBlind };

struct SearchConfig {
  double weight = 2.0;
  std::size_t node_limit = 5'000'000;
  HeuristicKind heuristic = HeuristicKind::kAdd;

  void validate() const;
};

struct SearchStats {
  std::size_t expanded = 0;
  std::size_t generated = 0;
  std::size_t reopened = 0;
};

struct PlanPrefix {
  std::vector<GroundAction> steps;
  double g = 0;
  State state;
  SearchStats stats;
};

/// Raised when the node limit is hit; distinct from "no plan exists".
class SearchLimitExceeded : public std::runtime_error {
 public:
  explicit SearchLimitExceeded(std::size_t limit);
  std::size_t limit() const { return limit_; }

 private:
  std::size_t limit_;
};

/// Delete-relaxation heuristic over a fixed task. Negative preconditions are
/// dropped; conditional effects become separate relaxed operators.
class RelaxedHeuristic {
 public:
  RelaxedHeuristic(const GroundTask& task, HeuristicKind kind);
  double operator()(const State& s) const;

 private:
  struct Op {
    std::vector<AtomId> pre;
    std::vector<AtomId> add;
    double cost = 0;
  };
  const GroundTask& task_;
  HeuristicKind kind_;
  std::vector<Op> ops_;
  std::vector<std::vector<std::size_t>> consumers_;
  std::vector<std::size_t> no_pre_;
  std::vector<AtomId> goal_;
  bool goal_unsatisfiable_ = false;
  double min_cost_ = 0;
};

double h_add(const GroundTask& task, const State& s);
double h_max(const GroundTask& task, const State& s);

/// Best-first search on f = g + w*h. Ties: smaller h, then insertion order.
/// Returns nullopt when the goal is unreachable.
std::optional<PlanPrefix> weighted_astar(const GroundTask& task, const SearchConfig& cfg);

}  // namespace labplan::search
