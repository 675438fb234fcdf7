#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "labplan/planner.hpp"

namespace labplan::schedule {

class ScheduleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Interval {
  std::string agent;
  /// "(action a b)"
  std::string action;
  std::int64_t start = 0;
  std::int64_t end = 0;
  /// Part of an action shared by several agents.
  bool joint = false;

  bool operator==(const Interval&) const = default;
};

struct Schedule {
  std::vector<Interval> intervals;
  /// Agents in order of first appearance in the plan.
  std::vector<std::string> agents;
  std::int64_t makespan = 0;

  bool operator==(const Schedule&) const = default;
};

/// One interval per (action, agent). Throws ScheduleError on unpaired
/// start/end steps.
Schedule extract_schedule(const planner::Plan& plan);

/// Sum of (t_start + duration) over the plan's actions.
double total_cost(const planner::Plan& plan);

std::int64_t makespan(const Schedule& sched);

/// Describes the first pair of overlapping intervals of one agent, if any.
std::optional<std::string> find_overlap(const Schedule& sched);

std::string schedule_to_json(const Schedule& sched);
Schedule schedule_from_json(const std::string& text);

/// format is "svg", "ascii" or "json"; anything else throws ScheduleError.
std::string render_gantt(const Schedule& sched, const std::string& format);

}  // namespace labplan::schedule
