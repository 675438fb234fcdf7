#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "labplan/model.hpp"
#include "labplan/pddl.hpp"

namespace labplan::temporal {

class TemporalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Durations and acting agents for the start/end transform. Durations are
/// given in seconds and rounded up to whole multiples of unit_T.
struct DurativeConfig {
  std::int64_t unit_T = 60;
  std::int64_t t_max = 40 * 60;
  std::map<std::string, double> durations;
  /// action -> agent terms; "?p" names an action parameter, anything else an object.
  std::map<std::string, std::vector<std::string>> agents;

  void validate() const;
  /// Quantized duration of `action` in seconds.
  std::int64_t duration_of(const std::string& action) const;
  /// {0, T, 2T, ..., t_max}
  std::vector<std::int64_t> grid() const;

  bool operator==(const DurativeConfig&) const = default;
};

/// Reads the key/value config format: top-level `unit_T`, `t_max`, then
/// `[durations]` (action = seconds) and `[agents]` (action = ["?p", ...]).
DurativeConfig parse_config(const SourceText& src);

/// Fills in what `cfg` leaves open: one unit_T for actions without a
/// duration, and the first parameter as agent for actions without agents.
DurativeConfig complete_config(const pddl::Domain& dom, DurativeConfig cfg);

/// ceil(seconds / unit_T); throws std::invalid_argument for seconds <= 0.
std::int64_t quantize_duration(double seconds, std::int64_t unit_T);

struct DurativeAction {
  std::string name;
  std::string start_name;
  std::string end_name;
  std::int64_t duration = 0;
  std::vector<std::string> agents;
  std::size_t parameter_count = 0;
};

struct DurativeDomain {
  pddl::Domain base;
  pddl::Domain domain;
  DurativeConfig config;
  std::vector<DurativeAction> actions;
  std::string timing_type = "timing";
  std::string free_predicate = "is_free";
  std::string at_time_predicate = "at_time";
  std::string agent_at_time_predicate = "agent_at_time";
  pddl::StreamSpecSet eager_streams;

  const DurativeAction* find(const std::string& action) const;
  /// Maps "<a>-start"/"<a>-end" back to the durative action.
  const DurativeAction* find_by_schema(const std::string& schema, bool* is_start = nullptr) const;
  TemporalLayout layout() const;
};

std::string timing_object(std::int64_t seconds);
std::string update_time_predicate(const std::string& action);
std::string cost_start_function(const std::string& action);
std::string cost_end_function(const std::string& action);

DurativeDomain make_durative(const pddl::Domain& dom, const DurativeConfig& cfg);

/// Adds the timing grid objects, (at_time t0) and (is_free <agent>) for
/// every object that can fill an agent slot.
pddl::Problem make_durative_problem(const DurativeDomain& dd, const pddl::Problem& prob);

}  // namespace labplan::temporal
