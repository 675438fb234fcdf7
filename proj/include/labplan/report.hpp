#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "labplan/analyzer.hpp"
#include "labplan/schedule.hpp"

namespace labplan::report {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunLog {
  int run_index = 0;
  /// Requested condition.
  std::optional<double> target_pH;
  std::optional<double> measured_pH;
  std::optional<double> redox_mV;
  bool anomaly = false;
  std::string note;

  bool operator==(const RunLog&) const = default;
};

/// Accepts a JSON array of runs or an object with a "runs" array. Run indices
/// must be unique and increasing.
std::vector<RunLog> run_logs_from_json(const std::string& text);
std::string run_logs_to_json(const std::vector<RunLog>& logs);

struct ReportInput {
  std::string title = "Experiment report";
  schedule::Schedule schedule;
  std::optional<double> total_cost;
  std::optional<analyzer::FitDocument> fit;
  std::vector<RunLog> logs;
  /// Injected so output is reproducible.
  std::string timestamp;
  std::string gantt_path = "gantt.svg";
};

struct RenderedReport {
  std::string markdown;
  std::string json;
};

/// Pure function of its input. Numbers shown in the markdown are rounded once
/// and the same rounded values are written to the JSON sidecar.
RenderedReport render_report(const ReportInput& in);

}  // namespace labplan::report
