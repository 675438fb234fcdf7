#include "labplan/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace labplan::report {

using nlohmann::json;

namespace {

// Six significant digits. The markdown prints the JSON spelling of the rounded
// value so both files agree digit for digit.
double round6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::stod(buf);
}

// Integral values are written without a fractional part.
json jv(double v) {
  const double r = round6(v);
  if (std::fabs(r) < 1e15 && r == std::floor(r)) return static_cast<std::int64_t>(r);
  return r;
}

std::string num(double v) { return jv(v).dump(); }

std::string opt_num(const std::optional<double>& v, const std::string& unit = "") {
  if (!v) return "n/a";
  return num(*v) + unit;
}

json opt_json(const std::optional<double>& v) { return v ? jv(*v) : json(nullptr); }

std::string md_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|' || c == '*' || c == '_' || c == '`') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

std::size_t peak_bin(const analyzer::Histogram& h) {
  return static_cast<std::size_t>(std::max_element(h.mass.begin(), h.mass.end()) - h.mass.begin());
}

}  // namespace

std::vector<RunLog> run_logs_from_json(const std::string& text) {
  std::vector<RunLog> logs;
  try {
    json j = json::parse(text);
    if (j.is_object()) j = j.at("runs");
    if (!j.is_array()) throw ReportError("run logs must be a JSON array");
    for (const auto& r : j) {
      RunLog log;
      log.run_index = r.at("run_index").get<int>();
      auto opt = [&](const char* key) -> std::optional<double> {
        if (!r.contains(key) || r.at(key).is_null()) return std::nullopt;
        return r.at(key).get<double>();
      };
      log.target_pH = opt("target_pH");
      log.measured_pH = opt("measured_pH");
      log.redox_mV = opt("redox_mV");
      log.anomaly = r.value("anomaly", false);
      log.note = r.value("note", std::string{});
      logs.push_back(log);
    }
  } catch (const json::exception& e) {
    throw ReportError(std::string("malformed run logs: ") + e.what());
  }
  for (std::size_t i = 1; i < logs.size(); ++i) {
    if (logs[i].run_index <= logs[i - 1].run_index) {
      throw ReportError("run_index values must be unique and increasing (run " + std::to_string(logs[i].run_index) +
                        " follows run " + std::to_string(logs[i - 1].run_index) + ")");
    }
  }
  return logs;
}

std::string run_logs_to_json(const std::vector<RunLog>& logs) {
  json j = json::array();
  for (const auto& l : logs) {
    j.push_back({{"run_index", l.run_index},
                 {"target_pH", l.target_pH ? json(*l.target_pH) : json(nullptr)},
                 {"measured_pH", l.measured_pH ? json(*l.measured_pH) : json(nullptr)},
                 {"redox_mV", l.redox_mV ? json(*l.redox_mV) : json(nullptr)},
                 {"anomaly", l.anomaly},
                 {"note", l.note}});
  }
  return j.dump(2) + "\n";
}

RenderedReport render_report(const ReportInput& in) {
  std::ostringstream md;
  json side = json::object();
  side["title"] = in.title;
  side["generated"] = in.timestamp;

  std::size_t anomalies = 0;
  for (const auto& l : in.logs) anomalies += l.anomaly;

  md << "# " << md_escape(in.title) << "\n\n";
  md << "Generated: " << in.timestamp << "\n\n";

  md << "## Summary\n\n";
  md << "- Runs: " << in.logs.size() << "\n";
  md << "- Runs flagged as anomalous: " << anomalies << "\n";
  md << "- Agents scheduled: " << in.schedule.agents.size() << "\n";
  md << "- Makespan: " << in.schedule.makespan << " s\n";
  if (in.total_cost) md << "- Planner total cost: " << num(*in.total_cost) << "\n";
  if (in.fit) {
    const auto& p = in.fit->fit.params;
    md << "- Fitted pKa1: " << num(p.pKa1) << ", pKa2: " << num(p.pKa2) << ", low-pH slope: " << num(2 * p.k)
       << " mV/pH\n";
  } else {
    md << "- No fit available.\n";
  }
  md << "\n";
  side["summary"] = {{"runs", in.logs.size()},
                     {"anomalies", anomalies},
                     {"agents", in.schedule.agents.size()},
                     {"makespan_s", in.schedule.makespan},
                     {"total_cost", opt_json(in.total_cost)},
                     {"low_pH_slope_mV_per_pH", in.fit ? jv(2 * in.fit->fit.params.k) : json(nullptr)}};

  md << "## Per-Run Logs\n\n";
  if (in.logs.empty()) md << "No runs recorded.\n\n";
  json runs = json::array();
  for (const auto& l : in.logs) {
    md << "### Run " << l.run_index << "\n\n";
    md << "- Requested pH: " << opt_num(l.target_pH) << "\n";
    md << "- Measured pH: " << opt_num(l.measured_pH) << "\n";
    md << "- Redox potential: " << opt_num(l.redox_mV, " mV") << "\n";
    md << "- Anomaly: " << (l.anomaly ? "yes" : "no");
    if (!l.note.empty()) md << " (" << md_escape(l.note) << ")";
    md << "\n\n";
    runs.push_back({{"run_index", l.run_index},
                    {"target_pH", opt_json(l.target_pH)},
                    {"measured_pH", opt_json(l.measured_pH)},
                    {"redox_mV", opt_json(l.redox_mV)},
                    {"anomaly", l.anomaly},
                    {"note", l.note}});
  }
  side["runs"] = runs;

  md << "## Parameter Estimates\n\n";
  json params = json::array();
  if (!in.fit) {
    md << "No fit available.\n\n";
  } else {
    const auto& fit = in.fit->fit;
    const auto& post = in.fit->posterior;
    md << "Estimates are the joint maximum-likelihood values. The peak of each marginal histogram may differ from "
          "them because each marginal integrates over the other parameters.\n\n";
    if (post) {
      md << "| Parameter | MLE | Joint posterior mode | Marginal peak bin |\n";
      md << "|---|---|---|---|\n";
    } else {
      md << "| Parameter | MLE |\n";
      md << "|---|---|\n";
    }
    for (const auto& name : analyzer::kParamNames) {
      json row = {{"name", name}, {"mle", jv(analyzer::param_value(fit.params, name))}};
      md << "| " << md_escape(name) << " | " << num(analyzer::param_value(fit.params, name));
      if (post) {
        const double mode = analyzer::param_value(post->joint_mode, name);
        row["joint_mode"] = jv(mode);
        md << " | " << num(mode);
        auto it = std::find_if(post->marginals.begin(), post->marginals.end(),
                               [&](const analyzer::Histogram& h) { return h.param == name; });
        if (it != post->marginals.end() && !it->mass.empty()) {
          const std::size_t b = peak_bin(*it);
          row["marginal_peak_bin"] = {jv(it->edges[b]), jv(it->edges[b + 1])};
          row["marginal_peak_mass"] = jv(it->mass[b]);
          md << " | [" << num(it->edges[b]) << ", " << num(it->edges[b + 1]) << "] mass " << num(it->mass[b]);
        } else {
          md << " | n/a";
        }
      }
      md << " |\n";
      params.push_back(row);
    }
    md << "\n";
    md << "- Log-likelihood: " << num(fit.log_likelihood) << " over " << fit.n_points << " points\n";
    side["log_likelihood"] = jv(fit.log_likelihood);
    side["n_points"] = fit.n_points;
    if (post) {
      md << "- Posterior samples: " << post->N << ", seed " << post->seed << ", effective sample size "
         << num(post->ess) << "\n";
      side["posterior"] = {{"samples", post->N}, {"seed", post->seed}, {"ess", jv(post->ess)}};
    }
    for (const auto& d : fit.diagnostics) md << "- Diagnostic: " << md_escape(d) << "\n";
    side["diagnostics"] = fit.diagnostics;
    md << "\n";
  }
  side["parameters"] = params;

  md << "## Schedule\n\n";
  md << "Gantt chart: " << in.gantt_path << "\n\n";
  side["gantt"] = in.gantt_path;
  json intervals = json::array();
  if (in.schedule.intervals.empty()) {
    md << "No scheduled actions.\n";
  } else {
    md << "| Agent | Action | Start (s) | End (s) | Joint |\n";
    md << "|---|---|---|---|---|\n";
    for (const auto& iv : in.schedule.intervals) {
      md << "| " << md_escape(iv.agent) << " | " << md_escape(iv.action) << " | " << iv.start << " | " << iv.end
         << " | " << (iv.joint ? "yes" : "no") << " |\n";
      intervals.push_back(
          {{"agent", iv.agent}, {"action", iv.action}, {"start", iv.start}, {"end", iv.end}, {"joint", iv.joint}});
    }
  }
  side["schedule"] = {{"agents", in.schedule.agents}, {"intervals", intervals}, {"makespan", in.schedule.makespan}};

  return {md.str(), side.dump(2) + "\n"};
}

}  // namespace labplan::report
