#include <cmath>

#include "json.hpp"
#include "labplan/planner.hpp"

namespace labplan::planner {

using nlohmann::json;

namespace {

json number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9e15) return static_cast<std::int64_t>(v);
  return v;
}

}  // namespace

std::string plan_to_json(const Plan& plan) {
  json steps = json::array();
  for (const auto& s : plan.steps) {
    steps.push_back({{"action", s.action},
                     {"args", s.args},
                     {"phase", to_string(s.phase)},
                     {"t_start", s.t_start},
                     {"duration", s.duration},
                     {"agents", s.agents}});
  }
  json certified = json::array();
  for (const auto& a : plan.certified) certified.push_back(a.to_string());
  json doc = {{"steps", steps},
              {"cost", number(plan.cost)},
              {"makespan", plan.makespan},
              {"mode", to_string(plan.mode)},
              {"certified", certified}};
  return doc.dump(2) + "\n";
}

Plan plan_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    Plan plan;
    for (const auto& s : doc.at("steps")) {
      PlanStep step;
      step.action = s.at("action").get<std::string>();
      step.args = s.at("args").get<std::vector<std::string>>();
      step.phase = parse_phase(s.at("phase").get<std::string>());
      step.t_start = s.at("t_start").get<std::int64_t>();
      step.duration = s.at("duration").get<std::int64_t>();
      if (s.contains("agents")) step.agents = s.at("agents").get<std::vector<std::string>>();
      plan.steps.push_back(std::move(step));
    }
    plan.cost = doc.at("cost").get<double>();
    plan.makespan = doc.at("makespan").get<std::int64_t>();
    plan.mode = parse_mode(doc.at("mode").get<std::string>());
    if (doc.contains("certified")) {
      for (const auto& a : doc.at("certified")) plan.certified.push_back(atom_from_text(a.get<std::string>()));
    }
    return plan;
  } catch (const json::exception& e) {
    throw PlannerError(std::string("malformed plan JSON: ") + e.what());
  }
}

}  // namespace labplan::planner
