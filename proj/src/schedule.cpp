#include "labplan/schedule.hpp"

#include <algorithm>
#include <map>

#include "json.hpp"

namespace labplan::schedule {

using nlohmann::json;

namespace {

std::string step_key(const planner::PlanStep& s) {
  std::string k = s.action;
  for (const auto& a : s.args) k += '\x1f' + a;
  return k + '\x1e' + std::to_string(s.t_start);
}

}  // namespace

Schedule extract_schedule(const planner::Plan& plan) {
  Schedule sched;
  std::map<std::string, int> open;
  auto note_agent = [&](const std::string& a) {
    if (std::find(sched.agents.begin(), sched.agents.end(), a) == sched.agents.end()) sched.agents.push_back(a);
  };
  for (const auto& s : plan.steps) {
    if (s.phase == planner::Phase::kEnd) {
      auto it = open.find(step_key(s));
      if (it == open.end() || it->second == 0) throw ScheduleError("end step " + s.name() + " has no matching start");
      --it->second;
      continue;
    }
    if (s.phase == planner::Phase::kStart) ++open[step_key(s)];
    const std::vector<std::string> agents = s.agents.empty() ? std::vector<std::string>{"unassigned"} : s.agents;
    for (const auto& a : agents) {
      note_agent(a);
      sched.intervals.push_back({a, s.name(), s.t_start, s.t_start + s.duration, agents.size() > 1});
    }
  }
  for (const auto& [k, n] : open) {
    if (n != 0) throw ScheduleError("start step without matching end");
  }
  sched.makespan = makespan(sched);
  return sched;
}

double total_cost(const planner::Plan& plan) {
  try {
    return planner::plan_cost(plan);
  } catch (const planner::PlannerError& e) {
    throw ScheduleError(e.what());
  }
}

std::int64_t makespan(const Schedule& sched) {
  std::int64_t m = 0;
  for (const auto& iv : sched.intervals) m = std::max(m, iv.end);
  return m;
}

std::optional<std::string> find_overlap(const Schedule& sched) {
  std::map<std::string, std::vector<const Interval*>> rows;
  for (const auto& iv : sched.intervals) rows[iv.agent].push_back(&iv);
  for (auto& [agent, list] : rows) {
    std::sort(list.begin(), list.end(), [](const Interval* a, const Interval* b) {
      return std::tie(a->start, a->end) < std::tie(b->start, b->end);
    });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->start < list[i - 1]->end) {
        return agent + ": " + list[i - 1]->action + " overlaps " + list[i]->action;
      }
    }
  }
  return std::nullopt;
}

std::string schedule_to_json(const Schedule& sched) {
  json intervals = json::array();
  for (const auto& iv : sched.intervals) {
    intervals.push_back(
        {{"agent", iv.agent}, {"action", iv.action}, {"start", iv.start}, {"end", iv.end}, {"joint", iv.joint}});
  }
  json doc = {{"agents", sched.agents}, {"intervals", intervals}, {"makespan", sched.makespan}};
  return doc.dump(2) + "\n";
}

Schedule schedule_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    Schedule s;
    s.agents = doc.at("agents").get<std::vector<std::string>>();
    for (const auto& iv : doc.at("intervals")) {
      Interval x;
      x.agent = iv.at("agent").get<std::string>();
      x.action = iv.at("action").get<std::string>();
      x.start = iv.at("start").get<std::int64_t>();
      x.end = iv.at("end").get<std::int64_t>();
      x.joint = iv.value("joint", false);
      s.intervals.push_back(std::move(x));
    }
    s.makespan = doc.at("makespan").get<std::int64_t>();
    return s;
  } catch (const json::exception& e) {
    throw ScheduleError(std::string("malformed schedule JSON: ") + e.what());
  }
}

}  // namespace labplan::schedule
