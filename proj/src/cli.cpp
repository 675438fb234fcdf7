#include "labplan/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "labplan/analyzer.hpp"
#include "labplan/planner.hpp"
#include "labplan/report.hpp"
#include "labplan/schedule.hpp"

namespace labplan {

namespace {

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) { return SourceText::from_file(path).content; }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DomainError("cannot write " + path);
  f << content;
  if (!f) throw DomainError("cannot write " + path);
}

struct ProblemArgs {
  std::string domain;
  std::string problem;
  std::string streams;
  std::string config;
  std::int64_t t_unit = 0;
  std::int64_t t_max = 0;
};

struct LoadedProblem {
  pddl::Domain dom;
  pddl::Problem prob;
  pddl::StreamSpecSet specs;
  temporal::DurativeConfig cfg;
};

LoadedProblem load(const ProblemArgs& a) {
  LoadedProblem lp;
  lp.dom = pddl::parse_domain(SourceText::from_file(a.domain));
  lp.prob = pddl::parse_problem(SourceText::from_file(a.problem), lp.dom);
  if (!a.streams.empty()) lp.specs = pddl::parse_streams(SourceText::from_file(a.streams), lp.dom);
  if (!a.config.empty()) lp.cfg = temporal::parse_config(SourceText::from_file(a.config));
  if (a.t_unit > 0) lp.cfg.unit_T = a.t_unit;
  if (a.t_max > 0) lp.cfg.t_max = a.t_max;
  return lp;
}

void add_problem_options(CLI::App* cmd, ProblemArgs& a) {
  cmd->add_option("domain", a.domain, "PDDL domain file")->required();
  cmd->add_option("problem", a.problem, "PDDL problem file")->required();
  cmd->add_option("--streams", a.streams, "stream declarations");
  cmd->add_option("--config", a.config, "durations and agents (TOML)");
  cmd->add_option("--t-unit", a.t_unit, "time unit T in seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--t-max", a.t_max, "planning horizon in seconds")->check(CLI::PositiveNumber);
}

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sidecar_path(const std::string& md) {
  const auto dot = md.rfind('.');
  const auto slash = md.rfind('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return md + ".json";
  return md.substr(0, dot) + ".json";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Task planning with scheduling for lab automation, plus Pourbaix fitting and reports.", "labplan"};
  app.require_subcommand(1);

  ProblemArgs plan_args;
  std::string mode = "parallel";
  double weight = 2.0;
  std::string plan_out;
  bool verbose = false;
  auto* plan_cmd = app.add_subcommand("plan", "find a plan and write it as JSON");
  add_problem_options(plan_cmd, plan_args);
  plan_cmd->add_option("--mode", mode, "sequential or parallel")->check(CLI::IsMember({"sequential", "parallel"}));
  plan_cmd->add_option("--weight", weight, "weighted A* weight (>= 1)")->check(CLI::Range(1.0, 1e6));
  plan_cmd->add_option("-o,--output", plan_out, "plan.json path");
  plan_cmd->add_flag("-v,--verbose", verbose, "log planner iterations to stderr");

  std::string gantt_in;
  std::string gantt_format = "svg";
  std::string gantt_out;
  auto* gantt_cmd = app.add_subcommand("gantt", "render a plan's schedule");
  gantt_cmd->add_option("plan", gantt_in, "plan.json")->required();
  gantt_cmd->add_option("--format", gantt_format, "svg, ascii or json")
      ->check(CLI::IsMember({"svg", "ascii", "json"}));
  gantt_cmd->add_option("-o,--output", gantt_out, "output path (stdout if omitted)");

  ProblemArgs val_args;
  std::string val_plan;
  auto* val_cmd = app.add_subcommand("validate", "replay a plan against its problem");
  add_problem_options(val_cmd, val_args);
  val_cmd->add_option("plan", val_plan, "plan.json")->required();

  std::string fit_in;
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
  std::string fit_out;
  std::string posterior_out;
  auto* fit_cmd = app.add_subcommand("fit", "fit the Pourbaix model to pH,eV data");
  fit_cmd->add_option("data", fit_in, "CSV with header pH,eV")->required();
  fit_cmd->add_option("--samples", samples, "posterior samples (0 skips the posterior)");
  fit_cmd->add_option("--seed", seed, "sampler seed");
  fit_cmd->add_option("-o,--output", fit_out, "fit.json path");
  fit_cmd->add_option("--posterior", posterior_out, "posterior.json path");

  std::string rep_plan;
  std::string rep_fit;
  std::string rep_logs;
  std::string rep_out;
  std::string timestamp;
  std::string title = "Experiment report";
  std::string gantt_ref = "gantt.svg";
  auto* rep_cmd = app.add_subcommand("report", "write a markdown report with a JSON sidecar");
  rep_cmd->add_option("plan", rep_plan, "plan.json")->required();
  rep_cmd->add_option("fit", rep_fit, "fit.json")->required();
  rep_cmd->add_option("logs", rep_logs, "run logs JSON")->required();
  rep_cmd->add_option("-o,--output", rep_out, "report.md path; the sidecar goes next to it");
  rep_cmd->add_option("--timestamp", timestamp, "generation time to print (default: now)");
  rep_cmd->add_option("--title", title, "report title");
  rep_cmd->add_option("--gantt", gantt_ref, "Gantt chart path to reference");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*plan_cmd) {
      LoadedProblem lp = load(plan_args);
      planner::SolveOptions opts;
      opts.mode = planner::parse_mode(mode);
      opts.search.weight = weight;
      if (verbose) opts.log = [&err](const std::string& s) { err << s << "\n"; };
      const auto res = planner::solve_temporal(lp.dom, lp.prob, lp.specs, lp.cfg, opts);
      if (!res.plan) throw DomainError(res.reason.empty() ? "no plan found" : res.reason);
      const auto& p = *res.plan;
      out << "plan (" << planner::to_string(p.mode) << "): " << p.steps.size() << " steps, cost " << p.cost
          << ", makespan " << p.makespan << " s\n";
      for (const auto& s : p.steps) {
        out << "  " << s.t_start << "  " << s.name();
        if (s.phase != planner::Phase::kInstantaneous) out << " " << planner::to_string(s.phase);
        out << "\n";
      }
      if (!plan_out.empty()) write_file(plan_out, planner::plan_to_json(p));
      return 0;
    }
    if (*gantt_cmd) {
      const auto plan = planner::plan_from_json(read_file(gantt_in));
      const auto chart = schedule::render_gantt(schedule::extract_schedule(plan), gantt_format);
      if (gantt_out.empty()) {
        out << chart;
      } else {
        write_file(gantt_out, chart);
      }
      return 0;
    }
    if (*val_cmd) {
      LoadedProblem lp = load(val_args);
      const auto plan = planner::plan_from_json(read_file(val_plan));
      FactSet extra;
      for (const auto& a : plan.certified) extra.certified.insert(a);
      const auto task = planner::planning_task(lp.dom, lp.prob, lp.specs, lp.cfg, plan.mode, extra);
      const auto rep = planner::validate_plan(plan, task);
      if (!rep.valid) {
        out << "invalid: " << rep.message << "\n";
        return 1;
      }
      const auto sched = schedule::extract_schedule(plan);
      if (auto overlap = schedule::find_overlap(sched)) {
        out << "invalid: " << *overlap << "\n";
        return 1;
      }
      out << "valid: " << plan.steps.size() << " steps, cost " << rep.cost << ", makespan " << sched.makespan
          << " s\n";
      return 0;
    }
    if (*fit_cmd) {
      const auto data = analyzer::read_csv(SourceText::from_file(fit_in));
      analyzer::FitDocument doc;
      doc.fit = analyzer::fit_mle(data);
      const auto& q = doc.fit.params;
      out << "MLE: pKa1 " << q.pKa1 << ", pKa2 " << q.pKa2 << ", k " << q.k << " mV/pH, E_inf " << q.E_inf
          << " mV, sigma " << q.sigma << " mV\n";
      for (const auto& d : doc.fit.diagnostics) out << "diagnostic: " << d << "\n";
      if (samples > 0) {
        const auto prior = analyzer::focused_prior(data, doc.fit, analyzer::PriorRanges::defaults(data), 3.0, seed);
        const auto ws = analyzer::sample_posterior(data, prior, samples, seed);
        std::vector<double> grid;
        for (int i = 0; i <= 40; ++i) grid.push_back(2.0 + 0.25 * i);
        doc.posterior = analyzer::summarize_posterior(ws, 10, grid);
        out << "posterior: " << samples << " samples, effective " << doc.posterior->ess << ", joint mode pKa1 "
            << doc.posterior->joint_mode.pKa1 << "\n";
        if (!posterior_out.empty()) write_file(posterior_out, analyzer::posterior_to_json(*doc.posterior));
      }
      if (!fit_out.empty()) write_file(fit_out, analyzer::fit_to_json(doc));
      return 0;
    }
    if (*rep_cmd) {
      report::ReportInput in;
      const auto plan = planner::plan_from_json(read_file(rep_plan));
      in.schedule = schedule::extract_schedule(plan);
      in.total_cost = plan.cost;
      in.fit = analyzer::fit_from_json(read_file(rep_fit));
      in.logs = report::run_logs_from_json(read_file(rep_logs));
      in.timestamp = timestamp.empty() ? now_utc() : timestamp;
      in.title = title;
      in.gantt_path = gantt_ref;
      const auto r = report::render_report(in);
      if (rep_out.empty()) {
        out << r.markdown;
      } else {
        write_file(rep_out, r.markdown);
        write_file(sidecar_path(rep_out), r.json);
        out << "wrote " << rep_out << " and " << sidecar_path(rep_out) << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace labplan
