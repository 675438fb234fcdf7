#include <cmath>
#include <sstream>

#include "labplan/pddl.hpp"

namespace labplan::pddl {

namespace {

std::string number(double v) {
  if (std::floor(v) == v && std::fabs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Groups consecutive names sharing a type: "a b - t c - u".
std::string typed(const std::vector<TypedName>& names, bool force_types) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ' ';
    out += names[i].name;
    const bool last_of_group = i + 1 == names.size() || names[i + 1].type != names[i].type;
    if (last_of_group && (force_types || names[i].type != kObjectType)) out += " - " + names[i].type;
  }
  return out;
}

void condition(std::ostream& os, const Condition& c) {
  if (c.empty()) {
    os << "()";
    return;
  }
  os << "(and";
  for (const auto& l : c) os << ' ' << l.to_string();
  os << ')';
}

void cost(std::ostream& os, const CostTerm& t) {
  os << "(increase (total-cost) ";
  if (t.is_constant()) {
    os << number(std::get<double>(t.value));
  } else {
    os << std::get<Atom>(t.value).to_string();
  }
  os << ')';
}

}  // namespace

SourceText print_pddl(const Domain& d) {
  std::ostringstream os;
  os << "(define (domain " << d.name << ")\n";
  if (!d.requirements.empty()) {
    os << "  (:requirements";
    for (const auto& r : d.requirements) os << ' ' << r;
    os << ")\n";
  }
  if (d.types.size() > 1) {
    os << "  (:types\n";
    for (const auto& [t, parent] : d.types) {
      if (t == kObjectType) continue;
      os << "    " << t << " - " << parent << "\n";
    }
    os << "  )\n";
  }
  if (!d.constants.empty()) os << "  (:constants " << typed(d.constants, true) << ")\n";
  os << "  (:predicates";
  for (const auto& p : d.predicates) {
    os << "\n    (" << p.name;
    if (!p.params.empty()) os << ' ' << typed(p.params, true);
    os << ')';
  }
  os << "\n  )\n";
  if (!d.functions.empty()) {
    os << "  (:functions";
    for (const auto& f : d.functions) {
      os << "\n    (" << f.name;
      if (!f.params.empty()) os << ' ' << typed(f.params, true);
      os << ") - number";
    }
    os << "\n  )\n";
  }
  for (const auto& a : d.actions) {
    os << "  (:action " << a.name << "\n";
    os << "    :parameters (" << typed(a.parameters, true) << ")\n";
    os << "    :precondition ";
    condition(os, a.precondition);
    os << "\n    :effect (and";
    for (const auto& l : a.effect.literals) os << "\n      " << l.to_string();
    for (const auto& ce : a.effect.conditional) {
      os << "\n      (when ";
      condition(os, ce.condition);
      os << " (and";
      for (const auto& l : ce.effects) os << ' ' << l.to_string();
      os << "))";
    }
    if (a.effect.cost) {
      os << "\n      ";
      cost(os, *a.effect.cost);
    }
    os << ")\n  )\n";
  }
  os << ")\n";
  return SourceText{os.str(), "<printed:" + d.name + ">"};
}

SourceText print_pddl(const Problem& p) {
  std::ostringstream os;
  os << "(define (problem " << p.name << ")\n";
  os << "  (:domain " << p.domain_name << ")\n";
  os << "  (:objects " << typed(p.objects, false) << ")\n";
  os << "  (:init";
  for (const auto& a : p.init) os << "\n    " << a.to_string();
  for (const auto& [f, v] : p.init_functions) os << "\n    (= " << f.to_string() << ' ' << number(v) << ')';
  os << "\n  )\n  (:goal ";
  condition(os, p.goal);
  os << ")\n";
  if (p.minimize_total_cost) os << "  (:metric minimize (total-cost))\n";
  os << ")\n";
  return SourceText{os.str(), "<printed:" + p.name + ">"};
}

SourceText print_streams(const StreamSpecSet& set) {
  std::ostringstream os;
  for (const auto& s : set.streams) {
    os << "(:stream " << s.name << "\n";
    os << "  :kind " << (s.kind == StreamKind::kEager ? "eager" : "optimistic") << "\n";
    os << "  :inputs (" << typed(s.inputs, true) << ")\n";
    os << "  :domain (and";
    for (const auto& a : s.domain_facts) os << ' ' << a.to_string();
    os << ")\n  :outputs (" << typed(s.outputs, true) << ")\n";
    os << "  :certified (and";
    for (const auto& a : s.certified_facts) os << ' ' << a.to_string();
    os << ")\n  :generator " << s.generator << "\n";
    if (!s.args.empty()) {
      os << "  :args (";
      for (std::size_t i = 0; i < s.args.size(); ++i) {
        if (i) os << ' ';
        const auto& row = s.args[i];
        if (row.size() == 1) {
          os << row[0];
        } else {
          os << '(';
          for (std::size_t k = 0; k < row.size(); ++k) os << (k ? " " : "") << row[k];
          os << ')';
        }
      }
      os << ")\n";
    }
    os << ")\n";
  }
  return SourceText{os.str(), "<printed-streams>"};
}

}  // namespace labplan::pddl
