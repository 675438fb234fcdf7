#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "labplan/sexpr.hpp"

namespace labplan::pddl {

inline constexpr const char* kObjectType = "object";
inline constexpr const char* kTotalCost = "total-cost";

/// A name with its declared type. Variables keep their leading '?'.
struct TypedName {
  std::string name;
  std::string type = kObjectType;

  bool operator==(const TypedName&) const = default;
};

/// Predicate (or function) applied to terms. Terms are variables ("?x") or
/// object names. The predicate "=" denotes equality.
struct Atom {
  std::string predicate;
  std::vector<std::string> args;

  bool operator==(const Atom&) const = default;
  auto operator<=>(const Atom&) const = default;
  std::string to_string() const;
};

struct Literal {
  Atom atom;
  bool negated = false;

  bool operator==(const Literal&) const = default;
  std::string to_string() const;
};

/// Conjunction of literals. An empty condition is trivially true.
using Condition = std::vector<Literal>;

/// Right-hand side of (increase (total-cost) ...): a number or a function term.
struct CostTerm {
  std::variant<double, Atom> value;

  bool operator==(const CostTerm&) const = default;
  bool is_constant() const { return std::holds_alternative<double>(value); }
};

struct ConditionalEffect {
  Condition condition;
  std::vector<Literal> effects;

  bool operator==(const ConditionalEffect&) const = default;
};

struct Effect {
  std::vector<Literal> literals;
  std::vector<ConditionalEffect> conditional;
  std::optional<CostTerm> cost;

  bool operator==(const Effect&) const = default;
};

struct PredicateDecl {
  std::string name;
  std::vector<TypedName> params;

  bool operator==(const PredicateDecl&) const = default;
};

struct ActionSchema {
  std::string name;
  std::vector<TypedName> parameters;
  Condition precondition;
  Effect effect;

  bool operator==(const ActionSchema&) const = default;
};

struct Domain {
  std::string name;
  std::set<std::string> requirements;
  /// type -> parent type; always contains `object` mapped to "".
  std::map<std::string, std::string> types{{kObjectType, ""}};
  std::vector<TypedName> constants;
  std::vector<PredicateDecl> predicates;
  std::vector<PredicateDecl> functions;
  std::vector<ActionSchema> actions;

  bool operator==(const Domain&) const = default;

  const PredicateDecl* find_predicate(const std::string& name) const;
  const PredicateDecl* find_function(const std::string& name) const;
  const ActionSchema* find_action(const std::string& name) const;
  /// True if `type` equals `ancestor` or transitively extends it.
  bool is_subtype(const std::string& type, const std::string& ancestor) const;
};

struct Problem {
  std::string name;
  std::string domain_name;
  std::vector<TypedName> objects;
  std::vector<Atom> init;
  /// Initial numeric fluents, e.g. (= (total-cost) 0).
  std::map<Atom, double> init_functions;
  Condition goal;
  bool minimize_total_cost = false;

  bool operator==(const Problem&) const = default;
};

enum class StreamKind { kEager, kOptimistic };

/// Declarative conditional sampler: given inputs satisfying `domain_facts`,
/// the named generator produces outputs certifying `certified_facts`.
struct StreamSpec {
  std::string name;
  StreamKind kind = StreamKind::kOptimistic;
  std::vector<TypedName> inputs;
  std::vector<Atom> domain_facts;
  std::vector<TypedName> outputs;
  std::vector<Atom> certified_facts;
  std::string generator;
  /// Generator arguments; a bare atom is a one-element row.
  std::vector<std::vector<std::string>> args;

  bool operator==(const StreamSpec&) const = default;
};

struct StreamSpecSet {
  std::vector<StreamSpec> streams;

  bool operator==(const StreamSpecSet&) const = default;
  std::size_t size() const { return streams.size(); }
  bool empty() const { return streams.empty(); }
  const StreamSpec* find(const std::string& name) const;
};

Domain parse_domain(const SourceText& src);
Problem parse_problem(const SourceText& src, const Domain& dom);
StreamSpecSet parse_streams(const SourceText& src, const Domain& dom);

/// Re-validates an in-memory domain (used after programmatic construction).
/// Throws ParseError with origin "<domain>" on violation.
void validate_domain(const Domain& dom);

SourceText print_pddl(const Domain& dom);
SourceText print_pddl(const Problem& prob);
SourceText print_streams(const StreamSpecSet& streams);

bool is_variable(const std::string& term);

}  // namespace labplan::pddl
