#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "labplan/pddl.hpp"

namespace labplan {

struct GroundAtom {
  std::string predicate;
  std::vector<std::string> args;

  bool operator==(const GroundAtom&) const = default;
  auto operator<=>(const GroundAtom&) const = default;
  std::string to_string() const;
};

struct GroundAtomHash {
  std::size_t operator()(const GroundAtom& a) const noexcept;
};

/// Parses "(pred a b)" into a ground atom (test and CLI convenience).
GroundAtom atom_from_text(const std::string& text);

using AtomId = std::uint32_t;

/// Fixed-universe bitset over the atoms of one GroundTask.
class AtomSet {
 public:
  AtomSet() = default;
  explicit AtomSet(std::size_t universe) : words_((universe + 63) / 64, 0) {}

  bool test(AtomId id) const { return (words_[id >> 6] >> (id & 63)) & 1U; }
  void set(AtomId id) { words_[id >> 6] |= std::uint64_t{1} << (id & 63); }
  void reset(AtomId id) { words_[id >> 6] &= ~(std::uint64_t{1} << (id & 63)); }
  std::size_t count() const;
  std::vector<AtomId> ids() const;

  bool operator==(const AtomSet&) const = default;
  std::size_t hash() const noexcept;

 private:
  std::vector<std::uint64_t> words_;
};

/// Closed-world state: atoms not in `atoms` are false. total_cost is carried
/// alongside but is not part of state identity.
struct State {
  AtomSet atoms;
  double total_cost = 0;
};

struct GroundLiteral {
  AtomId atom = 0;
  bool negated = false;
  /// Index into the lifted schema's precondition, or -1.
  int source = -1;

  bool operator==(const GroundLiteral&) const = default;
};

/// Ground conjunction. `unsatisfiable` marks a positive literal over an atom
/// outside the task's reachable atom set.
struct GroundCondition {
  std::vector<GroundLiteral> literals;
  bool unsatisfiable = false;
};

struct GroundConditionalEffect {
  std::vector<GroundLiteral> condition;
  std::vector<AtomId> add;
  std::vector<AtomId> del;
};

struct GroundAction {
  std::string schema;
  std::vector<std::string> binding;
  int schema_index = -1;
  std::vector<GroundLiteral> precondition;
  std::vector<AtomId> add;
  std::vector<AtomId> del;
  std::vector<GroundConditionalEffect> conditional;
  double cost = 0;

  /// "(schema a b c)"
  std::string name() const;
};

/// Certified facts plus numeric function values. `objects` carries typed
/// objects introduced by streams (e.g. optimistic placeholders).
struct FactSet {
  std::set<GroundAtom> certified;
  std::map<GroundAtom, double> function_values;
  std::map<std::string, std::string> objects;

  void merge(const FactSet& other);
  bool empty() const { return certified.empty() && function_values.empty() && objects.empty(); }
  bool operator==(const FactSet&) const = default;
};

class GroundingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InapplicableAction : public std::runtime_error {
 public:
  InapplicableAction(std::string action, std::string literal, std::string ground_literal);

  const std::string& action() const { return action_; }
  /// Failing literal as written in the schema (falls back to the ground form).
  const std::string& literal() const { return literal_; }
  const std::string& ground_literal() const { return ground_literal_; }

 private:
  std::string action_;
  std::string literal_;
  std::string ground_literal_;
};

/// Bookkeeping that lets plan tools map start/end steps back onto a
/// durative task; empty for instantaneous tasks.
struct TemporalLayout {
  std::string at_time_predicate;
  std::map<std::string, std::int64_t> timing_values;  // object name -> seconds
};

struct GroundTask {
  std::map<std::string, std::string> objects;  // name -> type
  std::vector<GroundAtom> atoms;
  std::vector<GroundAction> actions;
  std::vector<pddl::ActionSchema> schemas;
  State init;
  GroundCondition goal;
  std::optional<TemporalLayout> temporal;

  std::optional<AtomId> find_atom(const GroundAtom& a) const;
  const GroundAction* find_action(const std::string& schema, const std::vector<std::string>& binding) const;
  std::string atom_text(AtomId id) const { return atoms.at(id).to_string(); }
  /// Grounds a variable-free condition against this task's atom table.
  GroundCondition condition(const pddl::Condition& c) const;
  State make_state(const std::vector<GroundAtom>& atoms, double cost = 0) const;
  std::vector<GroundAtom> state_atoms(const State& s) const;

  /// Rebuilds lookup indices; call after mutating atoms/actions by hand.
  void reindex();

 private:
  std::unordered_map<GroundAtom, AtomId, GroundAtomHash> atom_index_;
  std::unordered_map<std::string, std::size_t> action_index_;
};

GroundTask ground_task(const pddl::Domain& dom, const pddl::Problem& prob, const FactSet& extra = {});

bool holds(const State& s, const GroundCondition& c);
bool holds(const State& s, const std::vector<GroundLiteral>& literals);

/// Successor state. Conditional effects are evaluated against `s`; when an
/// atom is both added and deleted, the add wins.
State apply(const State& s, const GroundAction& a, const GroundTask& task);
State apply(const State& s, const GroundAction& a);

}  // namespace labplan
