#include <bit>
#include <functional>

#include "labplan/model.hpp"

namespace labplan {

std::string GroundAtom::to_string() const {
  std::string out = "(" + predicate;
  for (const auto& a : args) out += " " + a;
  return out + ")";
}

std::size_t GroundAtomHash::operator()(const GroundAtom& a) const noexcept {
  std::size_t h = std::hash<std::string>{}(a.predicate);
  for (const auto& s : a.args) h = h * 1000003u ^ std::hash<std::string>{}(s);
  return h;
}

GroundAtom atom_from_text(const std::string& text) {
  const auto forms = read_sexprs(SourceText{text, "<atom>"});
  if (forms.size() != 1 || !forms[0].is_list || forms[0].items.empty()) {
    throw ParseError("<atom>", {1, 1}, "expected a single atom, got '" + text + "'");
  }
  GroundAtom a;
  for (std::size_t i = 0; i < forms[0].items.size(); ++i) {
    const auto& item = forms[0].items[i];
    if (item.is_list) throw ParseError("<atom>", item.loc, "nested term in atom");
    (i == 0 ? a.predicate : a.args.emplace_back()) = item.atom;
  }
  return a;
}

std::size_t AtomSet::count() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<AtomId> AtomSet::ids() const {
  std::vector<AtomId> out;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    std::uint64_t w = words_[i];
    while (w) {
      const int bit = std::countr_zero(w);
      out.push_back(static_cast<AtomId>(i * 64 + static_cast<std::size_t>(bit)));
      w &= w - 1;
    }
  }
  return out;
}

std::size_t AtomSet::hash() const noexcept {
  std::size_t h = 1469598103934665603ULL;
  for (auto w : words_) {
    h ^= static_cast<std::size_t>(w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  }
  return h;
}

std::string GroundAction::name() const {
  std::string out = "(" + schema;
  for (const auto& b : binding) out += " " + b;
  return out + ")";
}

void FactSet::merge(const FactSet& other) {
  certified.insert(other.certified.begin(), other.certified.end());
  for (const auto& [k, v] : other.function_values) function_values[k] = v;
  for (const auto& [k, v] : other.objects) objects[k] = v;
}

InapplicableAction::InapplicableAction(std::string action, std::string literal, std::string ground_literal)
    : std::runtime_error("action " + action + " is inapplicable: precondition " + literal +
                         (literal == ground_literal ? "" : " [" + ground_literal + "]") + " does not hold"),
      action_(std::move(action)),
      literal_(std::move(literal)),
      ground_literal_(std::move(ground_literal)) {}

namespace {

std::string action_key(const std::string& schema, const std::vector<std::string>& binding) {
  std::string key = schema;
  for (const auto& b : binding) {
    key += '\x1f';
    key += b;
  }
  return key;
}

}  // namespace

void GroundTask::reindex() {
  atom_index_.clear();
  for (std::size_t i = 0; i < atoms.size(); ++i) atom_index_.emplace(atoms[i], static_cast<AtomId>(i));
  action_index_.clear();
  for (std::size_t i = 0; i < actions.size(); ++i) {
    action_index_.emplace(action_key(actions[i].schema, actions[i].binding), i);
  }
}

std::optional<AtomId> GroundTask::find_atom(const GroundAtom& a) const {
  auto it = atom_index_.find(a);
  if (it == atom_index_.end()) return std::nullopt;
  return it->second;
}

const GroundAction* GroundTask::find_action(const std::string& schema,
                                            const std::vector<std::string>& binding) const {
  auto it = action_index_.find(action_key(schema, binding));
  return it == action_index_.end() ? nullptr : &actions[it->second];
}

GroundCondition GroundTask::condition(const pddl::Condition& c) const {
  GroundCondition out;
  for (const auto& lit : c) {
    if (lit.atom.predicate == "=") {
      const bool equal = lit.atom.args.at(0) == lit.atom.args.at(1);
      if (equal == lit.negated) out.unsatisfiable = true;
      continue;
    }
    auto id = find_atom(GroundAtom{lit.atom.predicate, lit.atom.args});
    if (!id) {
      // Closed world: atoms outside the reachable set are always false.
      if (!lit.negated) out.unsatisfiable = true;
      continue;
    }
    out.literals.push_back({*id, lit.negated, -1});
  }
  return out;
}

State GroundTask::make_state(const std::vector<GroundAtom>& list, double cost) const {
  State s{AtomSet(atoms.size()), cost};
  for (const auto& a : list) {
    auto id = find_atom(a);
    if (!id) throw GroundingError("atom " + a.to_string() + " is not part of the task");
    s.atoms.set(*id);
  }
  return s;
}

std::vector<GroundAtom> GroundTask::state_atoms(const State& s) const {
  std::vector<GroundAtom> out;
  for (AtomId id : s.atoms.ids()) out.push_back(atoms[id]);
  return out;
}

bool holds(const State& s, const std::vector<GroundLiteral>& literals) {
  for (const auto& l : literals) {
    if (s.atoms.test(l.atom) == l.negated) return false;
  }
  return true;
}

bool holds(const State& s, const GroundCondition& c) { return !c.unsatisfiable && holds(s, c.literals); }

namespace {

State apply_impl(const State& s, const GroundAction& a, const GroundTask* task) {
  for (const auto& l : a.precondition) {
    if (s.atoms.test(l.atom) != l.negated) continue;
    std::string ground = task ? task->atom_text(l.atom) : "atom#" + std::to_string(l.atom);
    if (l.negated) ground = "(not " + ground + ")";
    std::string lifted = ground;
    if (task && a.schema_index >= 0 && l.source >= 0) {
      lifted = task->schemas[static_cast<std::size_t>(a.schema_index)]
                   .precondition[static_cast<std::size_t>(l.source)]
                   .to_string();
    }
    throw InapplicableAction(a.name(), lifted, ground);
  }
  State next = s;
  std::vector<AtomId> add = a.add;
  std::vector<AtomId> del = a.del;
  for (const auto& ce : a.conditional) {
    if (!holds(s, ce.condition)) continue;
    add.insert(add.end(), ce.add.begin(), ce.add.end());
    del.insert(del.end(), ce.del.begin(), ce.del.end());
  }
  for (AtomId d : del) next.atoms.reset(d);
  for (AtomId p : add) next.atoms.set(p);
  next.total_cost += a.cost;
  return next;
}

}  // namespace

State apply(const State& s, const GroundAction& a, const GroundTask& task) { return apply_impl(s, a, &task); }
State apply(const State& s, const GroundAction& a) { return apply_impl(s, a, nullptr); }

}  // namespace labplan
