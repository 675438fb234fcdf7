#include <algorithm>
#include <cstdlib>
#include <functional>

#include "labplan/pddl.hpp"

namespace labplan::pddl {

namespace {

const std::set<std::string>& supported_requirements() {
  static const std::set<std::string> kFlags = {
      ":strips",   ":typing",
      ":negative-preconditions", ":equality",
      ":conditional-effects",    ":action-costs",
  };
  return kFlags;
}

class Parser {
 public:
  explicit Parser(const SourceText& src) : origin_(src.origin) {}

  [[noreturn]] void fail(const SExpr& at, const std::string& msg) const {
    throw ParseError(origin_, at.loc, msg);
  }
  [[noreturn]] void fail(Location at, const std::string& msg) const {
    throw ParseError(origin_, at, msg);
  }

  const SExpr& expect_list(const SExpr& e, const std::string& what) const {
    if (!e.is_list) fail(e, "expected " + what + ", got '" + e.atom + "'");
    return e;
  }

  const std::string& expect_name(const SExpr& e, const std::string& what) const {
    if (e.is_list || e.atom.empty() || e.is_keyword()) {
      fail(e, "expected " + what + ", got '" + e.to_string() + "'");
    }
    return e.atom;
  }

  // Parses "a b - t c - u d" starting at items[begin].
  std::vector<TypedName> typed_list(const SExpr& list, std::size_t begin, bool variables,
                                    std::vector<Location>* locs = nullptr,
                                    std::vector<bool>* explicit_type = nullptr) const {
    std::vector<TypedName> out;
    std::size_t pending_start = 0;
    const auto& items = list.items;
    for (std::size_t i = begin; i < items.size(); ++i) {
      const SExpr& e = items[i];
      if (e.is_atom("-")) {
        if (i + 1 >= items.size()) fail(e, "type name expected after '-'");
        const SExpr& t = items[i + 1];
        if (t.has_head("either")) fail(t, "unsupported type expression (either ...)");
        const std::string& type = expect_name(t, "type name");
        if (pending_start == out.size()) fail(e, "'-' without preceding names");
        for (std::size_t k = pending_start; k < out.size(); ++k) {
          out[k].type = type;
          if (explicit_type) (*explicit_type)[k] = true;
        }
        pending_start = out.size();
        ++i;
        continue;
      }
      const std::string& name = expect_name(e, variables ? "variable" : "name");
      if (variables != is_variable(name)) {
        fail(e, std::string(variables ? "expected variable, got '" : "unexpected variable '") +
                    name + "'");
      }
      out.push_back({name, kObjectType});
      if (locs) locs->push_back(e.loc);
      if (explicit_type) explicit_type->push_back(false);
    }
    return out;
  }

  Atom atom_from(const SExpr& e) const {
    expect_list(e, "atom");
    if (e.items.empty()) fail(e, "empty atom");
    Atom a;
    a.predicate = expect_name(e.items[0], "predicate name");
    for (std::size_t i = 1; i < e.items.size(); ++i) {
      a.args.push_back(expect_name(e.items[i], "term"));
    }
    return a;
  }

  void condition_into(const SExpr& e, Condition& out) const {
    if (!e.is_list) fail(e, "expected condition, got '" + e.atom + "'");
    if (e.items.empty()) return;  // () is the empty conjunction
    if (e.has_head("and")) {
      for (std::size_t i = 1; i < e.items.size(); ++i) condition_into(e.items[i], out);
      return;
    }
    if (e.has_head("not")) {
      if (e.items.size() != 2) fail(e, "(not ...) takes exactly one argument");
      const SExpr& inner = e.items[1];
      if (inner.has_head("and") || inner.has_head("not") || inner.has_head("or")) {
        fail(inner, "only atoms may be negated");
      }
      out.push_back({atom_from(inner), true});
      return;
    }
    for (const char* kw : {"or", "imply", "exists", "forall"}) {
      if (e.has_head(kw)) fail(e, std::string("unsupported condition '") + kw + "'");
    }
    out.push_back({atom_from(e), false});
  }

  Condition condition(const SExpr& e) const {
    Condition c;
    condition_into(e, c);
    return c;
  }

  CostTerm cost_term(const SExpr& e) const {
    if (e.is_atom()) {
      char* end = nullptr;
      const double v = std::strtod(e.atom.c_str(), &end);
      if (end == e.atom.c_str() || *end != '\0') fail(e, "expected number, got '" + e.atom + "'");
      if (v < 0) fail(e, "negative action cost");
      return CostTerm{v};
    }
    return CostTerm{atom_from(e)};
  }

  void effect_into(const SExpr& e, std::vector<Literal>& lits, std::vector<ConditionalEffect>* conds,
                   std::optional<CostTerm>& cost) const {
    if (!e.is_list) fail(e, "expected effect, got '" + e.atom + "'");
    if (e.items.empty()) return;
    if (e.has_head("and")) {
      for (std::size_t i = 1; i < e.items.size(); ++i) effect_into(e.items[i], lits, conds, cost);
      return;
    }
    if (e.has_head("not")) {
      if (e.items.size() != 2) fail(e, "(not ...) takes exactly one argument");
      lits.push_back({atom_from(e.items[1]), true});
      return;
    }
    if (e.has_head("when")) {
      if (!conds) fail(e, "nested (when ...) is not supported");
      if (e.items.size() != 3) fail(e, "(when <condition> <effect>) expected");
      ConditionalEffect ce;
      ce.condition = condition(e.items[1]);
      std::optional<CostTerm> inner_cost;
      effect_into(e.items[2], ce.effects, nullptr, inner_cost);
      if (inner_cost) fail(e.items[2], "cost increase inside (when ...) is not supported");
      conds->push_back(std::move(ce));
      return;
    }
    if (e.has_head("increase")) {
      if (e.items.size() != 3) fail(e, "(increase (total-cost) <value>) expected");
      const SExpr& target = e.items[1];
      if (!target.is_list || target.items.size() != 1 || !target.items[0].is_atom(kTotalCost)) {
        fail(target, "only (total-cost) may be increased");
      }
      if (cost) fail(e, "more than one cost increase in one effect");
      cost = cost_term(e.items[2]);
      return;
    }
    for (const char* kw : {"forall", "decrease", "assign", "scale-up", "scale-down"}) {
      if (e.has_head(kw)) fail(e, std::string("unsupported effect '") + kw + "'");
    }
    lits.push_back({atom_from(e), false});
  }

  Effect effect(const SExpr& e) const {
    Effect eff;
    effect_into(e, eff.literals, &eff.conditional, eff.cost);
    return eff;
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
};

// Header of (define (domain x) ...) / (define (problem x) ...).
std::pair<std::string, const SExpr*> define_header(const Parser& p, const std::vector<SExpr>& forms,
                                                   const SourceText& src, const char* kind) {
  if (forms.empty()) p.fail(Location{1, 1}, std::string("empty input, expected (define (") + kind + " ...))");
  if (forms.size() > 1) p.fail(forms[1], "unexpected form after (define ...)");
  const SExpr& def = forms[0];
  if (!def.has_head("define")) p.fail(def, "expected (define ...)");
  if (def.items.size() < 2 || !def.items[1].has_head(kind) || def.items[1].items.size() != 2) {
    p.fail(def, std::string("expected (define (") + kind + " <name>) ...)");
  }
  (void)src;
  return {p.expect_name(def.items[1].items[1], std::string(kind) + " name"), &def};
}

}  // namespace

bool is_variable(const std::string& term) { return !term.empty() && term[0] == '?'; }

std::string Atom::to_string() const {
  std::string out = "(" + predicate;
  for (const auto& a : args) out += " " + a;
  return out + ")";
}

std::string Literal::to_string() const {
  return negated ? "(not " + atom.to_string() + ")" : atom.to_string();
}

const PredicateDecl* Domain::find_predicate(const std::string& n) const {
  for (const auto& p : predicates) {
    if (p.name == n) return &p;
  }
  return nullptr;
}

const PredicateDecl* Domain::find_function(const std::string& n) const {
  for (const auto& f : functions) {
    if (f.name == n) return &f;
  }
  return nullptr;
}

const ActionSchema* Domain::find_action(const std::string& n) const {
  for (const auto& a : actions) {
    if (a.name == n) return &a;
  }
  return nullptr;
}

bool Domain::is_subtype(const std::string& type, const std::string& ancestor) const {
  std::string cur = type;
  for (std::size_t guard = 0; guard <= types.size(); ++guard) {
    if (cur == ancestor) return true;
    auto it = types.find(cur);
    if (it == types.end() || it->second.empty()) return false;
    cur = it->second;
  }
  return false;
}

const StreamSpec* StreamSpecSet::find(const std::string& n) const {
  for (const auto& s : streams) {
    if (s.name == n) return &s;
  }
  return nullptr;
}

namespace {

// Checks shared by the parser and validate_domain. `loc_of` maps an item to a
// location for error reporting.
class DomainChecker {
 public:
  DomainChecker(const Domain& d, std::string origin) : d_(d), origin_(std::move(origin)) {}

  [[noreturn]] void fail(Location l, const std::string& msg) const {
    throw ParseError(origin_, l, msg);
  }

  void check_types(Location l) const {
    for (const auto& [t, parent] : d_.types) {
      if (t == kObjectType) {
        if (!parent.empty()) fail(l, "type 'object' cannot have a parent");
        continue;
      }
      if (!d_.types.count(parent)) fail(l, "type '" + t + "' extends undeclared type '" + parent + "'");
      // Walk to the root; a cycle never reaches `object`.
      std::set<std::string> seen{t};
      std::string cur = parent;
      while (cur != kObjectType) {
        if (!seen.insert(cur).second) fail(l, "cyclic type hierarchy involving '" + t + "'");
        cur = d_.types.at(cur);
      }
    }
  }

  void check_type_known(const std::string& t, Location l) const {
    if (!d_.types.count(t)) fail(l, "unknown type '" + t + "'");
  }

  void check_atom(const Atom& a, const std::map<std::string, std::string>& vars, Location l,
                  bool function = false) const {
    if (a.predicate == "=") {
      if (a.args.size() != 2) fail(l, "equality takes two arguments");
    } else {
      const PredicateDecl* decl = function ? d_.find_function(a.predicate) : d_.find_predicate(a.predicate);
      if (!decl) {
        fail(l, std::string(function ? "unknown function '" : "unknown predicate '") + a.predicate + "'");
      }
      if (decl->params.size() != a.args.size()) {
        fail(l, "arity mismatch for '" + a.predicate + "': expected " +
                    std::to_string(decl->params.size()) + ", got " + std::to_string(a.args.size()));
      }
      for (std::size_t i = 0; i < a.args.size(); ++i) {
        const auto& arg = a.args[i];
        if (is_variable(arg)) continue;
        auto c = constant_type(arg);
        if (c && !d_.is_subtype(*c, decl->params[i].type)) {
          fail(l, "constant '" + arg + "' of type '" + *c + "' does not fit parameter of type '" +
                      decl->params[i].type + "' in '" + a.predicate + "'");
        }
      }
    }
    for (const auto& arg : a.args) {
      if (is_variable(arg)) {
        if (!vars.count(arg)) fail(l, "free variable '" + arg + "' is not an action parameter");
      } else if (!constant_type(arg)) {
        fail(l, "unknown constant '" + arg + "'");
      }
    }
  }

  void check_action(const ActionSchema& a, Location l) const {
    std::map<std::string, std::string> vars;
    for (const auto& p : a.parameters) {
      check_type_known(p.type, l);
      if (!vars.emplace(p.name, p.type).second) {
        fail(l, "duplicate parameter '" + p.name + "' in action '" + a.name + "'");
      }
    }
    for (const auto& lit : a.precondition) check_atom(lit.atom, vars, l);
    for (const auto& lit : a.effect.literals) {
      if (lit.atom.predicate == "=") fail(l, "equality cannot be an effect");
      check_atom(lit.atom, vars, l);
    }
    for (const auto& ce : a.effect.conditional) {
      for (const auto& lit : ce.condition) check_atom(lit.atom, vars, l);
      for (const auto& lit : ce.effects) {
        if (lit.atom.predicate == "=") fail(l, "equality cannot be an effect");
        check_atom(lit.atom, vars, l);
      }
    }
    if (a.effect.cost && !a.effect.cost->is_constant()) {
      check_atom(std::get<Atom>(a.effect.cost->value), vars, l, true);
    }
  }

  std::optional<std::string> constant_type(const std::string& name) const {
    for (const auto& c : d_.constants) {
      if (c.name == name) return c.type;
    }
    return std::nullopt;
  }

 private:
  const Domain& d_;
  std::string origin_;
};

}  // namespace

Domain parse_domain(const SourceText& src) {
  Parser p(src);
  const auto forms = read_sexprs(src);
  auto [name, def] = define_header(p, forms, src, "domain");
  Domain d;
  d.name = name;
  DomainChecker check(d, src.origin);

  std::vector<std::pair<const SExpr*, ActionSchema>> actions;
  std::set<std::string> seen_sections;
  for (std::size_t i = 2; i < def->items.size(); ++i) {
    const SExpr& sec = def->items[i];
    p.expect_list(sec, "domain section");
    if (sec.items.empty() || !sec.items[0].is_keyword()) p.fail(sec, "expected a (:section ...)");
    const std::string& kw = sec.items[0].atom;
    if (kw != ":action" && !seen_sections.insert(kw).second) {
      p.fail(sec, "duplicate declaration of section " + kw);
    }
    if (kw == ":requirements") {
      for (std::size_t k = 1; k < sec.items.size(); ++k) {
        const SExpr& r = sec.items[k];
        if (!r.is_keyword()) p.fail(r, "requirement flags start with ':'");
        if (!supported_requirements().count(r.atom)) {
          p.fail(r, "unsupported requirement '" + r.atom + "'");
        }
        d.requirements.insert(r.atom);
      }
    } else if (kw == ":types") {
      std::vector<Location> locs;
      auto list = p.typed_list(sec, 1, false, &locs);
      std::set<std::string> declared;
      for (std::size_t k = 0; k < list.size(); ++k) {
        const auto& tn = list[k];
        if (!declared.insert(tn.name).second) p.fail(locs[k], "duplicate declaration of type '" + tn.name + "'");
        if (tn.name == kObjectType) {
          if (tn.type != kObjectType) p.fail(locs[k], "type 'object' cannot have a parent");
          continue;
        }
        if (tn.name == tn.type) p.fail(locs[k], "cyclic type hierarchy involving '" + tn.name + "'");
        d.types[tn.name] = tn.type;
      }
      for (const auto& [t, parent] : d.types) {
        if (!parent.empty() && !d.types.count(parent)) {
          // Parents mentioned only on the right-hand side are implicitly declared.
          d.types[parent] = kObjectType;
        }
      }
      check.check_types(sec.loc);
    } else if (kw == ":constants") {
      std::vector<Location> locs;
      auto list = p.typed_list(sec, 1, false, &locs);
      for (std::size_t k = 0; k < list.size(); ++k) {
        check.check_type_known(list[k].type, locs[k]);
        for (const auto& c : d.constants) {
          if (c.name == list[k].name) p.fail(locs[k], "duplicate declaration of constant '" + c.name + "'");
        }
        d.constants.push_back(list[k]);
      }
    } else if (kw == ":predicates" || kw == ":functions") {
      const bool functions = kw == ":functions";
      auto& target = functions ? d.functions : d.predicates;
      for (std::size_t k = 1; k < sec.items.size(); ++k) {
        const SExpr& decl = sec.items[k];
        if (functions && decl.is_atom("-")) {
          // "- number" after a function head.
          if (k + 1 >= sec.items.size() || !sec.items[k + 1].is_atom("number")) {
            p.fail(decl, "only numeric functions are supported");
          }
          ++k;
          continue;
        }
        p.expect_list(decl, functions ? "function declaration" : "predicate declaration");
        if (decl.items.empty()) p.fail(decl, "empty declaration");
        PredicateDecl pd;
        pd.name = p.expect_name(decl.items[0], "predicate name");
        pd.params = p.typed_list(decl, 1, true);
        for (const auto& prm : pd.params) check.check_type_known(prm.type, decl.loc);
        for (const auto& other : target) {
          if (other.name == pd.name) p.fail(decl, "duplicate declaration of '" + pd.name + "'");
        }
        target.push_back(std::move(pd));
      }
    } else if (kw == ":action") {
      if (sec.items.size() < 2) p.fail(sec, "action name expected");
      ActionSchema a;
      a.name = p.expect_name(sec.items[1], "action name");
      for (std::size_t k = 2; k < sec.items.size(); k += 2) {
        const SExpr& key = sec.items[k];
        if (!key.is_keyword()) p.fail(key, "expected :parameters, :precondition or :effect");
        if (k + 1 >= sec.items.size()) p.fail(key, "missing value for " + key.atom);
        const SExpr& val = sec.items[k + 1];
        if (key.atom == ":parameters") {
          p.expect_list(val, "parameter list");
          a.parameters = p.typed_list(val, 0, true);
        } else if (key.atom == ":precondition") {
          a.precondition = p.condition(val);
        } else if (key.atom == ":effect") {
          a.effect = p.effect(val);
        } else {
          p.fail(key, "unknown action field " + key.atom);
        }
      }
      for (const auto& [other, _] : actions) {
        if (other->items[1].atom == a.name) p.fail(sec, "duplicate declaration of action '" + a.name + "'");
      }
      actions.emplace_back(&sec, std::move(a));
    } else if (kw == ":durative-action") {
      p.fail(sec, "durative actions are not supported in the input syntax");
    } else {
      p.fail(sec, "unknown domain section " + kw);
    }
  }
  for (auto& [sec, a] : actions) {
    check.check_action(a, sec->loc);
    d.actions.push_back(std::move(a));
  }
  return d;
}

void validate_domain(const Domain& d) {
  DomainChecker check(d, "<domain>");
  const Location none{};
  check.check_types(none);
  for (const auto& r : d.requirements) {
    if (!supported_requirements().count(r)) check.fail(none, "unsupported requirement '" + r + "'");
  }
  std::set<std::string> names;
  for (const auto& p : d.predicates) {
    if (!names.insert(p.name).second) check.fail(none, "duplicate declaration of '" + p.name + "'");
    for (const auto& prm : p.params) check.check_type_known(prm.type, none);
  }
  names.clear();
  for (const auto& a : d.actions) {
    if (!names.insert(a.name).second) check.fail(none, "duplicate declaration of action '" + a.name + "'");
    check.check_action(a, none);
  }
}

Problem parse_problem(const SourceText& src, const Domain& dom) {
  Parser p(src);
  const auto forms = read_sexprs(src);
  auto [name, def] = define_header(p, forms, src, "problem");
  Problem prob;
  prob.name = name;
  const bool typed = dom.requirements.count(":typing") > 0 || dom.types.size() > 1;

  std::map<std::string, std::string> object_types;
  for (const auto& c : dom.constants) object_types[c.name] = c.type;

  auto check_ground_atom = [&](const Atom& a, const SExpr& at, bool function) {
    const PredicateDecl* decl = function ? dom.find_function(a.predicate) : dom.find_predicate(a.predicate);
    if (!decl) {
      p.fail(at, std::string(function ? "unknown function '" : "unknown predicate '") + a.predicate + "'");
    }
    if (decl->params.size() != a.args.size()) {
      p.fail(at, "arity mismatch for '" + a.predicate + "': expected " + std::to_string(decl->params.size()) +
                     ", got " + std::to_string(a.args.size()));
    }
    for (std::size_t i = 0; i < a.args.size(); ++i) {
      auto it = object_types.find(a.args[i]);
      if (it == object_types.end()) p.fail(at, "unknown object '" + a.args[i] + "'");
      if (!dom.is_subtype(it->second, decl->params[i].type)) {
        p.fail(at, "type mismatch in '" + a.to_string() + "': '" + a.args[i] + "' is a " + it->second +
                       ", expected " + decl->params[i].type);
      }
    }
  };

  std::set<std::string> seen_sections;
  const SExpr* goal_expr = nullptr;
  std::vector<const SExpr*> init_items;
  for (std::size_t i = 2; i < def->items.size(); ++i) {
    const SExpr& sec = def->items[i];
    p.expect_list(sec, "problem section");
    if (sec.items.empty() || !sec.items[0].is_keyword()) p.fail(sec, "expected a (:section ...)");
    const std::string& kw = sec.items[0].atom;
    if (!seen_sections.insert(kw).second) p.fail(sec, "duplicate declaration of section " + kw);
    if (kw == ":domain") {
      if (sec.items.size() != 2) p.fail(sec, "(:domain <name>) expected");
      prob.domain_name = p.expect_name(sec.items[1], "domain name");
      if (prob.domain_name != dom.name) {
        p.fail(sec.items[1], "unknown domain '" + prob.domain_name + "' (loaded domain is '" + dom.name + "')");
      }
    } else if (kw == ":requirements") {
      continue;
    } else if (kw == ":objects") {
      std::vector<Location> locs;
      std::vector<bool> explicit_type;
      auto list = p.typed_list(sec, 1, false, &locs, &explicit_type);
      for (std::size_t k = 0; k < list.size(); ++k) {
        if (typed && !explicit_type[k]) {
          p.fail(locs[k], "untyped object '" + list[k].name + "'");
        }
        if (!dom.types.count(list[k].type)) p.fail(locs[k], "unknown type '" + list[k].type + "'");
        if (object_types.count(list[k].name)) {
          bool is_const = false;
          for (const auto& c : dom.constants) is_const |= c.name == list[k].name;
          p.fail(locs[k], is_const ? "object '" + list[k].name + "' redeclares a domain constant"
                                   : "duplicate declaration of object '" + list[k].name + "'");
        }
        object_types[list[k].name] = list[k].type;
        prob.objects.push_back(list[k]);
      }
    } else if (kw == ":init") {
      for (std::size_t k = 1; k < sec.items.size(); ++k) init_items.push_back(&sec.items[k]);
    } else if (kw == ":goal") {
      if (sec.items.size() != 2) p.fail(sec, "(:goal <condition>) expected");
      goal_expr = &sec.items[1];
    } else if (kw == ":metric") {
      if (sec.items.size() != 3 || !sec.items[1].is_atom("minimize") || !sec.items[2].is_list ||
          sec.items[2].items.size() != 1 || !sec.items[2].items[0].is_atom(kTotalCost)) {
        p.fail(sec, "only (:metric minimize (total-cost)) is supported");
      }
      prob.minimize_total_cost = true;
    } else {
      p.fail(sec, "unknown problem section " + kw);
    }
  }
  if (prob.domain_name.empty()) p.fail(*def, "missing (:domain ...) section");

  for (const SExpr* item : init_items) {
    if (item->has_head("=")) {
      if (item->items.size() != 3) p.fail(*item, "(= (<function> ...) <number>) expected");
      Atom f = p.atom_from(item->items[1]);
      if (f.predicate != kTotalCost) check_ground_atom(f, *item, true);
      const CostTerm v = p.cost_term(item->items[2]);
      if (!v.is_constant()) p.fail(item->items[2], "numeric value expected");
      prob.init_functions[f] = std::get<double>(v.value);
      continue;
    }
    if (item->has_head("not")) p.fail(*item, "negative literals are not allowed in :init");
    Atom a = p.atom_from(*item);
    check_ground_atom(a, *item, false);
    if (std::find(prob.init.begin(), prob.init.end(), a) == prob.init.end()) prob.init.push_back(std::move(a));
  }
  if (goal_expr) {
    prob.goal = p.condition(*goal_expr);
    for (const auto& lit : prob.goal) {
      if (lit.atom.predicate == "=") {
        for (const auto& arg : lit.atom.args) {
          if (!object_types.count(arg)) p.fail(*goal_expr, "goal mentions unknown object '" + arg + "'");
        }
        continue;
      }
      for (const auto& arg : lit.atom.args) {
        if (is_variable(arg)) p.fail(*goal_expr, "goal must be ground, found variable '" + arg + "'");
      }
      check_ground_atom(lit.atom, *goal_expr, false);
    }
  }
  return prob;
}

}  // namespace labplan::pddl
