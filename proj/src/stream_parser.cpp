#include <algorithm>
#include <set>

#include "labplan/pddl.hpp"

namespace labplan::pddl {

namespace {

[[noreturn]] void fail(const std::string& origin, const SExpr& at, const std::string& msg) {
  throw ParseError(origin, at.loc, msg);
}

std::vector<TypedName> variables(const std::string& origin, const SExpr& list) {
  if (!list.is_list) fail(origin, list, "expected a variable list");
  std::vector<TypedName> out;
  std::size_t pending = 0;
  for (std::size_t i = 0; i < list.items.size(); ++i) {
    const SExpr& e = list.items[i];
    if (e.is_atom("-")) {
      if (i + 1 >= list.items.size() || list.items[i + 1].is_list) fail(origin, e, "type name expected after '-'");
      for (std::size_t k = pending; k < out.size(); ++k) out[k].type = list.items[i + 1].atom;
      pending = out.size();
      ++i;
      continue;
    }
    if (e.is_list || !is_variable(e.atom)) fail(origin, e, "expected variable, got '" + e.to_string() + "'");
    out.push_back({e.atom, kObjectType});
  }
  return out;
}

std::vector<Atom> facts(const std::string& origin, const SExpr& e) {
  std::vector<Atom> out;
  if (!e.is_list) fail(origin, e, "expected a fact list");
  if (e.items.empty()) return out;
  if (e.has_head("and")) {
    for (std::size_t i = 1; i < e.items.size(); ++i) {
      auto inner = facts(origin, e.items[i]);
      out.insert(out.end(), inner.begin(), inner.end());
    }
    return out;
  }
  if (e.has_head("not")) fail(origin, e, "stream facts must be positive atoms");
  Atom a;
  for (std::size_t i = 0; i < e.items.size(); ++i) {
    if (e.items[i].is_list) fail(origin, e.items[i], "nested term in stream fact");
    if (i == 0) {
      a.predicate = e.items[i].atom;
    } else {
      a.args.push_back(e.items[i].atom);
    }
  }
  out.push_back(std::move(a));
  return out;
}

StreamSpec stream_decl(const std::string& origin, const SExpr& form) {
  if (form.items.size() < 2 || form.items[1].is_list) fail(origin, form, "stream name expected");
  StreamSpec s;
  s.name = form.items[1].atom;
  bool has_kind = false;
  std::set<std::string> seen;
  for (std::size_t k = 2; k < form.items.size(); k += 2) {
    const SExpr& key = form.items[k];
    if (!key.is_keyword()) fail(origin, key, "expected a :field keyword");
    if (!seen.insert(key.atom).second) fail(origin, key, "duplicate field " + key.atom);
    if (k + 1 >= form.items.size()) fail(origin, key, "missing value for " + key.atom);
    const SExpr& val = form.items[k + 1];
    if (key.atom == ":kind") {
      if (val.is_atom("eager")) {
        s.kind = StreamKind::kEager;
      } else if (val.is_atom("optimistic")) {
        s.kind = StreamKind::kOptimistic;
      } else {
        fail(origin, val, "unknown stream kind '" + val.to_string() + "'");
      }
      has_kind = true;
    } else if (key.atom == ":inputs") {
      s.inputs = variables(origin, val);
    } else if (key.atom == ":outputs") {
      s.outputs = variables(origin, val);
    } else if (key.atom == ":domain") {
      s.domain_facts = facts(origin, val);
    } else if (key.atom == ":certified") {
      s.certified_facts = facts(origin, val);
    } else if (key.atom == ":generator") {
      if (val.is_list) fail(origin, val, "generator name expected");
      s.generator = val.atom;
    } else if (key.atom == ":args") {
      if (!val.is_list) fail(origin, val, "(:args ...) must be a list");
      for (const auto& item : val.items) {
        if (item.is_list) {
          std::vector<std::string> row;
          for (const auto& cell : item.items) {
            if (cell.is_list) fail(origin, cell, "nested list in :args row");
            row.push_back(cell.atom);
          }
          s.args.push_back(std::move(row));
        } else {
          s.args.push_back({item.atom});
        }
      }
    } else {
      fail(origin, key, "unknown stream field " + key.atom);
    }
  }
  if (!has_kind) fail(origin, form, "stream '" + s.name + "' has no :kind");
  if (s.generator.empty()) fail(origin, form, "stream '" + s.name + "' has no :generator");
  return s;
}

void validate(const std::string& origin, const SExpr& at, const StreamSpec& s, const Domain& dom) {
  std::set<std::string> vars;
  for (const auto* list : {&s.inputs, &s.outputs}) {
    for (const auto& v : *list) {
      if (!dom.types.count(v.type)) fail(origin, at, "stream '" + s.name + "': unknown type '" + v.type + "'");
      if (!vars.insert(v.name).second) fail(origin, at, "stream '" + s.name + "': duplicate variable " + v.name);
    }
  }
  auto check = [&](const Atom& a, bool domain_side) {
    const PredicateDecl* decl = dom.find_predicate(a.predicate);
    if (!decl) fail(origin, at, "stream '" + s.name + "': unknown predicate '" + a.predicate + "'");
    if (decl->params.size() != a.args.size()) {
      fail(origin, at, "stream '" + s.name + "': arity mismatch for '" + a.predicate + "'");
    }
    for (const auto& arg : a.args) {
      if (!is_variable(arg)) continue;
      const bool is_input = std::any_of(s.inputs.begin(), s.inputs.end(), [&](auto& v) { return v.name == arg; });
      if (domain_side ? !is_input : !vars.count(arg)) {
        fail(origin, at, "stream '" + s.name + "': variable " + arg + " is not declared");
      }
    }
  };
  for (const auto& a : s.domain_facts) check(a, true);
  for (const auto& a : s.certified_facts) check(a, false);
  for (const auto& out : s.outputs) {
    bool used = false;
    for (const auto& a : s.certified_facts) {
      used |= std::find(a.args.begin(), a.args.end(), out.name) != a.args.end();
    }
    if (!used) fail(origin, at, "stream '" + s.name + "': output " + out.name + " appears in no certified fact");
  }
}

}  // namespace

StreamSpecSet parse_streams(const SourceText& src, const Domain& dom) {
  auto forms = read_sexprs(src);
  // An optional (define (stream <name>) ...) wrapper is accepted.
  if (forms.size() == 1 && forms[0].has_head("define")) {
    const SExpr def = forms[0];
    if (def.items.size() < 2 || !def.items[1].has_head("stream")) {
      fail(src.origin, def, "expected (define (stream <name>) ...)");
    }
    forms.assign(def.items.begin() + 2, def.items.end());
  }
  StreamSpecSet out;
  for (const auto& form : forms) {
    if (!form.has_head(":stream")) fail(src.origin, form, "expected (:stream ...)");
    StreamSpec s = stream_decl(src.origin, form);
    if (out.find(s.name)) fail(src.origin, form, "duplicate stream name '" + s.name + "'");
    validate(src.origin, form, s, dom);
    out.streams.push_back(std::move(s));
  }
  return out;
}

}  // namespace labplan::pddl
