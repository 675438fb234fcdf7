#include "labplan/streams.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>
#include <unordered_set>

namespace labplan::streams {

namespace {

GroundAtom substitute(const pddl::Atom& tmpl, const std::map<std::string, std::string>& binding) {
  GroundAtom g{tmpl.predicate, {}};
  for (const auto& t : tmpl.args) {
    auto it = binding.find(t);
    g.args.push_back(it == binding.end() ? t : it->second);
  }
  return g;
}

std::map<std::string, std::string> bind_names(const pddl::StreamSpec& spec, const std::vector<std::string>& inputs,
                                              const std::vector<std::string>& outputs) {
  std::map<std::string, std::string> b;
  for (std::size_t i = 0; i < spec.inputs.size(); ++i) b[spec.inputs[i].name] = inputs[i];
  for (std::size_t i = 0; i < spec.outputs.size() && i < outputs.size(); ++i) b[spec.outputs[i].name] = outputs[i];
  return b;
}

std::vector<std::vector<std::string>> gen_update_time(const GeneratorCall& call) {
  if (!call.config) throw StreamError("stream '" + call.spec.name + "': update_time needs a durative config");
  if (call.spec.args.empty() || call.spec.args[0].empty()) {
    throw StreamError("stream '" + call.spec.name + "': update_time needs the action name as argument");
  }
  if (call.inputs.size() != 2) throw StreamError("stream '" + call.spec.name + "': update_time takes two inputs");
  const auto ta = timing_value(call.inputs[0]);
  const auto t = timing_value(call.inputs[1]);
  if (!ta || !t) return {};
  const auto next = update_time(*ta, *t, call.config->duration_of(call.spec.args[0][0]), call.config->t_max);
  if (!next) return {};
  return {{temporal::timing_object(*next)}};
}

std::vector<std::vector<std::string>> gen_constant(const GeneratorCall& call) { return call.spec.args; }

std::vector<std::vector<std::string>> gen_table_lookup(const GeneratorCall& call) {
  std::vector<std::vector<std::string>> out;
  const std::size_t n = call.inputs.size();
  for (const auto& row : call.spec.args) {
    if (row.size() < n || !std::equal(call.inputs.begin(), call.inputs.end(), row.begin())) continue;
    out.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(n), row.end());
  }
  return out;
}

std::vector<std::vector<std::string>> gen_sample_token(const GeneratorCall& call) { return call.spec.args; }

}  // namespace

Universe make_universe(const pddl::Domain& dom, const std::map<std::string, std::string>& objects) {
  Universe u;
  for (const auto& [t, _] : dom.types) {
    auto& list = u[t];
    for (const auto& [name, type] : objects) {
      if (dom.is_subtype(type, t)) list.push_back(name);
    }
  }
  return u;
}

Universe make_universe(const pddl::Domain& dom, const pddl::Problem& prob,
                       const std::map<std::string, std::string>& extra) {
  std::map<std::string, std::string> objects = extra;
  for (const auto& c : dom.constants) objects[c.name] = c.type;
  for (const auto& o : prob.objects) objects[o.name] = o.type;
  return make_universe(dom, objects);
}

std::optional<std::int64_t> update_time(std::int64_t t_agent, std::int64_t t, std::int64_t T_action,
                                        std::int64_t t_max) {
  const std::int64_t t_agent_end = t_agent + T_action;
  const std::int64_t next = std::max(t, t_agent_end);
  if (!(t_agent <= t && t <= t_agent_end) || next >= t_max) return std::nullopt;
  return next;
}

std::optional<std::int64_t> timing_value(const std::string& object) {
  if (object.size() < 2 || object[0] != 't') return std::nullopt;
  std::int64_t v = 0;
  const char* first = object.data() + 1;
  const char* last = object.data() + object.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

GeneratorRegistry GeneratorRegistry::with_builtins() {
  GeneratorRegistry r;
  r.add("update_time", gen_update_time);
  r.add("constant", gen_constant);
  r.add("table-lookup", gen_table_lookup);
  r.add("sample-token", gen_sample_token);
  return r;
}

const Generator& GeneratorRegistry::get(const std::string& name) const {
  auto it = generators_.find(name);
  if (it == generators_.end()) throw StreamError("no generator registered: " + name);
  return it->second;
}

std::vector<std::vector<std::string>> match_inputs(const std::vector<pddl::TypedName>& inputs,
                                                   const std::vector<pddl::Atom>& domain,
                                                   const std::set<GroundAtom>& facts, const Universe& universe) {
  std::unordered_map<std::string, std::vector<const GroundAtom*>> by_pred;
  for (const auto& f : facts) by_pred[f.predicate].push_back(&f);
  std::map<std::string, std::unordered_set<std::string>> members;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    index[inputs[i].name] = i;
    auto it = universe.find(inputs[i].type);
    auto& m = members[inputs[i].type];
    if (it != universe.end()) m.insert(it->second.begin(), it->second.end());
  }

  std::vector<std::vector<std::string>> out;
  std::vector<std::string> binding(inputs.size());

  std::function<void(std::size_t)> fill = [&](std::size_t i) {
    if (i == inputs.size()) {
      out.push_back(binding);
      return;
    }
    if (!binding[i].empty()) {
      fill(i + 1);
      return;
    }
    auto it = universe.find(inputs[i].type);
    if (it == universe.end()) return;
    for (const auto& o : it->second) {
      binding[i] = o;
      fill(i + 1);
    }
    binding[i].clear();
  };

  std::function<void(std::size_t)> join = [&](std::size_t k) {
    if (k == domain.size()) {
      fill(0);
      return;
    }
    const auto& tmpl = domain[k];
    auto it = by_pred.find(tmpl.predicate);
    if (it == by_pred.end()) return;
    for (const GroundAtom* f : it->second) {
      if (f->args.size() != tmpl.args.size()) continue;
      std::vector<std::size_t> newly;
      bool ok = true;
      for (std::size_t a = 0; ok && a < tmpl.args.size(); ++a) {
        auto ix = index.find(tmpl.args[a]);
        if (ix == index.end()) {
          ok = tmpl.args[a] == f->args[a];
        } else if (!binding[ix->second].empty()) {
          ok = binding[ix->second] == f->args[a];
        } else if (members[inputs[ix->second].type].count(f->args[a])) {
          binding[ix->second] = f->args[a];
          newly.push_back(ix->second);
        } else {
          ok = false;
        }
      }
      if (ok) join(k + 1);
      for (auto i : newly) binding[i].clear();
    }
  };
  join(0);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FactSet eval_eager(const pddl::StreamSpecSet& specs, const FactSet& base, const temporal::DurativeConfig& cfg,
                   const Universe& universe, const GeneratorRegistry& registry, const std::string& timing_type) {
  FactSet out;
  std::set<GroundAtom> known = base.certified;
  for (const auto& spec : specs.streams) {
    if (spec.kind != pddl::StreamKind::kEager) continue;
    const Generator& gen = registry.get(spec.generator);
    for (const auto& inputs : match_inputs(spec.inputs, spec.domain_facts, known, universe)) {
      for (const auto& outputs : gen(GeneratorCall{spec, inputs, &cfg, 0})) {
        if (outputs.size() != spec.outputs.size()) {
          throw StreamError("stream '" + spec.name + "': generator returned " + std::to_string(outputs.size()) +
                            " outputs, expected " + std::to_string(spec.outputs.size()));
        }
        const auto b = bind_names(spec, inputs, outputs);
        for (const auto& c : spec.certified_facts) {
          GroundAtom g = substitute(c, b);
          known.insert(g);
          out.certified.insert(std::move(g));
        }
      }
    }
  }
  std::vector<std::int64_t> times;
  if (auto it = universe.find(timing_type); it != universe.end()) {
    for (const auto& o : it->second) {
      if (auto v = timing_value(o)) times.push_back(*v);
    }
  }
  for (const auto& [action, _] : cfg.durations) {
    out.function_values[GroundAtom{temporal::cost_end_function(action), {}}] =
        static_cast<double>(cfg.duration_of(action));
    for (auto t : times) {
      out.function_values[GroundAtom{temporal::cost_start_function(action), {temporal::timing_object(t)}}] =
          static_cast<double>(t);
    }
  }
  return out;
}

bool is_placeholder(const std::string& object) { return object.size() > 2 && object[0] == '#' && object[1] == 'o'; }

std::string StreamInstance::id() const {
  std::string s = (spec ? spec->name : std::string("?")) + "(";
  for (std::size_t i = 0; i < inputs.size(); ++i) s += (i ? "," : "") + inputs[i];
  return s + ")";
}

StreamEpisode::StreamEpisode(const pddl::StreamSpecSet& specs, const GeneratorRegistry& registry,
                             std::uint64_t seed, const temporal::DurativeConfig* config)
    : specs_(specs), registry_(registry), seed_(seed), config_(config) {}

FactSet StreamEpisode::facts_of(const StreamInstance& inst) const {
  FactSet f;
  const auto b = bind_names(*inst.spec, inst.inputs, inst.outputs);
  for (const auto& c : inst.spec->certified_facts) f.certified.insert(substitute(c, b));
  if (inst.status == InstanceStatus::kUntried) {
    for (std::size_t i = 0; i < inst.placeholders.size(); ++i) f.objects[inst.placeholders[i]] = inst.spec->outputs[i].type;
  }
  return f;
}

FactSet StreamEpisode::instantiate_optimistic(const FactSet& base, const Universe& universe) {
  bool changed = true;
  while (changed) {
    changed = false;
    std::set<GroundAtom> known = base.certified;
    Universe u = universe;
    for (const auto& inst : instances_) {
      if (inst.status != InstanceStatus::kUntried) continue;
      FactSet f = facts_of(inst);
      known.insert(f.certified.begin(), f.certified.end());
      for (const auto& [name, type] : f.objects) {
        u[type].push_back(name);
        if (type != pddl::kObjectType) u[pddl::kObjectType].push_back(name);
      }
    }
    for (const auto& spec : specs_.streams) {
      if (spec.kind != pddl::StreamKind::kOptimistic) continue;
      for (const auto& inputs : match_inputs(spec.inputs, spec.domain_facts, known, u)) {
        std::string key = spec.name;
        for (const auto& i : inputs) key += '\x1f' + i;
        if (by_key_.count(key)) continue;
        int depth = 1;
        for (const auto& i : inputs) {
          const int p = producer_of(i);
          if (p >= 0) depth = std::max(depth, instances_[static_cast<std::size_t>(p)].depth + 1);
        }
        if (depth > kMaxPlaceholderDepth) continue;
        StreamInstance inst;
        inst.spec = &spec;
        inst.inputs = inputs;
        inst.depth = depth;
        for (std::size_t k = 0; k < spec.outputs.size(); ++k) {
          std::string ph = "#o" + std::to_string(next_placeholder_++);
          by_placeholder_[ph] = instances_.size();
          inst.placeholders.push_back(ph);
        }
        inst.outputs = inst.placeholders;
        by_key_[key] = instances_.size();
        instances_.push_back(std::move(inst));
        changed = true;
      }
    }
  }
  FactSet out;
  for (const auto& inst : instances_) {
    if (inst.status == InstanceStatus::kUntried) out.merge(facts_of(inst));
  }
  return out;
}

int StreamEpisode::producer_of(const std::string& placeholder) const {
  auto it = by_placeholder_.find(placeholder);
  return it == by_placeholder_.end() ? -1 : static_cast<int>(it->second);
}

BindResult StreamEpisode::bind_stream(std::size_t index) {
  StreamInstance& inst = instances_.at(index);
  if (inst.status != InstanceStatus::kUntried) {
    throw StreamError("stream instance " + inst.id() + " was already evaluated");
  }
  const Generator& gen = registry_.get(inst.spec->generator);
  BindResult r;
  // Chained inputs must be concrete before this generator can run.
  std::vector<std::string> inputs = inst.inputs;
  for (auto& in : inputs) {
    const int p = producer_of(in);
    if (p < 0) continue;
    auto& prod = instances_[static_cast<std::size_t>(p)];
    if (prod.status == InstanceStatus::kUntried) {
      BindResult pr = bind_stream(static_cast<std::size_t>(p));
      if (!pr.ok) return pr;
      r.facts.merge(pr.facts);
    } else if (prod.status == InstanceStatus::kFailed) {
      r.failed = prod.id();
      return r;
    }
    const auto pos = std::find(prod.placeholders.begin(), prod.placeholders.end(), in) - prod.placeholders.begin();
    in = prod.outputs[static_cast<std::size_t>(pos)];
  }
  const auto candidates = gen(GeneratorCall{*inst.spec, inputs, config_, seed_});
  for (const auto& c : candidates) {
    if (c.size() != inst.spec->outputs.size()) continue;
    inst.outputs = c;
    inst.status = InstanceStatus::kBound;
    StreamInstance concrete = inst;
    concrete.inputs = inputs;
    r.facts.merge(facts_of(concrete));
    r.ok = true;
    return r;
  }
  blacklist(index);
  r.failed = inst.id();
  return r;
}

void StreamEpisode::blacklist(std::size_t index) {
  StreamInstance& inst = instances_.at(index);
  inst.status = InstanceStatus::kFailed;
  blacklist_.insert(inst.id());
}

void StreamEpisode::reset_bound() {
  for (auto& inst : instances_) {
    if (inst.status != InstanceStatus::kBound) continue;
    inst.status = InstanceStatus::kUntried;
    inst.outputs = inst.placeholders;
  }
}

}  // namespace labplan::streams
