#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "labplan/model.hpp"
#include "labplan/pddl.hpp"
#include "labplan/temporal.hpp"

namespace labplan::streams {

class StreamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// type -> objects of that type or any subtype, in a fixed order.
using Universe = std::map<std::string, std::vector<std::string>>;

Universe make_universe(const pddl::Domain& dom, const std::map<std::string, std::string>& objects);
/// Constants and problem objects of `prob`, plus any extra typed objects.
Universe make_universe(const pddl::Domain& dom, const pddl::Problem& prob,
                       const std::map<std::string, std::string>& extra = {});

/// Next global time after an agent that started at `t_agent` finishes an
/// action of length `T_action`, observed at clock `t`. None when the clock
/// is outside the action's window or the result reaches t_max.
std::optional<std::int64_t> update_time(std::int64_t t_agent, std::int64_t t, std::int64_t T_action,
                                        std::int64_t t_max);

struct GeneratorCall {
  const pddl::StreamSpec& spec;
  const std::vector<std::string>& inputs;
  const temporal::DurativeConfig* config = nullptr;
  std::uint64_t seed = 0;
};

/// Returns candidate output tuples in preference order; empty means exhausted.
using Generator = std::function<std::vector<std::vector<std::string>>(const GeneratorCall&)>;

class GeneratorRegistry {
 public:
  /// Registry holding update_time, constant, table-lookup and sample-token.
  static GeneratorRegistry with_builtins();

  void add(const std::string& name, Generator g) { generators_[name] = std::move(g); }
  bool contains(const std::string& name) const { return generators_.count(name) > 0; }
  /// Throws StreamError "no generator registered: <name>".
  const Generator& get(const std::string& name) const;

 private:
  std::map<std::string, Generator> generators_;
};

/// Evaluates every eager stream over all admissible input bindings and adds
/// the cost functions cost_start_a(t) = t and cost_end_a = D_a for each
/// action with a configured duration. Timing values come from the universe.
FactSet eval_eager(const pddl::StreamSpecSet& specs, const FactSet& base, const temporal::DurativeConfig& cfg,
                   const Universe& universe, const GeneratorRegistry& registry = GeneratorRegistry::with_builtins(),
                   const std::string& timing_type = "timing");

/// Parses a timing object name "t<seconds>".
std::optional<std::int64_t> timing_value(const std::string& object);

enum class InstanceStatus { kUntried, kBound, kFailed };

struct StreamInstance {
  const pddl::StreamSpec* spec = nullptr;
  std::vector<std::string> inputs;
  /// Placeholders while untried, concrete objects once bound.
  std::vector<std::string> outputs;
  std::vector<std::string> placeholders;
  InstanceStatus status = InstanceStatus::kUntried;
  int depth = 1;

  /// "name(a,b)"
  std::string id() const;
};

struct BindResult {
  bool ok = false;
  FactSet facts;
  /// Identifier of the failing instance when !ok.
  std::string failed;
};

inline constexpr int kMaxPlaceholderDepth = 3;

bool is_placeholder(const std::string& object);

/// Mutable stream state of one planning episode: optimistic instances, their
/// placeholders and the blacklist of failed instances.
class StreamEpisode {
 public:
  StreamEpisode(const pddl::StreamSpecSet& specs, const GeneratorRegistry& registry, std::uint64_t seed = 0,
                const temporal::DurativeConfig* config = nullptr);

  /// Creates instances for every optimistic stream whose domain facts hold in
  /// `base` (plus earlier optimistic facts) and returns all optimistic facts
  /// of live instances. Repeated calls on the same base add nothing.
  FactSet instantiate_optimistic(const FactSet& base, const Universe& universe);

  /// Runs the generator of one untried instance.
  BindResult bind_stream(std::size_t index);

  /// Instance that introduced `placeholder`, or -1.
  int producer_of(const std::string& placeholder) const;
  const std::vector<StreamInstance>& instances() const { return instances_; }
  std::vector<StreamInstance>& instances() { return instances_; }
  const std::set<std::string>& blacklist() const { return blacklist_; }
  void blacklist(std::size_t index);
  /// Returns bound instances to untried and restores their placeholders.
  void reset_bound();

 private:
  FactSet facts_of(const StreamInstance& inst) const;

  const pddl::StreamSpecSet& specs_;
  const GeneratorRegistry& registry_;
  std::uint64_t seed_;
  const temporal::DurativeConfig* config_;
  std::vector<StreamInstance> instances_;
  std::map<std::string, std::size_t> by_key_;
  std::map<std::string, std::size_t> by_placeholder_;
  std::set<std::string> blacklist_;
  int next_placeholder_ = 1;
};

/// All bindings of `inputs` (typed) under which every template in `domain`
/// is in `facts`. Inputs absent from the templates range over `universe`.
std::vector<std::vector<std::string>> match_inputs(const std::vector<pddl::TypedName>& inputs,
                                                   const std::vector<pddl::Atom>& domain,
                                                   const std::set<GroundAtom>& facts, const Universe& universe);

}  // namespace labplan::streams
