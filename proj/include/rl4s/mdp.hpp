#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rl4s/rng.hpp"

namespace rl4s {

using StateId = int;
using ActionId = int;

/// Violated operation precondition or malformed input (maps to CLI exit 2).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Iterative method did not reach its tolerance (maps to CLI exit 3).
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Finite MDP with a per-(state, action) discrete hazard and absorbing
/// release/death states. Dense storage: `transition` is indexed
/// [(s * n_actions + a) * n_states + s_next], `hazard` is [s * n_actions + a].
struct HazardMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;
  std::vector<double> hazard;
  std::vector<bool> release;
  std::vector<bool> death;
  double h_min = 0.0;

  /// All-zero MDP of the given shape; callers fill in rows and flags.
  static HazardMdp zeros(int n_states, int n_actions);

  [[nodiscard]] std::span<const double> row(StateId s, ActionId a) const {
    return {transition.data() + index(s, a) * static_cast<std::size_t>(n_states),
            static_cast<std::size_t>(n_states)};
  }
  [[nodiscard]] std::span<double> row(StateId s, ActionId a) {
    return {transition.data() + index(s, a) * static_cast<std::size_t>(n_states),
            static_cast<std::size_t>(n_states)};
  }
  [[nodiscard]] double p(StateId s, ActionId a, StateId next) const { return row(s, a)[next]; }
  [[nodiscard]] double h(StateId s, ActionId a) const { return hazard[index(s, a)]; }
  double& h(StateId s, ActionId a) { return hazard[index(s, a)]; }

  [[nodiscard]] bool is_release(StateId s) const { return release[s]; }
  [[nodiscard]] bool is_death(StateId s) const { return death[s]; }
  [[nodiscard]] bool is_absorbing(StateId s) const { return release[s] || death[s]; }

  /// The designated death state (lowest-index death state), or -1.
  [[nodiscard]] StateId death_state() const;
  [[nodiscard]] std::vector<StateId> transient_states() const;
  [[nodiscard]] bool in_range(StateId s, ActionId a) const {
    return s >= 0 && s < n_states && a >= 0 && a < n_actions;
  }

 private:
  [[nodiscard]] std::size_t index(StateId s, ActionId a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(n_actions) +
           static_cast<std::size_t>(a);
  }
};

struct Violation {
  std::string invariant;
  std::string location;

  [[nodiscard]] std::string describe() const { return invariant + " at " + location; }
};

/// Checks every HazardMdp invariant; an empty result means the MDP is valid.
std::vector<Violation> validate(const HazardMdp& mdp);

/// Throws PreconditionError naming the first violation.
void require_valid(const HazardMdp& mdp);

/// Stationary Markov policy. Deterministic policies keep their action list
/// and are also materialized as a one-hot probability table.
class Policy {
 public:
  static Policy deterministic(std::vector<ActionId> actions, int n_actions);
  static Policy stochastic(int n_states, int n_actions, std::vector<double> probs);
  static Policy uniform(int n_states, int n_actions);

  [[nodiscard]] int n_states() const { return n_states_; }
  [[nodiscard]] int n_actions() const { return n_actions_; }
  [[nodiscard]] bool is_deterministic() const { return deterministic_; }

  [[nodiscard]] double prob(StateId s, ActionId a) const {
    return probs_[static_cast<std::size_t>(s) * n_actions_ + a];
  }
  [[nodiscard]] std::span<const double> row(StateId s) const {
    return {probs_.data() + static_cast<std::size_t>(s) * n_actions_,
            static_cast<std::size_t>(n_actions_)};
  }
  /// Deterministic action; for stochastic policies the most probable action
  /// (lowest index on ties).
  [[nodiscard]] ActionId action(StateId s) const;
  [[nodiscard]] ActionId sample(StateId s, Rng& rng) const;
  [[nodiscard]] const std::vector<double>& probabilities() const { return probs_; }

 private:
  Policy(int n_states, int n_actions, std::vector<double> probs, bool deterministic)
      : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)),
        deterministic_(deterministic) {}

  int n_states_ = 0;
  int n_actions_ = 0;
  std::vector<double> probs_;
  bool deterministic_ = false;
};

enum class ValueKind { kSurvival, kReturn };

/// |S| x |A| table of Q values, row-major.
struct QTable {
  int n_states = 0;
  int n_actions = 0;
  ValueKind kind = ValueKind::kSurvival;
  std::vector<double> values;

  static QTable filled(int n_states, int n_actions, double value,
                       ValueKind kind = ValueKind::kSurvival);

  double& operator()(StateId s, ActionId a) {
    return values[static_cast<std::size_t>(s) * n_actions + a];
  }
  double operator()(StateId s, ActionId a) const {
    return values[static_cast<std::size_t>(s) * n_actions + a];
  }
  [[nodiscard]] std::span<const double> row(StateId s) const {
    return {values.data() + static_cast<std::size_t>(s) * n_actions,
            static_cast<std::size_t>(n_actions)};
  }
  [[nodiscard]] double row_max(StateId s) const;
  [[nodiscard]] bool same_shape(const QTable& other) const {
    return n_states == other.n_states && n_actions == other.n_actions;
  }
};

/// Sup-norm distance; throws PreconditionError on shape mismatch.
double sup_distance(const QTable& lhs, const QTable& rhs);

/// One learning sample (s, a, s', h, R(s)). `died` records whether the step
/// actually ended in death; survival targets never bootstrap through it
/// because the hazard already discounts that outcome.
struct ExperienceTuple {
  StateId s = 0;
  ActionId a = 0;
  StateId s_next = 0;
  double h = 0.0;
  bool released = false;
  bool died = false;
};

enum class Outcome { kReleased, kDied, kTruncated };

const char* to_string(Outcome outcome);
Outcome outcome_from_string(const std::string& name);

struct Step {
  StateId state = 0;
  ActionId action = 0;
  StateId next_state = 0;
  int t = 0;
};

/// Transient steps of one stay. For absorbed episodes `terminal_state` is the
/// release/death state entered at `terminal_step`; truncated episodes keep
/// the last visited state there.
struct Episode {
  std::vector<Step> steps;
  Outcome outcome = Outcome::kTruncated;
  StateId terminal_state = -1;
  int terminal_step = 0;

  [[nodiscard]] bool absorbed() const { return outcome != Outcome::kTruncated; }
};

struct TrajectoryDataset {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Episode> episodes;

  [[nodiscard]] std::size_t transient_steps() const;
  /// Transient steps plus one terminal observation per absorbed episode.
  [[nodiscard]] std::size_t observations() const;
  [[nodiscard]] std::size_t count(Outcome outcome) const;
  /// Deaths over absorbed episodes; truncated episodes are excluded. 0 when
  /// nothing was absorbed.
  [[nodiscard]] double mortality() const;
};

/// Empty when the dataset invariants hold. With an MDP also checks that the
/// ids are in range and terminal states carry the matching flag.
std::vector<std::string> validate(const TrajectoryDataset& data, const HazardMdp* mdp = nullptr);

struct StepResult {
  bool died = false;
  StateId next_state = 0;
};

/// Draws s' ~ p(.|s,a) only, ignoring the hazard.
StateId sample_transition(const HazardMdp& mdp, StateId s, ActionId a, Rng& rng);

/// Bernoulli(h(s,a)) death draw first; on survival s' ~ p(.|s,a).
/// Throws PreconditionError when s is absorbing.
StepResult sample_step(const HazardMdp& mdp, StateId s, ActionId a, Rng& rng);

/// Follows `policy` from s0 until absorption or `max_steps` transient steps.
Episode rollout(const HazardMdp& mdp, const Policy& policy, StateId s0, Rng& rng, int max_steps);

struct RandomMdpOptions {
  int n_transient = 4;
  int n_actions = 2;
  int n_release = 1;
  double h_min = 0.05;
  double h_max = 0.5;
  /// Each kernel row puts mass on this many randomly chosen targets
  /// (transient or release); 0 means all of them.
  int support = 0;
};

/// Random valid hazard-MDP: transient states first, then release states, then
/// one death state. Transient hazards are uniform in [h_min, h_max].
HazardMdp make_random_mdp(const RandomMdpOptions& options, Rng& rng);

}  // namespace rl4s
