#include "rl4s/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rl4s {
namespace {

constexpr double kRowTolerance = 1e-12;

std::string pair_location(StateId s, ActionId a) {
  return "(s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")";
}

}  // namespace

HazardMdp HazardMdp::zeros(int n_states, int n_actions) {
  if (n_states <= 0 || n_actions <= 0) {
    throw PreconditionError("HazardMdp needs at least one state and one action");
  }
  HazardMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  const auto pairs = static_cast<std::size_t>(n_states) * static_cast<std::size_t>(n_actions);
  mdp.transition.assign(pairs * static_cast<std::size_t>(n_states), 0.0);
  mdp.hazard.assign(pairs, 0.0);
  mdp.release.assign(static_cast<std::size_t>(n_states), false);
  mdp.death.assign(static_cast<std::size_t>(n_states), false);
  return mdp;
}

StateId HazardMdp::death_state() const {
  for (StateId s = 0; s < n_states; ++s) {
    if (death[s]) return s;
  }
  return -1;
}

std::vector<StateId> HazardMdp::transient_states() const {
  std::vector<StateId> out;
  for (StateId s = 0; s < n_states; ++s) {
    if (!is_absorbing(s)) out.push_back(s);
  }
  return out;
}

std::vector<Violation> validate(const HazardMdp& mdp) {
  std::vector<Violation> out;
  if (mdp.n_states <= 0 || mdp.n_actions <= 0) {
    out.push_back({"non-empty state and action spaces", "shape"});
    return out;
  }
  const auto S = static_cast<std::size_t>(mdp.n_states);
  const auto A = static_cast<std::size_t>(mdp.n_actions);
  if (mdp.transition.size() != S * A * S || mdp.hazard.size() != S * A ||
      mdp.release.size() != S || mdp.death.size() != S) {
    out.push_back({"array sizes match n_states/n_actions", "shape"});
    return out;
  }
  if (!(mdp.h_min > 0.0)) out.push_back({"h_min > 0", "h_min"});

  bool any_transient_hazard = false;
  for (StateId s = 0; s < mdp.n_states; ++s) {
    const std::string state_loc = "s=" + std::to_string(s);
    if (mdp.is_release(s) && mdp.is_death(s)) {
      out.push_back({"release and death flags are disjoint", state_loc});
    }
    for (ActionId a = 0; a < mdp.n_actions; ++a) {
      const auto row = mdp.row(s, a);
      bool entries_ok = true;
      for (double p : row) entries_ok = entries_ok && std::isfinite(p) && p >= 0.0;
      const double sum = std::accumulate(row.begin(), row.end(), 0.0);
      if (!entries_ok || std::abs(sum - 1.0) > kRowTolerance) {
        out.push_back({"transition row is a probability vector summing to 1", pair_location(s, a)});
      }
      const double h = mdp.h(s, a);
      if (!(h >= 0.0 && h <= 1.0)) {
        out.push_back({"hazard in [0,1]", pair_location(s, a)});
        continue;
      }
      if (mdp.is_absorbing(s) && row[s] != 1.0) {
        out.push_back({"absorbing state self-transitions with probability 1", pair_location(s, a)});
      }
      if (mdp.is_death(s) && h != 1.0) {
        out.push_back({"death state hazard equals 1", pair_location(s, a)});
      }
      if (!mdp.is_absorbing(s)) {
        if (h < mdp.h_min) out.push_back({"hazard >= h_min on transient states", pair_location(s, a)});
        if (h > 0.0) any_transient_hazard = true;
      }
    }
  }
  if (any_transient_hazard && mdp.death_state() < 0) {
    out.push_back({"a death state exists when transient hazards are positive", "death"});
  }
  return out;
}

void require_valid(const HazardMdp& mdp) {
  const auto violations = validate(mdp);
  if (!violations.empty()) {
    throw PreconditionError("invalid hazard MDP: " + violations.front().describe());
  }
}

Policy Policy::deterministic(std::vector<ActionId> actions, int n_actions) {
  if (n_actions <= 0) throw PreconditionError("policy needs at least one action");
  const int n_states = static_cast<int>(actions.size());
  std::vector<double> probs(static_cast<std::size_t>(n_states) * n_actions, 0.0);
  for (int s = 0; s < n_states; ++s) {
    const ActionId a = actions[s];
    if (a < 0 || a >= n_actions) {
      throw PreconditionError("deterministic policy action out of range at s=" + std::to_string(s));
    }
    probs[static_cast<std::size_t>(s) * n_actions + a] = 1.0;
  }
  return Policy(n_states, n_actions, std::move(probs), true);
}

Policy Policy::stochastic(int n_states, int n_actions, std::vector<double> probs) {
  if (n_states <= 0 || n_actions <= 0 ||
      probs.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw PreconditionError("stochastic policy table has the wrong shape");
  }
  for (int s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const double p = probs[static_cast<std::size_t>(s) * n_actions + a];
      if (!(p >= 0.0 && p <= 1.0)) {
        throw PreconditionError("policy probability out of [0,1] at s=" + std::to_string(s));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowTolerance) {
      throw PreconditionError("policy row does not sum to 1 at s=" + std::to_string(s));
    }
  }
  return Policy(n_states, n_actions, std::move(probs), false);
}

Policy Policy::uniform(int n_states, int n_actions) {
  if (n_states <= 0 || n_actions <= 0) throw PreconditionError("uniform policy needs a shape");
  std::vector<double> probs(static_cast<std::size_t>(n_states) * n_actions, 1.0 / n_actions);
  // Renormalize the last entry so each row sums to 1 to within round-off.
  for (int s = 0; s < n_states; ++s) {
    double head = 0.0;
    for (int a = 0; a + 1 < n_actions; ++a) head += probs[static_cast<std::size_t>(s) * n_actions + a];
    probs[static_cast<std::size_t>(s) * n_actions + n_actions - 1] = 1.0 - head;
  }
  return Policy(n_states, n_actions, std::move(probs), false);
}

ActionId Policy::action(StateId s) const {
  const auto r = row(s);
  return static_cast<ActionId>(std::max_element(r.begin(), r.end()) - r.begin());
}

ActionId Policy::sample(StateId s, Rng& rng) const {
  if (deterministic_) return action(s);
  return sample_categorical(rng, row(s));
}

QTable QTable::filled(int n_states, int n_actions, double value, ValueKind kind) {
  QTable q;
  q.n_states = n_states;
  q.n_actions = n_actions;
  q.kind = kind;
  q.values.assign(static_cast<std::size_t>(n_states) * n_actions, value);
  return q;
}

double QTable::row_max(StateId s) const {
  const auto r = row(s);
  return *std::max_element(r.begin(), r.end());
}

double sup_distance(const QTable& lhs, const QTable& rhs) {
  if (!lhs.same_shape(rhs)) throw PreconditionError("Q tables differ in shape");
  double out = 0.0;
  for (std::size_t i = 0; i < lhs.values.size(); ++i) {
    out = std::max(out, std::abs(lhs.values[i] - rhs.values[i]));
  }
  return out;
}

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::kReleased: return "RELEASED";
    case Outcome::kDied: return "DIED";
    case Outcome::kTruncated: return "TRUNCATED";
  }
  return "TRUNCATED";
}

Outcome outcome_from_string(const std::string& name) {
  if (name == "RELEASED") return Outcome::kReleased;
  if (name == "DIED") return Outcome::kDied;
  if (name == "TRUNCATED") return Outcome::kTruncated;
  throw PreconditionError("unknown episode outcome '" + name + "'");
}

std::size_t TrajectoryDataset::transient_steps() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.steps.size();
  return n;
}

std::size_t TrajectoryDataset::observations() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.steps.size() + (e.absorbed() ? 1 : 0);
  return n;
}

std::size_t TrajectoryDataset::count(Outcome outcome) const {
  return static_cast<std::size_t>(std::count_if(episodes.begin(), episodes.end(),
                                                [&](const Episode& e) { return e.outcome == outcome; }));
}

double TrajectoryDataset::mortality() const {
  const auto died = count(Outcome::kDied);
  const auto absorbed = died + count(Outcome::kReleased);
  return absorbed == 0 ? 0.0 : static_cast<double>(died) / static_cast<double>(absorbed);
}

std::vector<std::string> validate(const TrajectoryDataset& data, const HazardMdp* mdp) {
  std::vector<std::string> out;
  if (data.n_states <= 0 || data.n_actions <= 0) {
    out.emplace_back("dataset shape must be positive");
    return out;
  }
  if (mdp != nullptr && (mdp->n_states != data.n_states || mdp->n_actions != data.n_actions)) {
    out.emplace_back("dataset shape does not match the MDP");
    return out;
  }
  for (std::size_t i = 0; i < data.episodes.size(); ++i) {
    const auto& e = data.episodes[i];
    const std::string where = "episode " + std::to_string(i);
    int prev_t = -1;
    for (std::size_t k = 0; k < e.steps.size(); ++k) {
      const auto& st = e.steps[k];
      if (st.t <= prev_t) out.push_back(where + ": step indices not strictly increasing");
      prev_t = st.t;
      if (st.state < 0 || st.state >= data.n_states || st.next_state < 0 ||
          st.next_state >= data.n_states || st.action < 0 || st.action >= data.n_actions) {
        out.push_back(where + ": id out of range");
        continue;
      }
      if (k + 1 < e.steps.size() && e.steps[k + 1].state != st.next_state) {
        out.push_back(where + ": steps do not chain");
      }
      if (mdp != nullptr && mdp->is_absorbing(st.state)) {
        out.push_back(where + ": step from an absorbing state");
      }
    }
    if (e.absorbed()) {
      if (e.steps.empty() || e.steps.back().next_state != e.terminal_state) {
        out.push_back(where + ": terminal state does not follow the last step");
      }
      if (e.terminal_step <= prev_t) out.push_back(where + ": terminal step not after last step");
      if (mdp != nullptr && e.terminal_state >= 0 && e.terminal_state < data.n_states) {
        const bool ok = e.outcome == Outcome::kReleased ? mdp->is_release(e.terminal_state)
                                                        : mdp->is_death(e.terminal_state);
        if (!ok) out.push_back(where + ": terminal state flag does not match outcome");
      }
    }
  }
  return out;
}

StateId sample_transition(const HazardMdp& mdp, StateId s, ActionId a, Rng& rng) {
  return sample_categorical(rng, mdp.row(s, a));
}

StepResult sample_step(const HazardMdp& mdp, StateId s, ActionId a, Rng& rng) {
  if (!mdp.in_range(s, a)) throw PreconditionError("sample_step: state or action out of range");
  if (mdp.is_absorbing(s)) {
    throw PreconditionError("sample_step: state " + std::to_string(s) + " is absorbing");
  }
  if (uniform01(rng) < mdp.h(s, a)) {
    const StateId d = mdp.death_state();
    if (d < 0) throw PreconditionError("sample_step: death drawn but the MDP has no death state");
    return {true, d};
  }
  return {false, sample_transition(mdp, s, a, rng)};
}

Episode rollout(const HazardMdp& mdp, const Policy& policy, StateId s0, Rng& rng, int max_steps) {
  if (max_steps < 1) throw PreconditionError("rollout: max_steps must be >= 1");
  if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions) {
    throw PreconditionError("rollout: policy shape does not match the MDP");
  }
  Episode episode;
  StateId s = s0;
  for (int t = 0; t < max_steps; ++t) {
    const ActionId a = policy.sample(s, rng);
    const auto result = sample_step(mdp, s, a, rng);
    episode.steps.push_back({s, a, result.next_state, t});
    s = result.next_state;
    if (mdp.is_absorbing(s)) {
      episode.outcome = mdp.is_release(s) ? Outcome::kReleased : Outcome::kDied;
      episode.terminal_state = s;
      episode.terminal_step = t + 1;
      return episode;
    }
  }
  episode.outcome = Outcome::kTruncated;
  episode.terminal_state = s;
  episode.terminal_step = max_steps;
  return episode;
}

HazardMdp make_random_mdp(const RandomMdpOptions& options, Rng& rng) {
  if (options.n_transient < 1 || options.n_actions < 1 || options.n_release < 1 ||
      !(options.h_min > 0.0) || options.h_max < options.h_min || options.h_max > 1.0) {
    throw PreconditionError("make_random_mdp: invalid options");
  }
  const int n_live = options.n_transient + options.n_release;
  const int S = n_live + 1;
  auto mdp = HazardMdp::zeros(S, options.n_actions);
  mdp.h_min = options.h_min;
  for (int r = options.n_transient; r < n_live; ++r) mdp.release[r] = true;
  const StateId death = S - 1;
  mdp.death[death] = true;

  const int support = options.support <= 0 ? n_live : std::min(options.support, n_live);
  std::vector<int> targets(static_cast<std::size_t>(n_live));
  for (StateId s = 0; s < S; ++s) {
    for (ActionId a = 0; a < options.n_actions; ++a) {
      auto row = mdp.row(s, a);
      if (mdp.is_absorbing(s)) {
        row[s] = 1.0;
        mdp.h(s, a) = mdp.is_death(s) ? 1.0 : 0.0;
        continue;
      }
      mdp.h(s, a) = options.h_min + (options.h_max - options.h_min) * uniform01(rng);
      std::iota(targets.begin(), targets.end(), 0);
      // Partial Fisher-Yates picks `support` distinct targets.
      for (int k = 0; k < support; ++k) {
        std::swap(targets[k], targets[k + uniform_index(rng, n_live - k)]);
      }
      double total = 0.0;
      for (int k = 0; k < support; ++k) {
        const double w = 1e-3 + uniform01(rng);
        row[targets[k]] = w;
        total += w;
      }
      for (int k = 0; k < support; ++k) row[targets[k]] /= total;
    }
  }
  return mdp;
}

}  // namespace rl4s
