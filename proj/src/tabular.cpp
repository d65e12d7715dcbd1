#include "rl4s/tabular.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "rl4s/exact.hpp"

namespace rl4s {

double StepSizeSchedule::alpha(std::int64_t previous_visits) const {
  if (!(c > 0.0)) throw PreconditionError("step size constant must be positive");
  if (kind == ScheduleKind::kConstant) return std::min(c, 1.0);
  return c / (c + static_cast<double>(previous_visits));
}

LearnerState LearnerState::initial(int n_states, int n_actions, ValueKind kind, double value) {
  LearnerState st;
  st.q = QTable::filled(n_states, n_actions, value, kind);
  st.visit_counts.assign(static_cast<std::size_t>(n_states) * n_actions, 0);
  return st;
}

void survival_q_update(LearnerState& state, const ExperienceTuple& tuple, const StepSizeSchedule& schedule) {
  auto& q = state.q;
  if (tuple.s < 0 || tuple.s >= q.n_states || tuple.s_next < 0 || tuple.s_next >= q.n_states ||
      tuple.a < 0 || tuple.a >= q.n_actions) {
    throw PreconditionError("survival_q_update: tuple ids out of range");
  }
  const auto idx = static_cast<std::size_t>(tuple.s) * q.n_actions + tuple.a;
  const double alpha = schedule.alpha(state.visit_counts[idx]);
  const double target = tuple.released ? 1.0 : (1.0 - tuple.h) * q.row_max(tuple.s_next);
  q.values[idx] = (1.0 - alpha) * q.values[idx] + alpha * target;
  ++state.visit_counts[idx];
  ++state.steps;
}

void baseline_q_update(LearnerState& state, const RewardTransition& tr, double gamma,
                       const StepSizeSchedule& schedule) {
  auto& q = state.q;
  if (tr.s < 0 || tr.s >= q.n_states || tr.s_next < 0 || tr.s_next >= q.n_states || tr.a < 0 ||
      tr.a >= q.n_actions) {
    throw PreconditionError("baseline_q_update: transition ids out of range");
  }
  const auto idx = static_cast<std::size_t>(tr.s) * q.n_actions + tr.a;
  const double alpha = schedule.alpha(state.visit_counts[idx]);
  const double target = tr.reward + (tr.terminal ? 0.0 : gamma * q.row_max(tr.s_next));
  q.values[idx] = (1.0 - alpha) * q.values[idx] + alpha * target;
  ++state.visit_counts[idx];
  ++state.steps;
}

double policy_match_fraction(const HazardMdp& mdp, const QTable& q, const QTable& reference) {
  const auto transient = mdp.transient_states();
  if (transient.empty()) return 1.0;
  int matches = 0;
  for (StateId s : transient) {
    const auto row = q.row(s);
    const auto a = static_cast<ActionId>(std::max_element(row.begin(), row.end()) - row.begin());
    matches += reference(s, a) >= reference.row_max(s) - 1e-9 ? 1 : 0;
  }
  return static_cast<double>(matches) / static_cast<double>(transient.size());
}

LearnerRun run_learner(const HazardMdp& mdp, const Policy& exploration, const LearnerConfig& config,
                       Rng& rng, std::span<const double> start) {
  require_valid(mdp);
  if (exploration.n_states() != mdp.n_states || exploration.n_actions() != mdp.n_actions) {
    throw PreconditionError("run_learner: exploration policy shape does not match the MDP");
  }
  if (config.n_updates < 0 || config.eval_every <= 0 || config.max_episode_steps < 1) {
    throw PreconditionError("run_learner: n_updates >= 0, eval_every > 0, max_episode_steps >= 1 required");
  }
  const auto transient = mdp.transient_states();
  if (transient.empty()) throw PreconditionError("run_learner: MDP has no transient state");

  std::vector<double> start_dist(start.begin(), start.end());
  if (start_dist.empty()) {
    start_dist.assign(static_cast<std::size_t>(mdp.n_states), 0.0);
    for (StateId s : transient) start_dist[s] = 1.0 / static_cast<double>(transient.size());
  } else if (start_dist.size() != static_cast<std::size_t>(mdp.n_states)) {
    throw PreconditionError("run_learner: start distribution length does not match the MDP");
  }

  LearnerRun run;
  for (StateId s = 0; s < mdp.n_states; ++s) {
    for (ActionId a = 0; a < mdp.n_actions; ++a) {
      if (exploration.prob(s, a) <= 0.0) {
        run.warnings.push_back("exploration policy never takes action " + std::to_string(a) + " in state " +
                               std::to_string(s) + "; convergence is not guaranteed");
      }
    }
  }

  const bool survival = config.kind == LearnerKind::kSurvival;
  const QTable reference = survival ? survival_value_iteration(mdp).q
                                    : baseline_value_iteration(mdp, config.gamma).q;
  run.state = LearnerState::initial(mdp.n_states, mdp.n_actions,
                                    survival ? ValueKind::kSurvival : ValueKind::kReturn);
  auto record = [&] {
    run.curve.push_back({run.state.steps, sup_distance(run.state.q, reference),
                         policy_match_fraction(mdp, run.state.q, reference)});
  };
  record();

  StateId s = sample_categorical(rng, start_dist);
  int episode_steps = 0;
  while (run.state.steps < config.n_updates) {
    const ActionId a = exploration.sample(s, rng);
    StateId next = s;
    bool restart = false;
    if (mdp.is_absorbing(s)) {
      if (survival) {
        survival_q_update(run.state, {s, a, s, mdp.h(s, a), mdp.is_release(s), false}, config.schedule);
      } else {
        baseline_q_update(run.state, {s, a, s, 0.0, true}, config.gamma, config.schedule);
      }
      restart = true;
    } else {
      const bool died = uniform01(rng) < mdp.h(s, a);
      const StateId kernel_next = sample_transition(mdp, s, a, rng);
      if (survival) {
        survival_q_update(run.state, {s, a, kernel_next, mdp.h(s, a), false, died}, config.schedule);
      } else {
        const StateId entered = died ? mdp.death_state() : kernel_next;
        const double reward = mdp.is_release(entered) ? 1.0 : mdp.is_death(entered) ? -1.0 : 0.0;
        baseline_q_update(run.state, {s, a, entered, reward, mdp.is_absorbing(entered)}, config.gamma,
                          config.schedule);
      }
      next = died ? mdp.death_state() : kernel_next;
      ++episode_steps;
      // The baseline has nothing to learn at absorbing states.
      if (!survival && mdp.is_absorbing(next)) restart = true;
      if (episode_steps >= config.max_episode_steps && !mdp.is_absorbing(next)) restart = true;
    }
    if (restart) {
      next = sample_categorical(rng, start_dist);
      episode_steps = 0;
    }
    s = next;
    if (run.state.steps % config.eval_every == 0) record();
  }
  if (run.curve.back().step != run.state.steps) record();
  return run;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "step,sup_error,policy_match_fraction\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g\n", static_cast<long long>(p.step), p.sup_error,
                  p.policy_match_fraction);
    out += buf;
  }
  return out;
}

}  // namespace rl4s
