#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rl4s/mdp.hpp"

namespace rl4s {

enum class ScheduleKind { kHarmonic, kConstant };

/// HARMONIC: alpha = c / (c + n) where n counts earlier updates of the same
/// (s,a) pair, so every pair sees sum(alpha) = inf and sum(alpha^2) < inf.
/// CONSTANT: alpha = c, for diagnostics only.
struct StepSizeSchedule {
  ScheduleKind kind = ScheduleKind::kHarmonic;
  double c = 1.0;

  [[nodiscard]] double alpha(std::int64_t previous_visits) const;
};

struct LearnerState {
  QTable q;
  std::vector<std::int64_t> visit_counts;
  std::int64_t steps = 0;

  static LearnerState initial(int n_states, int n_actions, ValueKind kind, double value = 0.0);
};

/// Q(s,a) <- (1-alpha) Q(s,a) + alpha [1{R(s)=1} + 1{R(s)=0} (1-h) max_a' Q(s',a')].
/// Only the (s,a) entry and its visit count change.
void survival_q_update(LearnerState& state, const ExperienceTuple& tuple, const StepSizeSchedule& schedule);

/// Transition with an explicit reward for the terminal-reward baseline.
struct RewardTransition {
  StateId s = 0;
  ActionId a = 0;
  StateId s_next = 0;
  double reward = 0.0;
  /// Entering an absorbing state: no bootstrap.
  bool terminal = false;
};

/// Watkins Q-learning: Q(s,a) <- (1-alpha) Q(s,a) + alpha [r + gamma max Q(s',.)].
void baseline_q_update(LearnerState& state, const RewardTransition& transition, double gamma,
                       const StepSizeSchedule& schedule);

enum class LearnerKind { kSurvival, kBaseline };

struct LearnerConfig {
  LearnerKind kind = LearnerKind::kSurvival;
  StepSizeSchedule schedule;
  std::int64_t n_updates = 1'000'000;
  std::int64_t eval_every = 10'000;
  double gamma = 0.999;
  /// Rollouts are cut (and restarted) after this many transient steps.
  int max_episode_steps = 10'000;
};

struct CurvePoint {
  std::int64_t step = 0;
  double sup_error = 0.0;
  double policy_match_fraction = 0.0;
};

struct LearnerRun {
  LearnerState state;
  std::vector<CurvePoint> curve;
  std::vector<std::string> warnings;
};

/// Generates experience by episodic rollouts of `exploration` and applies one
/// update per tuple. The hazard in each survival tuple is the true h(s,a), and
/// s' is drawn from the kernel so the target is unbiased; the death draw only
/// decides where the rollout goes next. On absorption a tuple at the absorbing
/// state is applied and the rollout restarts from `start` (uniform over
/// transient states when empty). The curve records the sup error against the
/// exact optimal table of the matching objective.
LearnerRun run_learner(const HazardMdp& mdp, const Policy& exploration, const LearnerConfig& config,
                       Rng& rng, std::span<const double> start = {});

/// Fraction of transient states whose greedy action under `q` is optimal
/// under `reference` (within 1e-9 of the row maximum).
double policy_match_fraction(const HazardMdp& mdp, const QTable& q, const QTable& reference);

/// CSV with header `step,sup_error,policy_match_fraction`.
std::string curve_csv(const std::vector<CurvePoint>& curve);

}  // namespace rl4s
