#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rl4s/io.hpp"
#include "rl4s/mdp.hpp"

namespace rl4s {

inline constexpr const char* kCohortSpecSchema = "cohort-spec/1";

/// Parameters of a synthetic critically-ill cohort. Transient states form a
/// severity ladder 0 (mildest) .. n_severity_levels-1, followed by one
/// release state and one death state.
struct CohortSpec {
  std::string name = "custom";
  int n_severity_levels = 8;
  /// Action a doses fluids at a % 3 and vasopressors at (a / 3) % 3.
  int n_actions = 9;
  double h_min = 0.02;
  double h_max = 0.4;
  /// Extra probability of moving down the ladder for a perfectly matched treatment.
  double treatment_effect = 0.5;
  /// Weight of the random jitter mixed into every kernel row.
  double noise = 0.05;
  double behavior_epsilon = 0.3;
  int n_episodes = 20000;
  int max_steps = 200;
  std::uint64_t seed = 1;
  /// Mean of the admission bell, as a fraction of the ladder.
  double start_center = 0.5;
  /// Standard deviation of the admission bell, in levels.
  double start_spread = 1.0;

  [[nodiscard]] int n_states() const { return n_severity_levels + 2; }
  [[nodiscard]] StateId release_state() const { return n_severity_levels; }
  [[nodiscard]] StateId death_state() const { return n_severity_levels + 1; }
};

/// Empty when every invariant holds; each message names the field.
std::vector<std::string> validate(const CohortSpec& spec);

Json to_json(const CohortSpec& spec);
/// Missing optional fields keep their defaults; wrong types throw PreconditionError.
CohortSpec cohort_spec_from_json(const Json& j);

struct ActionDose {
  int fluid = 0;
  int vasopressor = 0;
};

inline ActionDose action_dose(ActionId a) { return {a % 3, (a / 3) % 3}; }
std::string action_label(ActionId a);

/// Severity-ladder hazard MDP; deterministic in spec.seed. Throws
/// PreconditionError for specs that would need negative probabilities.
HazardMdp generate_mdp(const CohortSpec& spec);

/// Hazard of severity level `level` (state-only, nondecreasing, convex).
double ladder_hazard(const CohortSpec& spec, int level);

/// Truncated discretized bell over severity levels; zero on absorbing states.
std::vector<double> start_distribution(const CohortSpec& spec);

/// Clinician analog: with probability 1 - epsilon the exact optimal action,
/// otherwise uniform.
Policy behavior_policy(const HazardMdp& mdp, const CohortSpec& spec);

/// spec.n_episodes rollouts from start_distribution. Episode i uses its own
/// stream derived from (seed, i), so the dataset does not depend on the order
/// in which episodes are produced.
TrajectoryDataset generate_dataset(const HazardMdp& mdp, const Policy& policy, const CohortSpec& spec,
                                   std::uint64_t seed);

}  // namespace rl4s
