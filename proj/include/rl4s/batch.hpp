#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rl4s/features.hpp"
#include "rl4s/hazard.hpp"
#include "rl4s/io.hpp"
#include "rl4s/mdp.hpp"

namespace rl4s {

inline constexpr const char* kRl4sConfigSchema = "rl4s-config/1";
inline constexpr const char* kFittedQSchema = "fitted-q/1";

/// Linear Q model over a shared feature map. Survival predictions are
/// clamped to [0,1] when read.
struct FittedQModel {
  FeatureMap features;
  ValueKind kind = ValueKind::kSurvival;
  std::vector<double> weights;
  /// Mean squared TD error of the last epoch.
  double final_loss = 0.0;
  int iterations = 0;

  [[nodiscard]] double raw(StateId s, ActionId a) const;
  [[nodiscard]] double predict(StateId s, ActionId a) const;
  [[nodiscard]] double max_predict(StateId s) const;
  /// predict() for every pair.
  [[nodiscard]] QTable to_qtable() const;
};

/// Lagged copy of the online weights.
struct TargetParams {
  std::vector<double> weights;
  double tau = 0.005;

  /// weights <- tau * online + (1 - tau) * weights.
  void polyak_update(const std::vector<double>& online);
};

struct Rl4sConfig {
  FeatureMode q_features = FeatureMode::kTabular;
  HazardFitConfig hazard;
  int batch_size = 124;
  double lr = 3e-4;
  double momentum = 0.9;
  double tau = 0.005;
  /// Total optimizer steps, split evenly across epochs.
  int n_iterations = 51932;
  int epochs = 7;
  /// Average the checkpoints of this many final epochs; 0 or 1 disables.
  int average_last = 3;
  /// Uniform discount of the terminal-reward baseline.
  double gamma = 0.999;
  /// Optional uniform discount multiplied onto (1 - h-hat) for RL4S.
  double extra_gamma = 1.0;
  /// Window of the "last-k-step" strata in the Q report.
  int last_k = 24;
};

/// Empty when valid; each message names the field.
std::vector<std::string> validate(const Rl4sConfig& config);
Json to_json(const Rl4sConfig& config);
/// Missing fields keep their defaults.
Rl4sConfig rl4s_config_from_json(const Json& j);

/// One tuple per dataset observation: every transient step with h = h-hat(s,a),
/// plus one terminal observation per absorbed episode (released=true at a
/// release state, h = 1 at the death state).
std::vector<ExperienceTuple> make_training_tuples(const TrajectoryDataset& data,
                                                  const HazardModel& hazard);

/// Fitted survival-Q iteration. Targets
///   y = 1{R(s)} + 1{not R(s)} (1 - h) extra_gamma max_a' Q_target(s',a');
/// tuples flagged `died` are skipped because h already accounts for them.
/// Minibatches are consecutive slices of a fresh shuffle on every pass.
/// Throws PreconditionError on empty input, ConvergenceError on a
/// non-finite loss.
FittedQModel fit_rl4s(const std::vector<ExperienceTuple>& tuples, int n_states, int n_actions,
                      const Rl4sConfig& config, std::uint64_t seed);

/// Same machinery with reward +1/-1 on entering release/death and uniform
/// gamma; absorbing states regress to 0.
FittedQModel fit_baseline(const TrajectoryDataset& data, const Rl4sConfig& config,
                          std::uint64_t seed);

/// Greedy policy of a fitted model (lowest action on ties).
Policy greedy_policy(const FittedQModel& model);

struct QuartileSummary {
  std::size_t count = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Linear-interpolated quartiles; count 0 for an empty sample.
QuartileSummary summarize(std::vector<double> values);

struct StratifiedQReport {
  int last_k = 24;
  /// Stratum name -> max-min scaled mean-over-actions Q of its dataset steps.
  /// Strata: released, died, released_last_k, died_last_k. Empty strata are
  /// left out.
  std::map<std::string, std::vector<double>> values;
  std::map<std::string, QuartileSummary> summary;

  /// median(released_last_k) - median(died_last_k); 0 if either is absent.
  [[nodiscard]] double separation() const;
};

/// Scores every transient dataset step by the mean of its Q row, rescales
/// the scores over all steps so the smallest maps to 0 and the largest to 1
/// (all 0 when constant), then splits them by episode outcome and by
/// distance to the episode end. Truncated episodes join no stratum.
StratifiedQReport stratified_q_report(const QTable& q, const TrajectoryDataset& data, int last_k = 24);

/// Long-format CSV: stratum,statistic,value.
std::string to_csv(const StratifiedQReport& report);
Json to_json(const StratifiedQReport& report);

struct ActionDistributionReport {
  int n_actions = 0;
  int last_k = 24;
  /// Row name -> percentage of dataset states per action (sums to 100).
  /// Includes an "observed" row with the dataset's own actions.
  std::vector<std::pair<std::string, std::vector<double>>> actions;
  /// Row name -> percentage of vasopressor actions over steps of death-bound
  /// episodes, by steps-to-death 1..last_k, then one bucket for > last_k.
  std::vector<std::pair<std::string, std::vector<double>>> vasopressor;
};

ActionDistributionReport action_distribution_report(
    const std::vector<std::pair<std::string, Policy>>& policies, const TrajectoryDataset& data,
    int last_k = 24);

/// Long-format CSVs: policy,action,label,percent and policy,steps_to_death,percent.
std::string actions_csv(const ActionDistributionReport& report);
std::string vasopressor_csv(const ActionDistributionReport& report);
Json to_json(const ActionDistributionReport& report);

Json to_json(const FittedQModel& model);
FittedQModel fitted_q_from_json(const Json& j);

}  // namespace rl4s
