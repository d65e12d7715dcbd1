#pragma once

#include <vector>

#include "rl4s/features.hpp"
#include "rl4s/io.hpp"
#include "rl4s/mdp.hpp"

namespace rl4s {

inline constexpr const char* kHazardModelSchema = "hazard-model/1";

/// Bounds applied to hazard estimates before they are used as discounts.
inline constexpr double kHazardClampLow = 1e-6;
inline constexpr double kHazardClampHigh = 1.0 - 1e-6;

/// Logistic hazard model h-hat(s,a) = sigmoid(w . phi(s,a)).
struct HazardModel {
  FeatureMap features;
  std::vector<double> weights;
  double rebalance = 1.0;
  double final_loss = 0.0;
  int iterations = 0;

  [[nodiscard]] double logit(StateId s, ActionId a) const;
  /// Strictly inside (0,1): the logit is clamped to +-30.
  [[nodiscard]] double predict(StateId s, ActionId a) const;
  /// predict() clamped to [1e-6, 1 - 1e-6].
  [[nodiscard]] double discount_hazard(StateId s, ActionId a) const;
};

struct HazardExample {
  StateId s = 0;
  ActionId a = 0;
  int label = 0;
};

/// One example per transient step; label 1 iff the step ends in death.
/// Truncated episodes contribute their (label 0) steps. Throws
/// PreconditionError when the dataset has no steps.
std::vector<HazardExample> build_training_set(const TrajectoryDataset& data);

struct HazardFitConfig {
  FeatureMode mode = FeatureMode::kTabular;
  /// Weight of positive examples in the loss.
  double rebalance = 1.0;
  double lr = 1.0;
  double momentum = 0.5;
  int n_iters = 5000;
  /// Stop once the largest weight step falls below this.
  double tol = 1e-13;
};

/// Minimizes the rebalance-weighted logistic loss. Each weight's gradient is
/// scaled by the inverse of its diagonal curvature (times the number of
/// active features), then applied with heavy-ball momentum. Deterministic in
/// `rng`, which only jitters the initial weights.
HazardModel fit(const std::vector<HazardExample>& examples, int n_states, int n_actions,
                const HazardFitConfig& config, Rng& rng);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_predicted = 0.0;
  double observed_rate = 0.0;
};

struct HazardMetrics {
  double log_loss = 0.0;
  std::vector<CalibrationBin> calibration;
  /// Count-weighted least-squares slope of observed rate on mean prediction
  /// across non-empty bins; NaN with fewer than two bins.
  double calibration_slope = 0.0;
  bool has_truth = false;
  double sup_error = 0.0;
  double mean_abs_error = 0.0;
};

/// Log-loss and 10-bin calibration on `examples`; with an MDP also the sup
/// and mean absolute error against the true hazard over transient pairs.
HazardMetrics evaluate(const HazardModel& model, const std::vector<HazardExample>& examples,
                       const HazardMdp* truth = nullptr);

Json to_json(const HazardModel& model);
HazardModel hazard_model_from_json(const Json& j);
Json to_json(const HazardMetrics& metrics);

}  // namespace rl4s
