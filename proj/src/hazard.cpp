#include "rl4s/hazard.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rl4s {
namespace {

constexpr double kLogitClamp = 30.0;
// Keeps a diverging weight (a cell with no deaths) from running off forever.
constexpr double kWeightClamp = 60.0;

double sigmoid(double z) {
  z = std::clamp(z, -kLogitClamp, kLogitClamp);
  return 1.0 / (1.0 + std::exp(-z));
}

// Examples collapse onto (s,a) cells because features are cell indicators.
struct Cell {
  StateId s = 0;
  ActionId a = 0;
  double n_pos = 0.0;
  double n_neg = 0.0;
};

}  // namespace

double HazardModel::logit(StateId s, ActionId a) const {
  double z = 0.0;
  for (int j : features.active(s, a)) z += weights[static_cast<std::size_t>(j)];
  return z;
}

double HazardModel::predict(StateId s, ActionId a) const { return sigmoid(logit(s, a)); }

double HazardModel::discount_hazard(StateId s, ActionId a) const {
  return std::clamp(predict(s, a), kHazardClampLow, kHazardClampHigh);
}

std::vector<HazardExample> build_training_set(const TrajectoryDataset& data) {
  if (data.transient_steps() == 0) {
    throw PreconditionError("build_training_set: dataset has no steps");
  }
  std::vector<HazardExample> examples;
  examples.reserve(data.transient_steps());
  for (const auto& episode : data.episodes) {
    const std::size_t n = episode.steps.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& step = episode.steps[i];
      const bool died = episode.outcome == Outcome::kDied && i + 1 == n;
      examples.push_back({step.state, step.action, died ? 1 : 0});
    }
  }
  return examples;
}

HazardModel fit(const std::vector<HazardExample>& examples, int n_states, int n_actions,
                const HazardFitConfig& config, Rng& rng) {
  if (n_states < 1 || n_actions < 1) throw PreconditionError("hazard fit: empty shape");
  if (!(config.rebalance > 0.0)) throw PreconditionError("hazard fit: rebalance must be > 0");
  if (!(config.lr > 0.0) || config.momentum < 0.0 || config.momentum >= 1.0 ||
      config.n_iters < 0) {
    throw PreconditionError("hazard fit: invalid optimizer settings");
  }

  const FeatureMap map{config.mode, n_states, n_actions};
  std::vector<Cell> cells(static_cast<std::size_t>(n_states) * n_actions);
  std::size_t positives = 0;
  for (const auto& ex : examples) {
    if (ex.s < 0 || ex.s >= n_states || ex.a < 0 || ex.a >= n_actions) {
      throw PreconditionError("hazard fit: example out of range");
    }
    auto& cell = cells[static_cast<std::size_t>(ex.s) * n_actions + ex.a];
    cell.s = ex.s;
    cell.a = ex.a;
    if (ex.label != 0) {
      cell.n_pos += 1.0;
      ++positives;
    } else {
      cell.n_neg += 1.0;
    }
  }
  if (positives == 0 || positives == examples.size()) {
    throw PreconditionError("hazard fit: need at least one positive and one negative example");
  }
  std::erase_if(cells, [](const Cell& c) { return c.n_pos + c.n_neg == 0.0; });

  const double w_pos = config.rebalance;
  double total_weight = 0.0;
  for (const auto& c : cells) total_weight += w_pos * c.n_pos + c.n_neg;

  const auto dim = static_cast<std::size_t>(map.dim());
  const int n_active = map.active(0, 0).count;
  HazardModel model;
  model.features = map;
  model.rebalance = config.rebalance;
  model.weights.resize(dim);
  for (auto& w : model.weights) w = 0.01 * (2.0 * uniform01(rng) - 1.0);

  std::vector<double> grad(dim), curv(dim), velocity(dim, 0.0);
  const auto loss_and_derivatives = [&](bool derivatives) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(curv.begin(), curv.end(), 0.0);
    double loss = 0.0;
    for (const auto& c : cells) {
      const double z = std::clamp(model.logit(c.s, c.a), -kLogitClamp, kLogitClamp);
      // log(1+e^z) computed without overflow.
      const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      loss += w_pos * c.n_pos * (softplus - z) + c.n_neg * softplus;
      if (!derivatives) continue;
      const double p = sigmoid(z);
      const double g = w_pos * c.n_pos * (p - 1.0) + c.n_neg * p;
      const double h = (w_pos * c.n_pos + c.n_neg) * p * (1.0 - p);
      for (int j : map.active(c.s, c.a)) {
        grad[static_cast<std::size_t>(j)] += g;
        curv[static_cast<std::size_t>(j)] += h;
      }
    }
    return loss / total_weight;
  };

  // Floor on the curvature: a saturated cell keeps stepping at a bounded rate.
  const double curv_floor = 1e-12 * total_weight;
  int it = 0;
  for (; it < config.n_iters; ++it) {
    loss_and_derivatives(true);
    double largest = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      if (grad[j] == 0.0 && curv[j] == 0.0) continue;  // feature never active
      const double precond = n_active * std::max(curv[j], curv_floor);
      // Limit a single step to a few logit units so saturated cells move steadily.
      const double step = std::clamp(-config.lr * grad[j] / precond, -4.0, 4.0);
      velocity[j] = config.momentum * velocity[j] + step;
      const double before = model.weights[j];
      model.weights[j] = std::clamp(before + velocity[j], -kWeightClamp, kWeightClamp);
      largest = std::max(largest, std::abs(model.weights[j] - before));
    }
    if (largest < config.tol) {
      ++it;
      break;
    }
  }
  model.iterations = it;
  model.final_loss = loss_and_derivatives(false);
  if (!std::isfinite(model.final_loss)) throw ConvergenceError("hazard fit: loss is not finite");
  return model;
}

HazardMetrics evaluate(const HazardModel& model, const std::vector<HazardExample>& examples,
                       const HazardMdp* truth) {
  HazardMetrics m;
  constexpr int kBins = 10;
  m.calibration.resize(kBins);
  for (int b = 0; b < kBins; ++b) {
    m.calibration[b].lower = static_cast<double>(b) / kBins;
    m.calibration[b].upper = static_cast<double>(b + 1) / kBins;
  }
  std::vector<double> positives(kBins, 0.0);
  double loss = 0.0;
  for (const auto& ex : examples) {
    const double p = model.predict(ex.s, ex.a);
    loss -= ex.label != 0 ? std::log(p) : std::log1p(-p);
    const int b = std::min(kBins - 1, static_cast<int>(p * kBins));
    auto& bin = m.calibration[b];
    ++bin.count;
    bin.mean_predicted += p;
    positives[b] += ex.label != 0 ? 1.0 : 0.0;
  }
  m.log_loss = examples.empty() ? 0.0 : loss / static_cast<double>(examples.size());

  double w_sum = 0.0, x_sum = 0.0, y_sum = 0.0;
  for (int b = 0; b < kBins; ++b) {
    auto& bin = m.calibration[b];
    if (bin.count == 0) continue;
    const auto n = static_cast<double>(bin.count);
    bin.mean_predicted /= n;
    bin.observed_rate = positives[b] / n;
    w_sum += n;
    x_sum += n * bin.mean_predicted;
    y_sum += n * bin.observed_rate;
  }
  m.calibration_slope = std::numeric_limits<double>::quiet_NaN();
  if (w_sum > 0.0) {
    const double x_bar = x_sum / w_sum, y_bar = y_sum / w_sum;
    double sxy = 0.0, sxx = 0.0;
    for (const auto& bin : m.calibration) {
      if (bin.count == 0) continue;
      const auto n = static_cast<double>(bin.count);
      sxy += n * (bin.mean_predicted - x_bar) * (bin.observed_rate - y_bar);
      sxx += n * (bin.mean_predicted - x_bar) * (bin.mean_predicted - x_bar);
    }
    if (sxx > 0.0) m.calibration_slope = sxy / sxx;
  }

  if (truth != nullptr) {
    if (truth->n_states != model.features.n_states ||
        truth->n_actions != model.features.n_actions) {
      throw PreconditionError("evaluate: model shape does not match the MDP");
    }
    m.has_truth = true;
    std::size_t n = 0;
    for (StateId s : truth->transient_states()) {
      for (ActionId a = 0; a < truth->n_actions; ++a) {
        const double err = std::abs(model.predict(s, a) - truth->h(s, a));
        m.sup_error = std::max(m.sup_error, err);
        m.mean_abs_error += err;
        ++n;
      }
    }
    if (n > 0) m.mean_abs_error /= static_cast<double>(n);
  }
  return m;
}

Json to_json(const HazardModel& model) {
  return Json{{"schema", kHazardModelSchema},
              {"feature_mode", to_string(model.features.mode)},
              {"n_states", model.features.n_states},
              {"n_actions", model.features.n_actions},
              {"rebalance", model.rebalance},
              {"final_loss", model.final_loss},
              {"iterations", model.iterations},
              {"weights", model.weights}};
}

HazardModel hazard_model_from_json(const Json& j) {
  expect_schema(j, kHazardModelSchema);
  try {
    HazardModel model;
    model.features.mode = feature_mode_from_string(j.at("feature_mode").get<std::string>());
    model.features.n_states = j.at("n_states").get<int>();
    model.features.n_actions = j.at("n_actions").get<int>();
    model.rebalance = j.value("rebalance", 1.0);
    model.final_loss = j.value("final_loss", 0.0);
    model.iterations = j.value("iterations", 0);
    model.weights = j.at("weights").get<std::vector<double>>();
    if (model.features.n_states < 1 || model.features.n_actions < 1 ||
        model.weights.size() != static_cast<std::size_t>(model.features.dim())) {
      throw PreconditionError("hazard-model: weight count does not match the feature map");
    }
    return model;
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("hazard-model: ") + e.what());
  }
}

Json to_json(const HazardMetrics& metrics) {
  Json bins = Json::array();
  for (const auto& b : metrics.calibration) {
    bins.push_back({{"lower", b.lower},
                    {"upper", b.upper},
                    {"count", b.count},
                    {"mean_predicted", b.mean_predicted},
                    {"observed_rate", b.observed_rate}});
  }
  Json j{{"schema", "hazard-metrics/1"},
         {"log_loss", metrics.log_loss},
         {"calibration", bins},
         {"calibration_slope",
          std::isfinite(metrics.calibration_slope) ? Json(metrics.calibration_slope) : Json()}};
  if (metrics.has_truth) {
    j["sup_error"] = metrics.sup_error;
    j["mean_abs_error"] = metrics.mean_abs_error;
  }
  return j;
}

}  // namespace rl4s
