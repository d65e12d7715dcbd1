#include "rl4s/batch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "rl4s/cohort.hpp"

namespace rl4s {
namespace {

// Regression sample shared by the RL4S and baseline pipelines:
// y = reward + (bootstrap ? discount * max_a' Q_target(s_next, a') : 0).
struct Transition {
  StateId s = 0;
  ActionId a = 0;
  StateId s_next = 0;
  double reward = 0.0;
  double discount = 0.0;
  bool bootstrap = false;
};

double max_row(const FeatureMap& map, ValueKind kind, const std::vector<double>& w, StateId s) {
  double best = -std::numeric_limits<double>::infinity();
  for (ActionId a = 0; a < map.n_actions; ++a) {
    double q = 0.0;
    for (int j : map.active(s, a)) q += w[static_cast<std::size_t>(j)];
    if (kind == ValueKind::kSurvival) q = std::clamp(q, 0.0, 1.0);
    best = std::max(best, q);
  }
  return best;
}

FittedQModel fit_transitions(const std::vector<Transition>& data, int n_states, int n_actions,
                             ValueKind kind, const Rl4sConfig& config, Rng& rng) {
  if (const auto problems = validate(config); !problems.empty()) {
    throw PreconditionError("invalid rl4s config: " + problems.front());
  }
  if (data.empty()) throw PreconditionError("fit: no training tuples");

  FittedQModel model;
  model.features = {config.q_features, n_states, n_actions};
  model.kind = kind;
  const auto dim = static_cast<std::size_t>(model.features.dim());
  model.weights.assign(dim, 0.0);
  TargetParams target{model.weights, config.tau};
  std::vector<double> velocity(dim, 0.0), grad(dim, 0.0);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  portable_shuffle(std::span<std::size_t>(order), rng);
  std::size_t cursor = 0;

  const int per_epoch = config.n_iterations / config.epochs;
  std::vector<std::vector<double>> checkpoints;
  double epoch_loss = 0.0;
  std::size_t epoch_samples = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int it = 0; it < config.n_iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        portable_shuffle(std::span<std::size_t>(order), rng);
        cursor = 0;
      }
      const auto& t = data[order[cursor++]];
      double y = t.reward;
      if (t.bootstrap) y += t.discount * max_row(model.features, kind, target.weights, t.s_next);
      const auto active = model.features.active(t.s, t.a);
      double q = 0.0;
      for (int j : active) q += model.weights[static_cast<std::size_t>(j)];
      const double err = q - y;
      loss += err * err;
      for (int j : active) grad[static_cast<std::size_t>(j)] += err;
    }
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "fit diverged at iteration " << it << " (squared TD error " << loss
          << "); lower lr or momentum";
      throw ConvergenceError(msg.str());
    }
    epoch_loss += loss;
    epoch_samples += batch;

    const double scale = config.lr / static_cast<double>(batch);
    for (std::size_t j = 0; j < dim; ++j) {
      velocity[j] = config.momentum * velocity[j] - scale * grad[j];
      model.weights[j] += velocity[j];
    }
    target.polyak_update(model.weights);

    const int done = it + 1;
    const bool epoch_end = done == config.n_iterations ||
                           (done % per_epoch == 0 && static_cast<int>(checkpoints.size()) + 1 < config.epochs);
    if (epoch_end) {
      checkpoints.push_back(model.weights);
      model.final_loss = epoch_loss / static_cast<double>(epoch_samples);
      epoch_loss = 0.0;
      epoch_samples = 0;
    }
  }
  model.iterations = config.n_iterations;

  // A linear model's averaged prediction is the prediction of its averaged weights.
  const auto n_avg = std::min(checkpoints.size(), static_cast<std::size_t>(std::max(config.average_last, 1)));
  if (n_avg > 1) {
    std::fill(model.weights.begin(), model.weights.end(), 0.0);
    for (auto c = checkpoints.end() - static_cast<std::ptrdiff_t>(n_avg); c != checkpoints.end(); ++c) {
      for (std::size_t j = 0; j < dim; ++j) model.weights[j] += (*c)[j] / static_cast<double>(n_avg);
    }
  }
  return model;
}

double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string label_of(ActionId a, int n_actions) {
  return n_actions == 9 ? action_label(a) : "a" + std::to_string(a);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(); }

template <typename T>
void read_optional(const Json& j, const char* name, T& out) {
  if (!j.contains(name)) return;
  try {
    out = j.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("rl4s config field '") + name + "': " + e.what());
  }
}

}  // namespace

double FittedQModel::raw(StateId s, ActionId a) const {
  double q = 0.0;
  for (int j : features.active(s, a)) q += weights[static_cast<std::size_t>(j)];
  return q;
}

double FittedQModel::predict(StateId s, ActionId a) const {
  const double q = raw(s, a);
  return kind == ValueKind::kSurvival ? std::clamp(q, 0.0, 1.0) : q;
}

double FittedQModel::max_predict(StateId s) const { return max_row(features, kind, weights, s); }

QTable FittedQModel::to_qtable() const {
  auto q = QTable::filled(features.n_states, features.n_actions, 0.0, kind);
  for (StateId s = 0; s < features.n_states; ++s) {
    for (ActionId a = 0; a < features.n_actions; ++a) q(s, a) = predict(s, a);
  }
  return q;
}

void TargetParams::polyak_update(const std::vector<double>& online) {
  for (std::size_t j = 0; j < weights.size(); ++j) {
    weights[j] = tau * online[j] + (1.0 - tau) * weights[j];
  }
}

std::vector<std::string> validate(const Rl4sConfig& c) {
  std::vector<std::string> out;
  if (c.batch_size < 1) out.emplace_back("batch_size must be >= 1");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) out.emplace_back("lr must be > 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) out.emplace_back("momentum must be in [0,1)");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) out.emplace_back("tau must be in (0,1]");
  if (c.epochs < 1) out.emplace_back("epochs must be >= 1");
  if (c.n_iterations < c.epochs) out.emplace_back("n_iterations must be >= epochs");
  if (c.average_last < 0 || c.average_last > c.epochs) {
    out.emplace_back("average_last must be in [0, epochs]");
  }
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) out.emplace_back("gamma must be in (0,1)");
  if (!(c.extra_gamma > 0.0 && c.extra_gamma <= 1.0)) out.emplace_back("extra_gamma must be in (0,1]");
  if (c.last_k < 1) out.emplace_back("last_k must be >= 1");
  if (!(c.hazard.rebalance > 0.0)) out.emplace_back("hazard.rebalance must be > 0");
  if (!(c.hazard.lr > 0.0)) out.emplace_back("hazard.lr must be > 0");
  if (!(c.hazard.momentum >= 0.0 && c.hazard.momentum < 1.0)) {
    out.emplace_back("hazard.momentum must be in [0,1)");
  }
  if (c.hazard.n_iters < 0) out.emplace_back("hazard.n_iters must be >= 0");
  return out;
}

Json to_json(const Rl4sConfig& c) {
  return Json{{"schema", kRl4sConfigSchema},
              {"q_features", to_string(c.q_features)},
              {"hazard",
               {{"feature_mode", to_string(c.hazard.mode)},
                {"rebalance", c.hazard.rebalance},
                {"lr", c.hazard.lr},
                {"momentum", c.hazard.momentum},
                {"n_iters", c.hazard.n_iters}}},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"momentum", c.momentum},
              {"tau", c.tau},
              {"n_iterations", c.n_iterations},
              {"epochs", c.epochs},
              {"average_last", c.average_last},
              {"gamma", c.gamma},
              {"extra_gamma", c.extra_gamma},
              {"last_k", c.last_k}};
}

Rl4sConfig rl4s_config_from_json(const Json& j) {
  expect_schema(j, kRl4sConfigSchema);
  reject_unknown_fields(j,
                        {"schema", "q_features", "hazard", "batch_size", "lr", "momentum", "tau",
                         "n_iterations", "epochs", "average_last", "gamma", "extra_gamma", "last_k"},
                        "rl4s config");
  Rl4sConfig c;
  std::string mode;
  read_optional(j, "q_features", mode);
  if (!mode.empty()) c.q_features = feature_mode_from_string(mode);
  if (j.contains("hazard")) {
    const auto& h = j.at("hazard");
    if (!h.is_object()) throw PreconditionError("rl4s config field 'hazard' must be an object");
    reject_unknown_fields(h, {"feature_mode", "rebalance", "lr", "momentum", "n_iters"}, "rl4s config hazard");
    std::string hmode;
    read_optional(h, "feature_mode", hmode);
    if (!hmode.empty()) c.hazard.mode = feature_mode_from_string(hmode);
    read_optional(h, "rebalance", c.hazard.rebalance);
    read_optional(h, "lr", c.hazard.lr);
    read_optional(h, "momentum", c.hazard.momentum);
    read_optional(h, "n_iters", c.hazard.n_iters);
  }
  read_optional(j, "batch_size", c.batch_size);
  read_optional(j, "lr", c.lr);
  read_optional(j, "momentum", c.momentum);
  read_optional(j, "tau", c.tau);
  read_optional(j, "n_iterations", c.n_iterations);
  read_optional(j, "epochs", c.epochs);
  read_optional(j, "average_last", c.average_last);
  read_optional(j, "gamma", c.gamma);
  read_optional(j, "extra_gamma", c.extra_gamma);
  read_optional(j, "last_k", c.last_k);
  if (const auto problems = validate(c); !problems.empty()) {
    throw PreconditionError("invalid rl4s config: " + problems.front());
  }
  return c;
}

std::vector<ExperienceTuple> make_training_tuples(const TrajectoryDataset& data,
                                                  const HazardModel& hazard) {
  if (hazard.features.n_states != data.n_states || hazard.features.n_actions != data.n_actions) {
    throw PreconditionError("make_training_tuples: hazard model shape does not match the dataset");
  }
  std::vector<ExperienceTuple> out;
  out.reserve(data.observations());
  for (const auto& episode : data.episodes) {
    const std::size_t n = episode.steps.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& step = episode.steps[i];
      const bool died = episode.outcome == Outcome::kDied && i + 1 == n;
      out.push_back({step.state, step.action, step.next_state,
                     hazard.discount_hazard(step.state, step.action), false, died});
    }
    if (episode.outcome == Outcome::kReleased) {
      out.push_back({episode.terminal_state, 0, episode.terminal_state, 0.0, true, false});
    } else if (episode.outcome == Outcome::kDied) {
      out.push_back({episode.terminal_state, 0, episode.terminal_state, 1.0, false, false});
    }
  }
  return out;
}

FittedQModel fit_rl4s(const std::vector<ExperienceTuple>& tuples, int n_states, int n_actions,
                      const Rl4sConfig& config, std::uint64_t seed) {
  if (tuples.empty()) throw PreconditionError("fit_rl4s: no training tuples");
  std::vector<Transition> data;
  data.reserve(tuples.size());
  for (const auto& t : tuples) {
    if (t.s < 0 || t.s >= n_states || t.s_next < 0 || t.s_next >= n_states || t.a < 0 ||
        t.a >= n_actions || !(t.h >= 0.0 && t.h <= 1.0)) {
      throw PreconditionError("fit_rl4s: tuple out of range");
    }
    if (t.died) continue;
    if (t.released) {
      data.push_back({t.s, t.a, t.s_next, 1.0, 0.0, false});
    } else {
      const double discount = (1.0 - t.h) * config.extra_gamma;
      data.push_back({t.s, t.a, t.s_next, 0.0, discount, discount > 0.0});
    }
  }
  if (data.empty()) throw PreconditionError("fit_rl4s: every tuple ended in death");
  Rng rng = derive_rng(seed, Stream::kQFit);
  return fit_transitions(data, n_states, n_actions, ValueKind::kSurvival, config, rng);
}

FittedQModel fit_baseline(const TrajectoryDataset& data, const Rl4sConfig& config, std::uint64_t seed) {
  std::vector<Transition> transitions;
  transitions.reserve(data.observations());
  for (const auto& episode : data.episodes) {
    const std::size_t n = episode.steps.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& step = episode.steps[i];
      const bool last = i + 1 == n && episode.absorbed();
      if (last) {
        const double r = episode.outcome == Outcome::kReleased ? 1.0 : -1.0;
        transitions.push_back({step.state, step.action, step.next_state, r, 0.0, false});
      } else {
        transitions.push_back({step.state, step.action, step.next_state, 0.0, config.gamma, true});
      }
    }
    if (episode.absorbed()) {
      transitions.push_back({episode.terminal_state, 0, episode.terminal_state, 0.0, 0.0, false});
    }
  }
  if (transitions.empty()) throw PreconditionError("fit_baseline: dataset has no steps");
  Rng rng = derive_rng(seed, Stream::kBaselineFit);
  return fit_transitions(transitions, data.n_states, data.n_actions, ValueKind::kReturn, config, rng);
}

Policy greedy_policy(const FittedQModel& model) {
  std::vector<ActionId> actions(static_cast<std::size_t>(model.features.n_states), 0);
  for (StateId s = 0; s < model.features.n_states; ++s) {
    double best = model.predict(s, 0);
    for (ActionId a = 1; a < model.features.n_actions; ++a) {
      if (const double q = model.predict(s, a); q > best) {
        best = q;
        actions[s] = a;
      }
    }
  }
  return Policy::deterministic(std::move(actions), model.features.n_actions);
}

QuartileSummary summarize(std::vector<double> values) {
  QuartileSummary out;
  out.count = values.size();
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  out.min = values.front();
  out.max = values.back();
  out.q1 = quantile(values, 0.25);
  out.median = quantile(values, 0.5);
  out.q3 = quantile(values, 0.75);
  return out;
}

double StratifiedQReport::separation() const {
  const auto r = summary.find("released_last_k");
  const auto d = summary.find("died_last_k");
  if (r == summary.end() || d == summary.end()) return 0.0;
  return r->second.median - d->second.median;
}

StratifiedQReport stratified_q_report(const QTable& q, const TrajectoryDataset& data, int last_k) {
  if (q.n_states != data.n_states || q.n_actions != data.n_actions) {
    throw PreconditionError("stratified_q_report: Q shape does not match the dataset");
  }
  if (last_k < 1) throw PreconditionError("stratified_q_report: last_k must be >= 1");
  StratifiedQReport report;
  report.last_k = last_k;

  std::vector<double> score(static_cast<std::size_t>(q.n_states));
  for (StateId s = 0; s < q.n_states; ++s) {
    const auto row = q.row(s);
    score[s] = std::accumulate(row.begin(), row.end(), 0.0) / q.n_actions;
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& e : data.episodes) {
    for (const auto& step : e.steps) {
      lo = std::min(lo, score[step.state]);
      hi = std::max(hi, score[step.state]);
    }
  }
  const auto scaled = [&](StateId s) { return hi > lo ? (score[s] - lo) / (hi - lo) : 0.0; };

  for (const auto& e : data.episodes) {
    if (!e.absorbed()) continue;
    const std::string base = e.outcome == Outcome::kReleased ? "released" : "died";
    const std::size_t n = e.steps.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double v = scaled(e.steps[i].state);
      report.values[base].push_back(v);
      if (n - i <= static_cast<std::size_t>(last_k)) report.values[base + "_last_k"].push_back(v);
    }
  }
  for (const auto& [name, v] : report.values) report.summary[name] = summarize(v);
  return report;
}

std::string to_csv(const StratifiedQReport& report) {
  std::ostringstream out;
  out << "stratum,statistic,value\n";
  for (const auto& [name, s] : report.summary) {
    out << name << ",count," << s.count << "\n";
    out << name << ",min," << format_number(s.min) << "\n";
    out << name << ",q1," << format_number(s.q1) << "\n";
    out << name << ",median," << format_number(s.median) << "\n";
    out << name << ",q3," << format_number(s.q3) << "\n";
    out << name << ",max," << format_number(s.max) << "\n";
  }
  return out.str();
}

Json to_json(const StratifiedQReport& report) {
  Json strata = Json::object();
  for (const auto& [name, values] : report.values) {
    const auto& s = report.summary.at(name);
    // Scaled values live in [0,1]; 20 equal bins keep the file small.
    std::vector<std::size_t> hist(20, 0);
    for (double v : values) ++hist[std::min<std::size_t>(19, static_cast<std::size_t>(v * 20))];
    strata[name] = {{"count", s.count}, {"min", s.min},       {"q1", s.q1},
                    {"median", s.median}, {"q3", s.q3},       {"max", s.max},
                    {"histogram", hist}};
  }
  return Json{{"schema", "q-strata/1"},
              {"last_k", report.last_k},
              {"separation", report.separation()},
              {"strata", strata}};
}

ActionDistributionReport action_distribution_report(
    const std::vector<std::pair<std::string, Policy>>& policies, const TrajectoryDataset& data,
    int last_k) {
  if (last_k < 1) throw PreconditionError("action_distribution_report: last_k must be >= 1");
  for (const auto& [name, pi] : policies) {
    if (pi.n_states() != data.n_states || pi.n_actions() != data.n_actions) {
      throw PreconditionError("action_distribution_report: policy '" + name +
                              "' does not match the dataset shape");
    }
  }
  ActionDistributionReport report;
  report.n_actions = data.n_actions;
  report.last_k = last_k;
  const auto A = static_cast<std::size_t>(data.n_actions);
  const auto n_buckets = static_cast<std::size_t>(last_k) + 1;
  const auto is_vaso = [](ActionId a) { return action_dose(a).vasopressor > 0; };

  // Row 0 is the observed data; rows 1.. follow `policies`.
  const std::size_t rows = policies.size() + 1;
  std::vector<std::vector<double>> mass(rows, std::vector<double>(A, 0.0));
  std::vector<std::vector<double>> vaso(rows, std::vector<double>(n_buckets, 0.0));
  std::vector<double> bucket_count(n_buckets, 0.0);
  double n_steps = 0.0;

  for (const auto& e : data.episodes) {
    const std::size_t n = e.steps.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& step = e.steps[i];
      n_steps += 1.0;
      mass[0][static_cast<std::size_t>(step.action)] += 1.0;
      for (std::size_t r = 1; r < rows; ++r) {
        const auto row = policies[r - 1].second.row(step.state);
        for (std::size_t a = 0; a < A; ++a) mass[r][a] += row[a];
      }
      if (e.outcome != Outcome::kDied) continue;
      const std::size_t to_death = n - i;
      const std::size_t bucket = std::min(to_death, n_buckets) - 1;
      bucket_count[bucket] += 1.0;
      vaso[0][bucket] += is_vaso(step.action) ? 1.0 : 0.0;
      for (std::size_t r = 1; r < rows; ++r) {
        const auto row = policies[r - 1].second.row(step.state);
        for (std::size_t a = 0; a < A; ++a) {
          if (is_vaso(static_cast<ActionId>(a))) vaso[r][bucket] += row[a];
        }
      }
    }
  }

  for (std::size_t r = 0; r < rows; ++r) {
    const std::string name = r == 0 ? "observed" : policies[r - 1].first;
    std::vector<double> pct(A, 0.0);
    for (std::size_t a = 0; a < A; ++a) pct[a] = n_steps > 0 ? 100.0 * mass[r][a] / n_steps : 0.0;
    report.actions.emplace_back(name, pct);
    std::vector<double> vp(n_buckets, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t b = 0; b < n_buckets; ++b) {
      if (bucket_count[b] > 0) vp[b] = 100.0 * vaso[r][b] / bucket_count[b];
    }
    report.vasopressor.emplace_back(name, vp);
  }
  return report;
}

std::string actions_csv(const ActionDistributionReport& report) {
  std::ostringstream out;
  out << "policy,action,label,percent\n";
  for (const auto& [name, pct] : report.actions) {
    for (std::size_t a = 0; a < pct.size(); ++a) {
      out << name << "," << a << "," << label_of(static_cast<ActionId>(a), report.n_actions) << ","
          << format_number(pct[a]) << "\n";
    }
  }
  return out.str();
}

std::string vasopressor_csv(const ActionDistributionReport& report) {
  std::ostringstream out;
  out << "policy,steps_to_death,percent\n";
  for (const auto& [name, pct] : report.vasopressor) {
    for (std::size_t b = 0; b < pct.size(); ++b) {
      const std::string bucket =
          b < static_cast<std::size_t>(report.last_k) ? std::to_string(b + 1) : ">" + std::to_string(report.last_k);
      out << name << "," << bucket << "," << format_number(pct[b]) << "\n";
    }
  }
  return out.str();
}

Json to_json(const ActionDistributionReport& report) {
  Json labels = Json::array();
  for (ActionId a = 0; a < report.n_actions; ++a) labels.push_back(label_of(a, report.n_actions));
  Json actions = Json::object(), vaso = Json::object();
  for (const auto& [name, pct] : report.actions) actions[name] = pct;
  for (const auto& [name, pct] : report.vasopressor) {
    Json row = Json::array();
    for (double v : pct) row.push_back(number_or_null(v));
    vaso[name] = row;
  }
  return Json{{"schema", "action-distribution/1"},
              {"labels", labels},
              {"last_k", report.last_k},
              {"actions_percent", actions},
              {"vasopressor_percent_by_steps_to_death", vaso}};
}

Json to_json(const FittedQModel& model) {
  return Json{{"schema", kFittedQSchema},
              {"feature_mode", to_string(model.features.mode)},
              {"n_states", model.features.n_states},
              {"n_actions", model.features.n_actions},
              {"value_kind", kind_name(model.kind)},
              {"final_loss", model.final_loss},
              {"iterations", model.iterations},
              {"weights", model.weights}};
}

FittedQModel fitted_q_from_json(const Json& j) {
  expect_schema(j, kFittedQSchema);
  try {
    FittedQModel model;
    model.features.mode = feature_mode_from_string(j.at("feature_mode").get<std::string>());
    model.features.n_states = j.at("n_states").get<int>();
    model.features.n_actions = j.at("n_actions").get<int>();
    model.kind = kind_from_name(j.at("value_kind").get<std::string>());
    model.final_loss = j.value("final_loss", 0.0);
    model.iterations = j.value("iterations", 0);
    model.weights = j.at("weights").get<std::vector<double>>();
    if (model.features.n_states < 1 || model.features.n_actions < 1 ||
        model.weights.size() != static_cast<std::size_t>(model.features.dim())) {
      throw PreconditionError("fitted-q: weight count does not match the feature map");
    }
    return model;
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("fitted-q: ") + e.what());
  }
}

}  // namespace rl4s
