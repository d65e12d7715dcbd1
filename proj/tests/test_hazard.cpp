#include <cmath>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "rl4s/cohort.hpp"
#include "rl4s/hazard.hpp"

using namespace rl4s;

namespace {

Episode make_episode(std::vector<Step> steps, Outcome outcome, StateId terminal) {
  Episode e;
  e.steps = std::move(steps);
  e.outcome = outcome;
  e.terminal_state = terminal;
  e.terminal_step = static_cast<int>(e.steps.size());
  return e;
}

struct CellCounts {
  double n = 0;
  double k = 0;
};

// Random labelled examples on every cell of a |S| x |A| grid, plus one cell
// that never sees a death.
std::vector<HazardExample> random_examples(int S, int A, std::uint64_t seed) {
  auto rng = derive_rng(seed, Stream::kTest, 0);
  std::vector<HazardExample> out;
  for (StateId s = 0; s < S; ++s) {
    for (ActionId a = 0; a < A; ++a) {
      const double p = (s == 0 && a == 0) ? 0.0 : 0.02 + 0.5 * uniform01(rng);
      const std::size_t n = 20 + uniform_index(rng, 300);
      for (std::size_t i = 0; i < n; ++i) out.push_back({s, a, uniform01(rng) < p ? 1 : 0});
    }
  }
  return out;
}

std::map<std::pair<int, int>, CellCounts> tally(const std::vector<HazardExample>& examples) {
  std::map<std::pair<int, int>, CellCounts> cells;
  for (const auto& ex : examples) {
    auto& c = cells[{ex.s, ex.a}];
    c.n += 1;
    c.k += ex.label;
  }
  return cells;
}

}  // namespace

TEST_CASE("training labels") {
  TrajectoryDataset data{3, 1, {}};
  data.episodes.push_back(
      make_episode({{0, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, 2, 2}}, Outcome::kDied, 2));
  data.episodes.push_back(make_episode({{0, 0, 0, 0}, {0, 0, 1, 1}}, Outcome::kReleased, 1));
  data.episodes.push_back(make_episode({{0, 0, 0, 0}, {0, 0, 0, 1}}, Outcome::kTruncated, 0));
  const auto ex = build_training_set(data);
  REQUIRE(ex.size() == 7);
  CHECK(ex[0].label == 0);
  CHECK(ex[1].label == 0);
  CHECK(ex[2].label == 1);
  for (std::size_t i = 3; i < ex.size(); ++i) CHECK(ex[i].label == 0);

  CHECK_THROWS_AS(build_training_set(TrajectoryDataset{3, 1, {}}), PreconditionError);
}

TEST_CASE("fit rejects single-class input") {
  Rng rng = derive_rng(1, Stream::kHazardFit, 0);
  std::vector<HazardExample> zeros{{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(fit(zeros, 2, 1, {}, rng), PreconditionError);
  std::vector<HazardExample> ones{{0, 0, 1}};
  CHECK_THROWS_AS(fit(ones, 2, 1, {}, rng), PreconditionError);
}

TEST_CASE("tabular fit equals the closed-form weighted frequency") {
  const int S = 6, A = 3;
  const auto examples = random_examples(S, A, 7);
  const auto cells = tally(examples);
  for (double w : {1.0, 4.0}) {
    CAPTURE(w);
    HazardFitConfig config;
    config.rebalance = w;
    Rng rng = derive_rng(3, Stream::kHazardFit, 0);
    const auto model = fit(examples, S, A, config, rng);
    for (const auto& [key, c] : cells) {
      const double oracle = w * c.k / (w * c.k + c.n - c.k);
      const double fitted = model.predict(key.first, key.second);
      CHECK(fitted > 0.0);
      CHECK(fitted < 1.0);
      CHECK(std::abs(fitted - oracle) <= 1e-6);
    }
  }
}

TEST_CASE("rebalancing keeps the tabular ordering") {
  const int S = 6, A = 3;
  const auto examples = random_examples(S, A, 11);
  HazardFitConfig c1, c10;
  c10.rebalance = 10.0;
  Rng r1 = derive_rng(3, Stream::kHazardFit, 0), r10 = derive_rng(3, Stream::kHazardFit, 0);
  const auto m1 = fit(examples, S, A, c1, r1);
  const auto m10 = fit(examples, S, A, c10, r10);
  double mean1 = 0, mean10 = 0;
  for (int i = 0; i < S * A; ++i) {
    mean1 += m1.predict(i / A, i % A);
    mean10 += m10.predict(i / A, i % A);
    for (int j = 0; j < S * A; ++j) {
      const double d1 = m1.predict(i / A, i % A) - m1.predict(j / A, j % A);
      const double d10 = m10.predict(i / A, i % A) - m10.predict(j / A, j % A);
      if (std::abs(d1) > 1e-9) CHECK((d1 > 0) == (d10 > 0));
    }
  }
  CHECK(mean10 > mean1);
}

TEST_CASE("fit is deterministic given the seed") {
  const auto examples = random_examples(5, 3, 5);
  HazardFitConfig config;
  config.mode = FeatureMode::kOneHot;
  Rng a = derive_rng(9, Stream::kHazardFit, 0), b = derive_rng(9, Stream::kHazardFit, 0);
  CHECK(fit(examples, 5, 3, config, a).weights == fit(examples, 5, 3, config, b).weights);
}

TEST_CASE("one-hot model cannot beat the saturated model") {
  const auto examples = random_examples(5, 3, 5);
  Rng a = derive_rng(9, Stream::kHazardFit, 0), b = derive_rng(9, Stream::kHazardFit, 0);
  HazardFitConfig onehot;
  onehot.mode = FeatureMode::kOneHot;
  const auto tab = fit(examples, 5, 3, {}, a);
  const auto lin = fit(examples, 5, 3, onehot, b);
  CHECK(std::isfinite(lin.final_loss));
  CHECK(lin.final_loss >= tab.final_loss - 1e-9);
  CHECK(lin.weights.size() == 5 + 3 + 1);
}

TEST_CASE("evaluation identities") {
  const auto mdp = testing::chain_mdp();
  SUBCASE("perfect tabular model has zero error") {
    HazardModel model;
    model.features = {FeatureMode::kTabular, mdp.n_states, mdp.n_actions};
    model.weights.assign(static_cast<std::size_t>(model.features.dim()), 0.0);
    for (StateId s = 0; s < 2; ++s) {
      for (ActionId a = 0; a < 2; ++a) {
        const double h = mdp.h(s, a);
        model.weights[s * 2 + a] = std::log(h / (1 - h));
      }
    }
    const auto m = evaluate(model, {{0, 0, 0}}, &mdp);
    CHECK(m.sup_error <= 1e-15);
  }
  SUBCASE("constant one half has log-loss ln 2") {
    HazardModel model;
    model.features = {FeatureMode::kOneHot, mdp.n_states, mdp.n_actions};
    model.weights.assign(static_cast<std::size_t>(model.features.dim()), 0.0);
    const auto m = evaluate(model, {{0, 0, 0}, {1, 1, 1}, {0, 1, 1}}, nullptr);
    CHECK(m.log_loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(m.calibration[5].count == 3);
    CHECK(!m.has_truth);
  }
}

TEST_CASE("discount clamp") {
  HazardModel model;
  model.features = {FeatureMode::kTabular, 1, 2};
  model.weights = {-200.0, 200.0};
  CHECK(model.predict(0, 0) > 0.0);
  CHECK(model.predict(0, 1) < 1.0);
  CHECK(model.discount_hazard(0, 0) == kHazardClampLow);
  CHECK(model.discount_hazard(0, 1) == kHazardClampHigh);
}

TEST_CASE("json round trip") {
  const auto examples = random_examples(4, 2, 2);
  Rng rng = derive_rng(1, Stream::kHazardFit, 0);
  const auto model = fit(examples, 4, 2, {}, rng);
  const auto back = hazard_model_from_json(Json::parse(to_json(model).dump()));
  CHECK(back.weights == model.weights);
  CHECK(back.features.mode == model.features.mode);
  CHECK(back.final_loss == model.final_loss);
  auto bad = to_json(model);
  bad["weights"].push_back(1.0);
  CHECK_THROWS_AS(hazard_model_from_json(bad), PreconditionError);
}

TEST_CASE("benchmark hazard estimation") {
  const auto spec = testing::registry_specs().front();
  const auto mdp = generate_mdp(spec);
  const auto data = generate_dataset(mdp, behavior_policy(mdp, spec), spec, spec.seed);
  const auto examples = build_training_set(data);

  std::map<std::pair<int, int>, double> visits;
  double positives = 0, true_mean = 0;
  for (const auto& ex : examples) {
    visits[{ex.s, ex.a}] += 1;
    positives += ex.label;
    true_mean += mdp.h(ex.s, ex.a);
  }
  const double n = static_cast<double>(examples.size());
  CHECK(std::abs(positives / n - true_mean / n) <= 0.2 * true_mean / n);

  Rng rng = derive_rng(spec.seed, Stream::kHazardFit, 0);
  const auto model = fit(examples, mdp.n_states, mdp.n_actions, {}, rng);
  double err = 0;
  int counted = 0;
  for (const auto& [key, v] : visits) {
    if (v < 500) continue;
    err += std::abs(model.predict(key.first, key.second) - mdp.h(key.first, key.second));
    ++counted;
  }
  REQUIRE(counted > 0);
  MESSAGE("pairs with >= 500 visits: " << counted << ", mean |h-hat - h| = " << err / counted);
  CHECK(err / counted <= 0.03);

  const auto metrics = evaluate(model, examples, &mdp);
  MESSAGE("calibration slope " << metrics.calibration_slope);
  CHECK(metrics.calibration_slope >= 0.8);
  CHECK(metrics.calibration_slope <= 1.2);
}
