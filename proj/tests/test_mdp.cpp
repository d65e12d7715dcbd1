#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "rl4s/exact.hpp"
#include "rl4s/io.hpp"
#include "rl4s/mdp.hpp"

using namespace rl4s;
using rl4s::testing::chain_mdp;
using rl4s::testing::single_step_mdp;

TEST_CASE("validate accepts well-formed MDPs") {
  auto mdp = HazardMdp::zeros(2, 1);
  mdp.h_min = 0.5;
  mdp.release[0] = true;
  mdp.death[1] = true;
  mdp.row(0, 0)[0] = 1.0;
  mdp.row(1, 0)[1] = 1.0;
  mdp.h(1, 0) = 1.0;
  CHECK(validate(mdp).empty());
  CHECK(validate(chain_mdp()).empty());
}

TEST_CASE("validate names the offending row and invariant") {
  auto mdp = chain_mdp(1);
  mdp.row(0, 0)[1] = 0.9;
  auto v = validate(mdp);
  REQUIRE(v.size() == 1);
  CHECK(v[0].location == "(s=0, a=0)");
  CHECK(v[0].invariant.find("summing to 1") != std::string::npos);

  mdp = chain_mdp(1);
  mdp.h(1, 0) = 0.0;
  v = validate(mdp);
  REQUIRE(v.size() == 1);
  CHECK(v[0].invariant.find("h_min") != std::string::npos);
  CHECK(v[0].location == "(s=1, a=0)");
}

TEST_CASE("validate catches flag and absorbing-state violations") {
  auto mdp = chain_mdp(1);
  mdp.death[2] = true;
  CHECK_FALSE(validate(mdp).empty());

  mdp = chain_mdp(1);
  mdp.h(3, 0) = 0.5;
  CHECK(validate(mdp).size() == 1);

  mdp = chain_mdp(1);
  mdp.row(2, 0)[2] = 0.0;
  mdp.row(2, 0)[0] = 1.0;
  CHECK_FALSE(validate(mdp).empty());
  CHECK_THROWS_AS(require_valid(mdp), PreconditionError);
}

TEST_CASE("sample_step edge cases") {
  Rng rng = derive_rng(1, Stream::kTest);
  const auto certain = single_step_mdp(1.0);
  for (int i = 0; i < 100; ++i) {
    const auto r = sample_step(certain, 0, 0, rng);
    CHECK(r.died);
    CHECK(r.next_state == 2);
  }
  CHECK_THROWS_AS((void)sample_step(certain, 1, 0, rng), PreconditionError);
  CHECK_THROWS_AS((void)sample_step(certain, 2, 0, rng), PreconditionError);
}

TEST_CASE("sample_step death frequency matches the hazard") {
  const auto mdp = single_step_mdp(0.3);
  Rng rng = derive_rng(7, Stream::kTest);
  const int n = 100000;
  int deaths = 0;
  for (int i = 0; i < n; ++i) deaths += sample_step(mdp, 0, 0, rng).died ? 1 : 0;
  CHECK(std::abs(deaths / static_cast<double>(n) - 0.3) <= 0.01);
}

TEST_CASE("rollout trivial outcomes") {
  Rng rng = derive_rng(2, Stream::kTest);
  auto safe = single_step_mdp(0.0);
  safe.h_min = 0.1;  // h = 0 is only checked on transient states by validate; rollout does not care
  auto e = rollout(safe, Policy::uniform(3, 1), 0, rng, 10);
  CHECK(e.outcome == Outcome::kReleased);
  CHECK(e.steps.size() == 1);
  CHECK(e.terminal_step == 1);

  const auto doomed = rl4s::testing::all_death_mdp();
  e = rollout(doomed, Policy::uniform(4, 2), 0, rng, 10);
  CHECK(e.outcome == Outcome::kDied);
  CHECK(e.terminal_step == 1);
  CHECK(e.terminal_state == 3);

  CHECK_THROWS_AS((void)rollout(doomed, Policy::uniform(4, 2), 0, rng, 0), PreconditionError);
}

TEST_CASE("rollout truncates and is reproducible") {
  auto mdp = HazardMdp::zeros(3, 1);
  mdp.h_min = 1e-3;
  mdp.release[1] = true;
  mdp.death[2] = true;
  mdp.row(0, 0)[0] = 1.0;
  mdp.h(0, 0) = 1e-3;
  mdp.row(1, 0)[1] = 1.0;
  mdp.row(2, 0)[2] = 1.0;
  mdp.h(2, 0) = 1.0;
  Rng a = derive_rng(3, Stream::kTest);
  Rng b = derive_rng(3, Stream::kTest);
  const auto e1 = rollout(mdp, Policy::uniform(3, 1), 0, a, 5);
  const auto e2 = rollout(mdp, Policy::uniform(3, 1), 0, b, 5);
  CHECK(to_json(e1) == to_json(e2));
  if (e1.outcome == Outcome::kTruncated) CHECK(e1.steps.size() == 5);
}

TEST_CASE("Monte Carlo survival on a 3-state chain matches the linear-solve oracle") {
  // transient 0 -> transient 1 (or stay) -> release.
  auto mdp = HazardMdp::zeros(4, 1);
  mdp.h_min = 0.05;
  mdp.release[2] = true;
  mdp.death[3] = true;
  mdp.row(0, 0)[0] = 0.3;
  mdp.row(0, 0)[1] = 0.7;
  mdp.h(0, 0) = 0.05;
  mdp.row(1, 0)[1] = 0.2;
  mdp.row(1, 0)[2] = 0.8;
  mdp.h(1, 0) = 0.15;
  mdp.row(2, 0)[2] = 1.0;
  mdp.row(3, 0)[3] = 1.0;
  mdp.h(3, 0) = 1.0;
  REQUIRE(validate(mdp).empty());
  const auto policy = Policy::uniform(4, 1);
  const double exact = exact_survival_probability(mdp, policy, 0);
  Rng rng = derive_rng(11, Stream::kTest);
  const int n = 10000;
  int released = 0;
  for (int i = 0; i < n; ++i) released += rollout(mdp, policy, 0, rng, 1000).outcome == Outcome::kReleased;
  CHECK(std::abs(released / static_cast<double>(n) - exact) <= 0.01);
}

TEST_CASE("Monte Carlo survival stays within 3 sigma on random instances") {
  Rng gen = derive_rng(5, Stream::kTest);
  const int instances = 100;
  const int n = 2000;
  int inside = 0;
  for (int k = 0; k < instances; ++k) {
    RandomMdpOptions opt;
    opt.n_transient = 2 + k % 4;
    opt.n_actions = 1 + k % 3;
    const auto mdp = make_random_mdp(opt, gen);
    REQUIRE(validate(mdp).empty());
    const auto policy = Policy::uniform(mdp.n_states, mdp.n_actions);
    const StateId s0 = k % opt.n_transient;
    const double p = exact_survival_probability(mdp, policy, s0);
    Rng rng = derive_rng(100 + k, Stream::kTest);
    int released = 0;
    for (int i = 0; i < n; ++i) released += rollout(mdp, policy, s0, rng, 100000).outcome == Outcome::kReleased;
    const double bound = 3.0 * std::sqrt(p * (1.0 - p) / n);
    inside += std::abs(released / static_cast<double>(n) - p) <= bound ? 1 : 0;
  }
  CHECK(inside >= 99);
}

TEST_CASE("policy construction checks") {
  CHECK_THROWS_AS((void)Policy::deterministic({0, 2}, 2), PreconditionError);
  CHECK_THROWS_AS((void)Policy::stochastic(1, 2, {0.5, 0.4}), PreconditionError);
  const auto p = Policy::stochastic(2, 2, {0.25, 0.75, 0.5, 0.5});
  CHECK(p.action(0) == 1);
  CHECK(p.action(1) == 0);
  const auto u = Policy::uniform(3, 9);
  for (StateId s = 0; s < 3; ++s) CHECK(u.prob(s, 4) == doctest::Approx(1.0 / 9));
}

TEST_CASE("JSON codecs round-trip random instances") {
  Rng gen = derive_rng(9, Stream::kTest);
  for (int k = 0; k < 10; ++k) {
    RandomMdpOptions opt;
    opt.n_transient = 1 + k;
    opt.n_actions = 1 + k % 4;
    opt.support = 2;
    const auto mdp = make_random_mdp(opt, gen);
    REQUIRE(validate(mdp).empty());
    const auto text = to_json(mdp).dump();
    const auto back = mdp_from_json(Json::parse(text));
    CHECK(back.transition == mdp.transition);
    CHECK(back.hazard == mdp.hazard);
    CHECK(to_json(back).dump() == text);

    TrajectoryDataset data{mdp.n_states, mdp.n_actions, {}};
    const auto policy = Policy::uniform(mdp.n_states, mdp.n_actions);
    for (int i = 0; i < 20; ++i) data.episodes.push_back(rollout(mdp, policy, 0, gen, 50));
    CHECK(validate(data, &mdp).empty());
    const auto jsonl = to_jsonl(data);
    const auto restored = dataset_from_jsonl(jsonl, dataset_manifest(data));
    CHECK(to_jsonl(restored) == jsonl);
    CHECK(to_json(dataset_from_json(to_json(data))) == to_json(data));
  }
  CHECK_THROWS_AS((void)mdp_from_json(Json{{"schema", "q-table/1"}}), PreconditionError);
}
