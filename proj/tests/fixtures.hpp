#pragma once

#include <vector>

#include "rl4s/cohort.hpp"
#include "rl4s/mdp.hpp"

namespace rl4s::testing {

inline std::vector<CohortSpec> registry_specs() {
  const auto registry = read_json(std::string(RL4S_REGISTRY_DIR) + "/benchmark.json");
  std::vector<CohortSpec> out;
  for (const auto& j : registry.at("specs")) out.push_back(cohort_spec_from_json(j));
  return out;
}

// s0 --(h=0.1)--> s1 --(h=0.2)--> release. States: 0, 1, release=2, death=3.
// Every action behaves the same.
inline HazardMdp chain_mdp(int n_actions = 2) {
  auto mdp = HazardMdp::zeros(4, n_actions);
  mdp.h_min = 0.1;
  mdp.release[2] = true;
  mdp.death[3] = true;
  for (ActionId a = 0; a < n_actions; ++a) {
    mdp.row(0, a)[1] = 1.0;
    mdp.h(0, a) = 0.1;
    mdp.row(1, a)[2] = 1.0;
    mdp.h(1, a) = 0.2;
    mdp.row(2, a)[2] = 1.0;
    mdp.row(3, a)[3] = 1.0;
    mdp.h(3, a) = 1.0;
  }
  return mdp;
}

// One transient state leading to release with hazard h. States: 0, release=1, death=2.
inline HazardMdp single_step_mdp(double h, int n_actions = 1) {
  auto mdp = HazardMdp::zeros(3, n_actions);
  mdp.h_min = h > 0.0 ? h : 0.1;
  mdp.release[1] = true;
  mdp.death[2] = true;
  for (ActionId a = 0; a < n_actions; ++a) {
    mdp.row(0, a)[1] = 1.0;
    mdp.h(0, a) = h;
    mdp.row(1, a)[1] = 1.0;
    mdp.row(2, a)[2] = 1.0;
    mdp.h(2, a) = 1.0;
  }
  return mdp;
}

// Two transient states cycling between each other with certain death.
inline HazardMdp all_death_mdp(int n_actions = 2) {
  auto mdp = HazardMdp::zeros(4, n_actions);
  mdp.h_min = 1.0;
  mdp.release[2] = true;
  mdp.death[3] = true;
  for (ActionId a = 0; a < n_actions; ++a) {
    mdp.row(0, a)[1] = 0.5;
    mdp.row(0, a)[2] = 0.5;
    mdp.h(0, a) = 1.0;
    mdp.row(1, a)[0] = 1.0;
    mdp.h(1, a) = 1.0;
    mdp.row(2, a)[2] = 1.0;
    mdp.row(3, a)[3] = 1.0;
    mdp.h(3, a) = 1.0;
  }
  return mdp;
}

// Three transient states with self-loops and a slow drift to release;
// action 1 halves the hazard of action 0 everywhere.
inline HazardMdp halving_mdp() {
  auto mdp = HazardMdp::zeros(5, 2);
  mdp.h_min = 0.05;
  mdp.release[3] = true;
  mdp.death[4] = true;
  const double base[3] = {0.1, 0.2, 0.3};
  for (ActionId a = 0; a < 2; ++a) {
    for (StateId s = 0; s < 3; ++s) {
      mdp.h(s, a) = a == 0 ? base[s] : base[s] / 2.0;
      mdp.row(s, a)[s] = 0.4;
      mdp.row(s, a)[s == 0 ? 3 : s - 1] = 0.5;
      mdp.row(s, a)[s == 2 ? 2 : s + 1] += 0.1;
    }
    mdp.row(3, a)[3] = 1.0;
    mdp.row(4, a)[4] = 1.0;
    mdp.h(4, a) = 1.0;
  }
  return mdp;
}

}  // namespace rl4s::testing
