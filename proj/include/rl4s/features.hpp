#pragma once

#include <array>
#include <string>

#include "rl4s/mdp.hpp"

namespace rl4s {

enum class FeatureMode {
  /// One indicator per (s,a) pair: the saturated model.
  kTabular,
  /// one-hot(s) + one-hot(a) + bias.
  kOneHot,
};

const char* to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(const std::string& name);

/// Active feature indices of a (s,a) pair. Every feature value is 1, so a
/// linear model's output is the sum of the active weights.
struct ActiveFeatures {
  std::array<int, 3> index{};
  int count = 0;

  [[nodiscard]] const int* begin() const { return index.data(); }
  [[nodiscard]] const int* end() const { return index.data() + count; }
};

struct FeatureMap {
  FeatureMode mode = FeatureMode::kTabular;
  int n_states = 0;
  int n_actions = 0;

  [[nodiscard]] int dim() const {
    return mode == FeatureMode::kTabular ? n_states * n_actions : n_states + n_actions + 1;
  }

  [[nodiscard]] ActiveFeatures active(StateId s, ActionId a) const {
    if (mode == FeatureMode::kTabular) return {{s * n_actions + a, 0, 0}, 1};
    return {{s, n_states + a, n_states + n_actions}, 3};
  }
};

}  // namespace rl4s
