#include "rl4s/features.hpp"

namespace rl4s {

const char* to_string(FeatureMode mode) {
  return mode == FeatureMode::kTabular ? "tabular" : "onehot";
}

FeatureMode feature_mode_from_string(const std::string& name) {
  if (name == "tabular") return FeatureMode::kTabular;
  if (name == "onehot") return FeatureMode::kOneHot;
  throw PreconditionError("unknown feature mode '" + name + "' (expected tabular or onehot)");
}

}  // namespace rl4s
