#include "rl4s/cohort.hpp"

#include <algorithm>
#include <cmath>

#include "rl4s/exact.hpp"

namespace rl4s {
namespace {

// Ladder shape constants. Tuned so the registered benchmark has roughly 10%
// behavior-policy mortality.
constexpr double kDownBase = 0.35;
constexpr double kUpBase = 0.03;
constexpr double kHazardExponent = 6.0;

double ladder_fraction(const CohortSpec& spec, int level) {
  return spec.n_severity_levels == 1 ? 0.0
                                     : static_cast<double>(level) / (spec.n_severity_levels - 1);
}

template <typename T>
void read_optional(const Json& j, const char* name, T& out) {
  if (!j.contains(name)) return;
  try {
    out = j.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("cohort spec field '") + name + "': " + e.what());
  }
}

}  // namespace

std::vector<std::string> validate(const CohortSpec& spec) {
  std::vector<std::string> out;
  if (spec.n_severity_levels < 1) out.emplace_back("n_severity_levels must be >= 1");
  if (spec.n_actions < 1) out.emplace_back("n_actions must be >= 1");
  if (!(spec.h_min > 0.0)) out.emplace_back("h_min must be > 0");
  if (!(spec.h_max <= 1.0) || !(spec.h_max >= spec.h_min)) out.emplace_back("h_max must be in [h_min, 1]");
  if (!(spec.treatment_effect >= 0.0)) out.emplace_back("treatment_effect must be >= 0");
  if (!(spec.noise >= 0.0 && spec.noise <= 1.0)) out.emplace_back("noise must be in [0,1]");
  if (!(spec.behavior_epsilon >= 0.0 && spec.behavior_epsilon <= 1.0)) {
    out.emplace_back("behavior_epsilon must be in [0,1]");
  }
  if (spec.n_episodes < 0) out.emplace_back("n_episodes must be >= 0");
  if (spec.max_steps < 1) out.emplace_back("max_steps must be >= 1");
  if (!(spec.start_center >= 0.0 && spec.start_center <= 1.0)) out.emplace_back("start_center must be in [0,1]");
  if (!(spec.start_spread > 0.0)) out.emplace_back("start_spread must be > 0");
  return out;
}

Json to_json(const CohortSpec& spec) {
  return Json{{"schema", kCohortSpecSchema},
              {"name", spec.name},
              {"n_severity_levels", spec.n_severity_levels},
              {"n_actions", spec.n_actions},
              {"hazard_range", {spec.h_min, spec.h_max}},
              {"treatment_effect", spec.treatment_effect},
              {"noise", spec.noise},
              {"behavior_epsilon", spec.behavior_epsilon},
              {"n_episodes", spec.n_episodes},
              {"max_steps", spec.max_steps},
              {"seed", spec.seed},
              {"start_center", spec.start_center},
              {"start_spread", spec.start_spread}};
}

CohortSpec cohort_spec_from_json(const Json& j) {
  expect_schema(j, kCohortSpecSchema);
  reject_unknown_fields(j,
                        {"schema", "name", "n_severity_levels", "n_actions", "hazard_range",
                         "treatment_effect", "noise", "behavior_epsilon", "n_episodes", "max_steps",
                         "seed", "start_center", "start_spread"},
                        "cohort spec");
  CohortSpec spec;
  read_optional(j, "name", spec.name);
  read_optional(j, "n_severity_levels", spec.n_severity_levels);
  read_optional(j, "n_actions", spec.n_actions);
  if (j.contains("hazard_range")) {
    std::vector<double> range;
    read_optional(j, "hazard_range", range);
    if (range.size() != 2) throw PreconditionError("cohort spec field 'hazard_range' needs two entries");
    spec.h_min = range[0];
    spec.h_max = range[1];
  }
  read_optional(j, "treatment_effect", spec.treatment_effect);
  read_optional(j, "noise", spec.noise);
  read_optional(j, "behavior_epsilon", spec.behavior_epsilon);
  read_optional(j, "n_episodes", spec.n_episodes);
  read_optional(j, "max_steps", spec.max_steps);
  read_optional(j, "seed", spec.seed);
  read_optional(j, "start_center", spec.start_center);
  read_optional(j, "start_spread", spec.start_spread);
  return spec;
}

std::string action_label(ActionId a) {
  const auto d = action_dose(a);
  return "Flu " + std::to_string(d.fluid) + " Vaso " + std::to_string(d.vasopressor);
}

double ladder_hazard(const CohortSpec& spec, int level) {
  return spec.h_min + (spec.h_max - spec.h_min) * std::pow(ladder_fraction(spec, level), kHazardExponent);
}

HazardMdp generate_mdp(const CohortSpec& spec) {
  if (const auto problems = validate(spec); !problems.empty()) {
    throw PreconditionError("invalid cohort spec: " + problems.front());
  }
  // Worst case is a perfectly matched treatment: down + up mass must fit in 1.
  if (kDownBase + kUpBase + spec.treatment_effect > 1.0) {
    throw PreconditionError("invalid cohort spec: treatment_effect " + std::to_string(spec.treatment_effect) +
                            " forces negative stay probabilities (max " +
                            std::to_string(1.0 - kDownBase - kUpBase) + ")");
  }
  const int L = spec.n_severity_levels;
  const StateId release = spec.release_state();
  const StateId death = spec.death_state();
  auto mdp = HazardMdp::zeros(spec.n_states(), spec.n_actions);
  mdp.h_min = spec.h_min;
  mdp.release[release] = true;
  mdp.death[death] = true;

  Rng rng = derive_rng(spec.seed, Stream::kMdp);
  // Ideal doses per level: vasopressor need grows with severity, fluids vary.
  std::vector<int> ideal_fluid(static_cast<std::size_t>(L));
  std::vector<int> ideal_vaso(static_cast<std::size_t>(L));
  for (int s = 0; s < L; ++s) {
    ideal_fluid[s] = uniform_index(rng, 3);
    const int centred = static_cast<int>(std::lround(2.0 * ladder_fraction(spec, s)));
    ideal_vaso[s] = std::clamp(centred + uniform_index(rng, 3) - 1, 0, 2);
  }

  std::vector<double> jitter(static_cast<std::size_t>(mdp.n_states));
  for (StateId s = 0; s < L; ++s) {
    const double frac = ladder_fraction(spec, s);
    const double h = ladder_hazard(spec, s);
    const double direct_release = s == 0 ? 1.0 : (1.0 - frac) * (1.0 - frac);
    for (ActionId a = 0; a < spec.n_actions; ++a) {
      const auto dose = action_dose(a);
      const double match =
          1.0 - (std::abs(dose.fluid - ideal_fluid[s]) + std::abs(dose.vasopressor - ideal_vaso[s])) / 4.0;
      const double down = kDownBase + spec.treatment_effect * match;
      const double up = kUpBase + spec.treatment_effect * (1.0 - match) / 2.0;
      auto row = mdp.row(s, a);
      row[release] += down * direct_release;
      if (s > 0) row[s - 1] += down * (1.0 - direct_release);
      row[std::min(s + 1, L - 1)] += up;
      row[s] += 1.0 - down - up;

      std::fill(jitter.begin(), jitter.end(), 0.0);
      double total = 0.0;
      for (int t = std::max(0, s - 2); t <= std::min(L - 1, s + 2); ++t) total += jitter[t] = uniform01(rng);
      if (s <= 1) total += jitter[release] = uniform01(rng);
      for (StateId t = 0; t < mdp.n_states; ++t) {
        row[t] = (1.0 - spec.noise) * row[t] + (total > 0.0 ? spec.noise * jitter[t] / total : 0.0);
      }
      // Fold round-off into the stay entry so the row sums to 1 exactly enough.
      double sum = 0.0;
      for (double p : row) sum += p;
      row[s] += 1.0 - sum;
      mdp.h(s, a) = h;
    }
  }
  for (ActionId a = 0; a < spec.n_actions; ++a) {
    mdp.row(release, a)[release] = 1.0;
    mdp.row(death, a)[death] = 1.0;
    mdp.h(death, a) = 1.0;
  }
  require_valid(mdp);
  return mdp;
}

std::vector<double> start_distribution(const CohortSpec& spec) {
  std::vector<double> w(static_cast<std::size_t>(spec.n_states()), 0.0);
  const double mean = spec.start_center * (spec.n_severity_levels - 1);
  double total = 0.0;
  for (int s = 0; s < spec.n_severity_levels; ++s) {
    const double z = (s - mean) / spec.start_spread;
    total += w[s] = std::exp(-0.5 * z * z);
  }
  for (auto& v : w) v /= total;
  return w;
}

Policy behavior_policy(const HazardMdp& mdp, const CohortSpec& spec) {
  const auto optimal = greedy_policy(survival_value_iteration(mdp).q);
  const double eps = spec.behavior_epsilon;
  const int A = mdp.n_actions;
  std::vector<double> probs(static_cast<std::size_t>(mdp.n_states) * A);
  for (StateId s = 0; s < mdp.n_states; ++s) {
    double head = 0.0;
    for (ActionId a = 0; a < A; ++a) {
      double p = eps / A + (a == optimal.action(s) ? 1.0 - eps : 0.0);
      if (a + 1 == A) p = 1.0 - head;
      probs[static_cast<std::size_t>(s) * A + a] = p;
      head += p;
    }
  }
  return Policy::stochastic(mdp.n_states, A, std::move(probs));
}

TrajectoryDataset generate_dataset(const HazardMdp& mdp, const Policy& policy, const CohortSpec& spec,
                                   std::uint64_t seed) {
  if (spec.n_states() != mdp.n_states || spec.n_actions != mdp.n_actions) {
    throw PreconditionError("generate_dataset: spec does not describe this MDP");
  }
  const auto start = start_distribution(spec);
  TrajectoryDataset data{mdp.n_states, mdp.n_actions, {}};
  data.episodes.reserve(static_cast<std::size_t>(spec.n_episodes));
  for (int i = 0; i < spec.n_episodes; ++i) {
    Rng rng = derive_rng(seed, Stream::kDataset, static_cast<std::uint64_t>(i));
    const StateId s0 = sample_categorical(rng, start);
    data.episodes.push_back(rollout(mdp, policy, s0, rng, spec.max_steps));
  }
  return data;
}

}  // namespace rl4s
