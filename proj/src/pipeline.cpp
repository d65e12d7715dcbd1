#include "rl4s/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "rl4s/exact.hpp"
#include "rl4s/hazard.hpp"

namespace rl4s {
namespace {

template <typename T>
void read_optional(const Json& j, const char* name, T& out) {
  if (!j.contains(name)) return;
  try {
    out = j.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("field '") + name + "': " + e.what());
  }
}

HazardModel fit_hazard_model(const TrajectoryDataset& data, const Rl4sConfig& config, std::uint64_t seed) {
  Rng rng = derive_rng(seed, Stream::kHazardFit);
  return fit(build_training_set(data), data.n_states, data.n_actions, config.hazard, rng);
}

// Mean |h-hat - h| over pairs visited at least `min_visits` times.
Json hazard_error_on_visited(const HazardModel& model, const TrajectoryDataset& data,
                             const HazardMdp& mdp, double min_visits) {
  std::vector<double> visits(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0.0);
  for (const auto& e : data.episodes) {
    for (const auto& step : e.steps) visits[static_cast<std::size_t>(step.state) * mdp.n_actions + step.action] += 1;
  }
  double err = 0.0;
  int pairs = 0;
  for (StateId s = 0; s < mdp.n_states; ++s) {
    for (ActionId a = 0; a < mdp.n_actions; ++a) {
      if (visits[static_cast<std::size_t>(s) * mdp.n_actions + a] < min_visits) continue;
      err += std::abs(model.predict(s, a) - mdp.h(s, a));
      ++pairs;
    }
  }
  return Json{{"min_visits", min_visits},
              {"pairs", pairs},
              {"mean_abs_error", pairs > 0 ? Json(err / pairs) : Json()}};
}

void write_dataset(const TrajectoryDataset& data, const fs::path& out) {
  write_text_atomic(out / "dataset.jsonl", to_jsonl(data));
  write_json_atomic(out / "dataset.manifest.json", dataset_manifest(data));
}

Json write_strata(const StratifiedQReport& report, const fs::path& out, const std::string& name) {
  write_text_atomic(out / ("q_strata_" + name + ".csv"), to_csv(report));
  const auto j = to_json(report);
  write_json_atomic(out / ("q_strata_" + name + ".json"), j);
  return j;
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) out.push_back(fs::relative(entry.path(), root.parent_path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Registry registry_from_json(const Json& j) {
  expect_schema(j, kRegistrySchema);
  Registry r;
  read_optional(j, "version", r.version);
  if (!j.contains("specs") || !j.at("specs").is_array() || j.at("specs").empty()) {
    throw PreconditionError("registry needs a non-empty 'specs' array");
  }
  for (const auto& s : j.at("specs")) {
    auto spec = cohort_spec_from_json(s);
    if (const auto problems = validate(spec); !problems.empty()) {
      throw PreconditionError("registry spec '" + spec.name + "': " + problems.front());
    }
    r.specs.push_back(std::move(spec));
  }
  if (j.contains("rl4s_config")) r.config = rl4s_config_from_json(j.at("rl4s_config"));
  return r;
}

Json to_json(const LearnerConfig& c) {
  return Json{{"schema", kLearnerConfigSchema},
              {"schedule",
               {{"kind", c.schedule.kind == ScheduleKind::kHarmonic ? "harmonic" : "constant"},
                {"c", c.schedule.c}}},
              {"n_updates", c.n_updates},
              {"eval_every", c.eval_every},
              {"gamma", c.gamma},
              {"max_episode_steps", c.max_episode_steps}};
}

LearnerConfig learner_config_from_json(const Json& j, LearnerKind kind) {
  expect_schema(j, kLearnerConfigSchema);
  reject_unknown_fields(j, {"schema", "schedule", "n_updates", "eval_every", "gamma", "max_episode_steps"},
                        "learner config");
  LearnerConfig c;
  c.kind = kind;
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    std::string name = "harmonic";
    read_optional(s, "kind", name);
    if (name == "harmonic") {
      c.schedule.kind = ScheduleKind::kHarmonic;
    } else if (name == "constant") {
      c.schedule.kind = ScheduleKind::kConstant;
    } else {
      throw PreconditionError("learner config field 'schedule.kind': unknown schedule '" + name + "'");
    }
    read_optional(s, "c", c.schedule.c);
  }
  read_optional(j, "n_updates", c.n_updates);
  read_optional(j, "eval_every", c.eval_every);
  read_optional(j, "gamma", c.gamma);
  read_optional(j, "max_episode_steps", c.max_episode_steps);
  if (!(c.schedule.c > 0.0)) throw PreconditionError("learner config field 'schedule.c' must be > 0");
  if (c.n_updates < 0) throw PreconditionError("learner config field 'n_updates' must be >= 0");
  if (c.eval_every < 1) throw PreconditionError("learner config field 'eval_every' must be >= 1");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw PreconditionError("learner config field 'gamma' must be in (0,1)");
  if (c.max_episode_steps < 1) {
    throw PreconditionError("learner config field 'max_episode_steps' must be >= 1");
  }
  return c;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string file_sha256(const fs::path& path) { return sha256_hex(read_text(path)); }

fs::path dataset_manifest_path(const fs::path& jsonl) {
  auto p = jsonl;
  p.replace_extension(".manifest.json");
  return p;
}

TrajectoryDataset read_dataset(const fs::path& jsonl) {
  const auto manifest = dataset_manifest_path(jsonl);
  if (!fs::exists(manifest)) {
    throw PreconditionError("dataset manifest " + manifest.string() + " not found next to " + jsonl.string());
  }
  auto data = dataset_from_jsonl(read_text(jsonl), read_json(manifest));
  if (const auto problems = validate(data); !problems.empty()) {
    throw PreconditionError(jsonl.string() + ": " + problems.front());
  }
  return data;
}

Json run_generate(const CohortSpec& spec, const fs::path& out) {
  const auto mdp = generate_mdp(spec);
  const auto behavior = behavior_policy(mdp, spec);
  const auto data = generate_dataset(mdp, behavior, spec, spec.seed);
  write_json_atomic(out / "spec.json", to_json(spec));
  write_json_atomic(out / "mdp.json", to_json(mdp));
  write_json_atomic(out / "behavior_policy.json", to_json(behavior));
  write_dataset(data, out);
  return dataset_manifest(data);
}

SolveMethod solve_method_from_string(const std::string& name) {
  if (name == "survival-vi") return SolveMethod::kSurvivalVi;
  if (name == "baseline-vi") return SolveMethod::kBaselineVi;
  if (name == "enumerate") return SolveMethod::kEnumerate;
  throw PreconditionError("unknown method '" + name + "' (expected survival-vi, baseline-vi or enumerate)");
}

Json run_solve(const HazardMdp& mdp, SolveMethod method, double gamma, const fs::path& out) {
  require_valid(mdp);
  Json summary;
  if (method == SolveMethod::kEnumerate) {
    const auto result = enumerate_deterministic_policies(mdp);
    const auto vi = survival_value_iteration(mdp);
    const auto vi_values = survival_state_values(mdp, greedy_policy(vi.q));
    double gap = 0.0;
    for (StateId s = 0; s < mdp.n_states; ++s) gap = std::max(gap, std::abs(vi_values[s] - result.best_values[s]));
    write_json_atomic(out / "policy.json", to_json(result.best));
    summary = Json{{"method", "enumerate"},
                   {"n_policies", result.n_policies},
                   {"best_values", result.best_values},
                   {"survival_vi_greedy_values", vi_values},
                   {"max_abs_difference", gap}};
  } else {
    const bool survival = method == SolveMethod::kSurvivalVi;
    const auto result = survival ? survival_value_iteration(mdp) : baseline_value_iteration(mdp, gamma);
    write_json_atomic(out / "q_table.json", to_json(result.q));
    write_json_atomic(out / "policy.json", to_json(greedy_policy(result.q)));
    summary = Json{{"method", survival ? "survival-vi" : "baseline-vi"},
                   {"iterations", result.iterations},
                   {"final_residual", result.final_residual}};
    if (survival) {
      summary["iteration_bound"] = value_iteration_bound(SolverOptions{}.tol, mdp.h_min);
    } else {
      summary["gamma"] = gamma;
    }
  }
  summary["schema"] = "solve-summary/1";
  write_json_atomic(out / "solve.json", summary);
  return summary;
}

Json run_learn(const HazardMdp& mdp, const LearnerConfig& config, std::uint64_t seed, const fs::path& out) {
  require_valid(mdp);
  Rng rng = derive_rng(seed, Stream::kLearner);
  const auto run = run_learner(mdp, Policy::uniform(mdp.n_states, mdp.n_actions), config, rng);
  write_text_atomic(out / "curve.csv", curve_csv(run.curve));
  write_json_atomic(out / "q_table.json", to_json(run.state.q));
  Json summary{{"schema", "learn-summary/1"},
               {"learner", config.kind == LearnerKind::kSurvival ? "survival-q" : "baseline-q"},
               {"seed", seed},
               {"config", to_json(config)},
               {"n_updates", run.state.steps},
               {"warnings", run.warnings}};
  if (!run.curve.empty()) {
    summary["final_sup_error"] = run.curve.back().sup_error;
    summary["final_policy_match_fraction"] = run.curve.back().policy_match_fraction;
  }
  write_json_atomic(out / "learn.json", summary);
  return summary;
}

FitPipeline fit_pipeline_from_string(const std::string& name) {
  if (name == "hazard") return FitPipeline::kHazard;
  if (name == "rl4s") return FitPipeline::kRl4s;
  if (name == "baseline") return FitPipeline::kBaseline;
  throw PreconditionError("unknown pipeline '" + name + "' (expected hazard, rl4s or baseline)");
}

Json run_fit(const TrajectoryDataset& data, FitPipeline pipeline, const Rl4sConfig& config,
             std::uint64_t seed, const fs::path& out, const HazardMdp* truth, const HazardModel* hazard) {
  if (const auto problems = validate(config); !problems.empty()) {
    throw PreconditionError("invalid rl4s config: " + problems.front());
  }
  if (truth != nullptr) {
    if (const auto problems = validate(data, truth); !problems.empty()) {
      throw PreconditionError("dataset does not match the MDP: " + problems.front());
    }
  }
  Json summary{{"schema", "fit-summary/1"}, {"seed", seed}, {"config", to_json(config)}};

  if (pipeline == FitPipeline::kBaseline) {
    summary["pipeline"] = "baseline";
    const auto model = fit_baseline(data, config, seed);
    write_json_atomic(out / "baseline_model.json", to_json(model));
    summary["final_loss"] = model.final_loss;
    write_json_atomic(out / "fit.json", summary);
    return summary;
  }

  HazardModel fitted;
  if (hazard == nullptr) {
    fitted = fit_hazard_model(data, config, seed);
    hazard = &fitted;
    auto metrics = to_json(evaluate(fitted, build_training_set(data), truth));
    if (truth != nullptr) metrics["visited_500"] = hazard_error_on_visited(fitted, data, *truth, 500);
    write_json_atomic(out / "hazard_model.json", to_json(fitted));
    write_json_atomic(out / "hazard_metrics.json", metrics);
    summary["hazard_final_loss"] = fitted.final_loss;
  }
  if (pipeline == FitPipeline::kHazard) {
    summary["pipeline"] = "hazard";
    return summary;
  }

  summary["pipeline"] = "rl4s";
  const auto tuples = make_training_tuples(data, *hazard);
  const auto model = fit_rl4s(tuples, data.n_states, data.n_actions, config, seed);
  write_json_atomic(out / "rl4s_model.json", to_json(model));
  summary["n_tuples"] = tuples.size();
  summary["final_loss"] = model.final_loss;
  write_json_atomic(out / "fit.json", summary);
  return summary;
}

Json run_report(const HazardMdp& mdp, const CohortSpec& spec, const TrajectoryDataset& data,
                const FittedQModel& rl4s, const FittedQModel& baseline, const Rl4sConfig& config,
                const fs::path& out) {
  require_valid(mdp);
  if (const auto problems = validate(data, &mdp); !problems.empty()) {
    throw PreconditionError("dataset does not match the MDP: " + problems.front());
  }
  for (const auto* m : {&rl4s, &baseline}) {
    if (m->features.n_states != mdp.n_states || m->features.n_actions != mdp.n_actions) {
      throw PreconditionError("fitted model shape does not match the MDP");
    }
  }
  if (spec.n_states() != mdp.n_states) throw PreconditionError("spec does not match the MDP");

  const auto exact = survival_value_iteration(mdp).q;
  const std::vector<std::pair<std::string, Policy>> policies{
      {"optimal", greedy_policy(exact)},
      {"rl4s", greedy_policy(rl4s)},
      {"baseline", greedy_policy(baseline)},
      {"behavior", behavior_policy(mdp, spec)},
      {"uniform", Policy::uniform(mdp.n_states, mdp.n_actions)}};
  const auto start = start_distribution(spec);

  Json rows = Json::array();
  Json by_state = Json::object();
  double optimal = 0.0;
  bool dominates = true;
  for (const auto& [name, pi] : policies) {
    const double v = expected_survival(mdp, pi, start);
    if (name == "optimal") optimal = v;
    dominates = dominates && optimal >= v - 1e-9;
    rows.push_back({{"policy", name}, {"survival", v}});
    by_state[name] = survival_state_values(mdp, pi);
  }

  const int k = config.last_k;
  const auto s_exact = write_strata(stratified_q_report(exact, data, k), out, "exact");
  const auto s_rl4s = write_strata(stratified_q_report(rl4s.to_qtable(), data, k), out, "rl4s");
  const auto s_base = write_strata(stratified_q_report(baseline.to_qtable(), data, k), out, "baseline");

  const auto actions = action_distribution_report(policies, data, k);
  write_text_atomic(out / "actions.csv", actions_csv(actions));
  write_text_atomic(out / "vasopressor.csv", vasopressor_csv(actions));
  write_json_atomic(out / "actions.json", to_json(actions));

  Json summary{{"schema", kReportSummarySchema},
               {"spec", spec.name},
               {"mortality", data.mortality()},
               {"start_distribution", start},
               {"policies", rows},
               {"survival_by_start_state", by_state},
               {"optimal_dominates", dominates},
               {"strata_separation",
                {{"exact", s_exact["separation"]},
                 {"rl4s", s_rl4s["separation"]},
                 {"baseline", s_base["separation"]}}}};
  write_json_atomic(out / "summary.json", summary);
  return summary;
}

Json run_experiment(const Json& registry_json, std::optional<std::uint64_t> seed, const fs::path& out) {
  auto registry = registry_from_json(registry_json);
  const auto& config = registry.config;
  Json specs = Json::array();
  int within_behavior = 0;
  bool optimal_dominates = true;

  for (std::size_t i = 0; i < registry.specs.size(); ++i) {
    auto& spec = registry.specs[i];
    if (seed) spec.seed = *seed + i;
    const fs::path dir = out / spec.name;
    fs::remove_all(dir);

    const auto mdp = generate_mdp(spec);
    const auto data = generate_dataset(mdp, behavior_policy(mdp, spec), spec, spec.seed);
    write_json_atomic(dir / "spec.json", to_json(spec));
    write_json_atomic(dir / "mdp.json", to_json(mdp));
    write_json_atomic(dir / "behavior_policy.json", to_json(behavior_policy(mdp, spec)));
    write_dataset(data, dir);

    const auto hazard = fit_hazard_model(data, config, spec.seed);
    auto metrics = to_json(evaluate(hazard, build_training_set(data), &mdp));
    const auto visited = hazard_error_on_visited(hazard, data, mdp, 500);
    metrics["visited_500"] = visited;
    write_json_atomic(dir / "hazard_model.json", to_json(hazard));
    write_json_atomic(dir / "hazard_metrics.json", metrics);

    const auto rl4s = fit_rl4s(make_training_tuples(data, hazard), mdp.n_states, mdp.n_actions, config, spec.seed);
    write_json_atomic(dir / "rl4s_model.json", to_json(rl4s));
    const auto baseline = fit_baseline(data, config, spec.seed);
    write_json_atomic(dir / "baseline_model.json", to_json(baseline));

    const auto summary = run_report(mdp, spec, data, rl4s, baseline, config, dir / "report");
    std::map<std::string, double> v;
    for (const auto& row : summary["policies"]) v[row["policy"]] = row["survival"].get<double>();
    const bool ok = v["rl4s"] >= v["behavior"] - 0.01;
    within_behavior += ok ? 1 : 0;
    optimal_dominates = optimal_dominates && summary["optimal_dominates"].get<bool>();
    specs.push_back({{"name", spec.name},
                     {"seed", spec.seed},
                     {"mortality", data.mortality()},
                     {"survival", v},
                     {"rl4s_within_behavior", ok},
                     {"hazard_visited_500", visited},
                     {"strata_separation", summary["strata_separation"]}});
  }

  Json experiment{{"schema", kExperimentSchema},
                  {"registry_version", registry.version},
                  {"config", to_json(config)},
                  {"specs", specs},
                  {"headline",
                   {{"n_specs", registry.specs.size()},
                    {"rl4s_within_behavior", within_behavior},
                    {"optimal_dominates", optimal_dominates}}}};
  write_json_atomic(out / "experiment.json", experiment);

  Json hashes = Json::object();
  hashes["experiment.json"] = file_sha256(out / "experiment.json");
  for (const auto& spec : registry.specs) {
    for (const auto& rel : files_under(out / spec.name)) {
      hashes[rel.generic_string()] = file_sha256(out / rel);
    }
  }
  Json manifest{{"schema", kReproManifestSchema},
                {"command", "experiment"},
                {"registry", registry_json},
                {"seed", seed ? Json(*seed) : Json()},
                {"outputs", hashes}};
  write_json_atomic(out / "manifest.json", manifest);
  return experiment;
}

ReproResult run_repro(const fs::path& manifest_path, const fs::path& out) {
  const auto manifest = read_json(manifest_path);
  expect_schema(manifest, kReproManifestSchema);
  if (manifest.value("command", "") != "experiment") {
    throw PreconditionError("repro: unsupported command in manifest");
  }
  std::optional<std::uint64_t> seed;
  if (manifest.contains("seed") && !manifest["seed"].is_null()) seed = manifest["seed"].get<std::uint64_t>();
  run_experiment(manifest.at("registry"), seed, out);

  const auto replayed = read_json(out / "manifest.json").at("outputs");
  const auto& recorded = manifest.at("outputs");
  ReproResult result;
  result.n_files = recorded.size();
  for (const auto& [name, hash] : recorded.items()) {
    if (!replayed.contains(name)) {
      result.mismatches.push_back(name + ": missing from replay");
    } else if (replayed[name] != hash) {
      result.mismatches.push_back(name + ": hash differs");
    }
  }
  for (const auto& [name, hash] : replayed.items()) {
    if (!recorded.contains(name)) result.mismatches.push_back(name + ": not in the recorded manifest");
  }
  result.identical = result.mismatches.empty();
  return result;
}

}  // namespace rl4s
