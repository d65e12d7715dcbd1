// rl4s: generate cohorts, solve exactly, learn, fit offline models, report.
// Exit codes: 0 success, 2 usage/validation error, 3 runtime failure.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rl4s/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rl4s;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 3;

// Accepts either an rl4s-config file or a registry that embeds one.
Rl4sConfig load_rl4s_config(const std::string& path) {
  if (path.empty()) return {};
  const auto j = read_json(path);
  if (j.value("schema", "") == kRegistrySchema) return registry_from_json(j).config;
  return rl4s_config_from_json(j);
}

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survival-objective RL on hazard MDPs: synthetic cohorts, exact solvers, learners, offline fits."};
  app.require_subcommand(1);

  std::string spec_path, mdp_path, dataset_path, config_path, out_dir, method, learner, pipeline;
  std::string rl4s_path, baseline_path, hazard_path, manifest_path;
  std::optional<std::uint64_t> seed;
  double gamma = 0.999;

  auto* generate = app.add_subcommand("generate", "Generate an MDP, behavior policy and dataset from a cohort spec");
  generate->add_option("--spec", spec_path, "cohort-spec JSON")->required();
  generate->add_option("--out", out_dir, "output directory")->required();
  generate->add_option("--seed", seed, "override the spec seed");

  auto* solve = app.add_subcommand("solve", "Solve an MDP exactly");
  solve->add_option("--mdp", mdp_path, "hazard-mdp JSON")->required();
  solve->add_option("--method", method, "survival-vi | baseline-vi | enumerate")
      ->required()
      ->check(CLI::IsMember({"survival-vi", "baseline-vi", "enumerate"}));
  solve->add_option("--gamma", gamma, "discount for baseline-vi")->capture_default_str();
  solve->add_option("--out", out_dir, "output directory")->required();

  auto* learn = app.add_subcommand("learn", "Run a tabular learner against the exact solution");
  learn->add_option("--mdp", mdp_path, "hazard-mdp JSON")->required();
  learn->add_option("--learner", learner, "survival-q | baseline-q")
      ->required()
      ->check(CLI::IsMember({"survival-q", "baseline-q"}));
  learn->add_option("--config", config_path, "learner-config JSON (defaults if omitted)");
  learn->add_option("--seed", seed, "random seed (default 1)");
  learn->add_option("--out", out_dir, "output directory")->required();

  auto* fitcmd = app.add_subcommand("fit", "Fit the hazard model, RL4S or the terminal-reward baseline offline");
  fitcmd->add_option("--dataset", dataset_path, "dataset JSON-lines (manifest beside it)")->required();
  fitcmd->add_option("--pipeline", pipeline, "hazard | rl4s | baseline")
      ->required()
      ->check(CLI::IsMember({"hazard", "rl4s", "baseline"}));
  fitcmd->add_option("--config", config_path, "rl4s-config or registry JSON (defaults if omitted)");
  fitcmd->add_option("--mdp", mdp_path, "true MDP, adds error-vs-truth metrics");
  fitcmd->add_option("--hazard", hazard_path, "reuse a fitted hazard-model for the rl4s pipeline");
  fitcmd->add_option("--seed", seed, "random seed (default 1)");
  fitcmd->add_option("--out", out_dir, "output directory")->required();

  auto* report = app.add_subcommand("report", "Oracle policy comparison plus Q-strata and action reports");
  report->add_option("--mdp", mdp_path, "hazard-mdp JSON")->required();
  report->add_option("--spec", spec_path, "cohort-spec JSON the MDP was generated from")->required();
  report->add_option("--dataset", dataset_path, "dataset JSON-lines")->required();
  report->add_option("--rl4s", rl4s_path, "fitted RL4S model")->required();
  report->add_option("--baseline", baseline_path, "fitted baseline model")->required();
  report->add_option("--config", config_path, "rl4s-config or registry JSON (for last_k)");
  report->add_option("--out", out_dir, "output directory")->required();

  auto* experiment = app.add_subcommand("experiment", "Run every registry spec end to end and record output hashes");
  spec_path = std::string(RL4S_REGISTRY_DIR) + "/benchmark.json";
  experiment->add_option("--spec", spec_path, "cohort registry JSON")->capture_default_str();
  experiment->add_option("--seed", seed, "replace spec i's seed with seed + i");
  experiment->add_option("--out", out_dir, "output directory")->required();

  auto* repro = app.add_subcommand("repro", "Replay an experiment manifest and verify output hashes");
  repro->add_option("--manifest", manifest_path, "manifest.json written by experiment")->required();
  repro->add_option("--out", out_dir, "directory for the replay")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*generate) {
      auto spec = cohort_spec_from_json(read_json(spec_path));
      if (seed) spec.seed = *seed;
      if (const auto problems = validate(spec); !problems.empty()) {
        throw PreconditionError("invalid cohort spec: " + problems.front());
      }
      print(run_generate(spec, out_dir));
    } else if (*solve) {
      print(run_solve(mdp_from_json(read_json(mdp_path)), solve_method_from_string(method), gamma, out_dir));
    } else if (*learn) {
      const auto kind = learner == "survival-q" ? LearnerKind::kSurvival : LearnerKind::kBaseline;
      LearnerConfig config;
      config.kind = kind;
      if (!config_path.empty()) config = learner_config_from_json(read_json(config_path), kind);
      print(run_learn(mdp_from_json(read_json(mdp_path)), config, seed.value_or(1), out_dir));
    } else if (*fitcmd) {
      const auto data = read_dataset(dataset_path);
      std::optional<HazardMdp> truth;
      if (!mdp_path.empty()) truth = mdp_from_json(read_json(mdp_path));
      std::optional<HazardModel> hazard;
      if (!hazard_path.empty()) hazard = hazard_model_from_json(read_json(hazard_path));
      print(run_fit(data, fit_pipeline_from_string(pipeline), load_rl4s_config(config_path), seed.value_or(1),
                    out_dir, truth ? &*truth : nullptr, hazard ? &*hazard : nullptr));
    } else if (*report) {
      const auto summary = run_report(
          mdp_from_json(read_json(mdp_path)), cohort_spec_from_json(read_json(spec_path)),
          read_dataset(dataset_path), fitted_q_from_json(read_json(rl4s_path)),
          fitted_q_from_json(read_json(baseline_path)), load_rl4s_config(config_path), out_dir);
      print(Json{{"policies", summary["policies"]}, {"optimal_dominates", summary["optimal_dominates"]}});
    } else if (*experiment) {
      const auto result = run_experiment(read_json(spec_path), seed, out_dir);
      print(result["headline"]);
    } else if (*repro) {
      const auto result = run_repro(manifest_path, out_dir);
      for (const auto& m : result.mismatches) std::cerr << "mismatch: " << m << "\n";
      std::cout << (result.identical ? "repro: identical" : "repro: DIFFERENT") << " (" << result.n_files
                << " files)\n";
      return result.identical ? 0 : kRuntime;
    }
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return kRuntime;
  }
  return 0;
}
