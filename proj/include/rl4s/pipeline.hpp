#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rl4s/batch.hpp"
#include "rl4s/cohort.hpp"
#include "rl4s/io.hpp"
#include "rl4s/tabular.hpp"

// File-level stages behind the command line. Every stage is a pure function
// of its inputs and seed and writes its outputs atomically into `out`.
namespace rl4s {

namespace fs = std::filesystem;

inline constexpr const char* kRegistrySchema = "cohort-registry/1";
inline constexpr const char* kLearnerConfigSchema = "learner-config/1";
inline constexpr const char* kReportSummarySchema = "report-summary/1";
inline constexpr const char* kExperimentSchema = "experiment-summary/1";
inline constexpr const char* kReproManifestSchema = "repro-manifest/1";

/// Versioned benchmark specs plus the offline-fit config they were tuned with.
struct Registry {
  int version = 0;
  std::vector<CohortSpec> specs;
  Rl4sConfig config;
};

Registry registry_from_json(const Json& j);

Json to_json(const LearnerConfig& config);
/// Missing fields keep their defaults; the learner kind comes from the caller.
LearnerConfig learner_config_from_json(const Json& j, LearnerKind kind);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const fs::path& path);

/// Reads `<name>.jsonl` together with `<name>.manifest.json` beside it.
TrajectoryDataset read_dataset(const fs::path& jsonl);
fs::path dataset_manifest_path(const fs::path& jsonl);

/// spec.json, mdp.json, behavior_policy.json, dataset.jsonl and
/// dataset.manifest.json. Returns the manifest.
Json run_generate(const CohortSpec& spec, const fs::path& out);

enum class SolveMethod { kSurvivalVi, kBaselineVi, kEnumerate };
SolveMethod solve_method_from_string(const std::string& name);

/// q_table.json (VI methods), policy.json and solve.json.
Json run_solve(const HazardMdp& mdp, SolveMethod method, double gamma, const fs::path& out);

/// curve.csv, q_table.json and learn.json. Exploration is uniform.
Json run_learn(const HazardMdp& mdp, const LearnerConfig& config, std::uint64_t seed,
               const fs::path& out);

enum class FitPipeline { kHazard, kRl4s, kBaseline };
FitPipeline fit_pipeline_from_string(const std::string& name);

/// hazard: hazard_model.json, hazard_metrics.json.
/// rl4s: the hazard files (unless `hazard` is given) plus rl4s_model.json, fit.json.
/// baseline: baseline_model.json, fit.json.
/// `truth` only adds error-vs-truth metrics.
Json run_fit(const TrajectoryDataset& data, FitPipeline pipeline, const Rl4sConfig& config,
             std::uint64_t seed, const fs::path& out, const HazardMdp* truth = nullptr,
             const HazardModel* hazard = nullptr);

/// Oracle comparison of optimal / rl4s / baseline / behavior / uniform plus
/// the stratified-Q and action-distribution reports. Writes summary.json,
/// q_strata_{exact,rl4s,baseline}.{csv,json}, actions.csv, vasopressor.csv,
/// actions.json. Returns the summary.
Json run_report(const HazardMdp& mdp, const CohortSpec& spec, const TrajectoryDataset& data,
                const FittedQModel& rl4s, const FittedQModel& baseline, const Rl4sConfig& config,
                const fs::path& out);

/// generate -> hazard/rl4s/baseline fits -> report for every registry spec,
/// one directory per spec name, then experiment.json and manifest.json with
/// the SHA-256 of every output. `seed` replaces spec i's seed with seed + i.
Json run_experiment(const Json& registry, std::optional<std::uint64_t> seed, const fs::path& out);

struct ReproResult {
  bool identical = false;
  std::size_t n_files = 0;
  std::vector<std::string> mismatches;
};

/// Replays the experiment recorded in `manifest` into `out` and compares hashes.
ReproResult run_repro(const fs::path& manifest, const fs::path& out);

}  // namespace rl4s
