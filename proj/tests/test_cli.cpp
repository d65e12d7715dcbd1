#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "rl4s/pipeline.hpp"

using namespace rl4s;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "rl4s-cli-test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(RL4S_CLI) + " " + args + " > " + (scratch() / "stdout.txt").string() +
                          " 2> " + (scratch() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string path(const std::string& rel) { return (scratch() / rel).string(); }

// A small cohort so the whole chain runs in a couple of seconds.
std::string small_spec() {
  CohortSpec spec;
  spec.name = "small";
  spec.n_episodes = 3000;
  spec.seed = 21;
  write_json_atomic(path("small_spec.json"), to_json(spec));
  return path("small_spec.json");
}

std::string small_config() {
  Rl4sConfig config;
  config.lr = 0.1;
  config.n_iterations = 3000;
  write_json_atomic(path("config.json"), to_json(config));
  return path("config.json");
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run("") == 2);
  CHECK(run("generate --spec " + path("missing.json") + " --out " + path("x")) == 2);
  CHECK(run("solve --mdp " + path("missing.json") + " --method nope --out " + path("x")) == 2);
  CHECK(read_text(scratch() / "stderr.txt").find("method") != std::string::npos);
  CHECK(run("frobnicate") == 2);

  Json bad = to_json(CohortSpec{});
  bad["behavior_epsilon"] = 2.0;
  write_json_atomic(path("bad_spec.json"), bad);
  CHECK(run("generate --spec " + path("bad_spec.json") + " --out " + path("x")) == 2);
  CHECK(read_text(scratch() / "stderr.txt").find("behavior_epsilon") != std::string::npos);
}

TEST_CASE("generate is deterministic") {
  const auto spec = small_spec();
  REQUIRE(run("generate --spec " + spec + " --out " + path("gen_a")) == 0);
  REQUIRE(run("generate --spec " + spec + " --out " + path("gen_b")) == 0);
  for (const char* f : {"mdp.json", "dataset.jsonl", "dataset.manifest.json", "behavior_policy.json", "spec.json"}) {
    CAPTURE(f);
    CHECK(file_sha256(scratch() / "gen_a" / f) == file_sha256(scratch() / "gen_b" / f));
  }
  REQUIRE(run("generate --spec " + spec + " --seed 22 --out " + path("gen_c")) == 0);
  CHECK(file_sha256(scratch() / "gen_a" / "dataset.jsonl") != file_sha256(scratch() / "gen_c" / "dataset.jsonl"));
}

TEST_CASE("benchmark generate lands in the mortality band") {
  auto spec = testing::registry_specs().front();
  write_json_atomic(path("bench_spec.json"), to_json(spec));
  REQUIRE(run("generate --spec " + path("bench_spec.json") + " --out " + path("bench")) == 0);
  const auto manifest = read_json(scratch() / "bench" / "dataset.manifest.json");
  const double mortality = manifest["mortality"];
  CHECK(mortality >= 0.05);
  CHECK(mortality <= 0.15);
  CHECK(read_dataset(scratch() / "bench" / "dataset.jsonl").episodes.size() == manifest["n_episodes"]);
}

TEST_CASE("solve") {
  write_json_atomic(path("chain.json"), to_json(testing::chain_mdp()));
  REQUIRE(run("solve --mdp " + path("chain.json") + " --method survival-vi --out " + path("solve_vi")) == 0);
  const auto q = qtable_from_json(read_json(scratch() / "solve_vi" / "q_table.json"));
  CHECK(std::abs(q(0, 0) - 0.72) <= 1e-12);

  REQUIRE(run("solve --mdp " + path("chain.json") + " --method baseline-vi --gamma 0.999999 --out " +
              path("solve_base")) == 0);
  const auto qb = qtable_from_json(read_json(scratch() / "solve_base" / "q_table.json"));
  CHECK(qb.kind == ValueKind::kReturn);
  CHECK(std::abs(qb(0, 0) - 0.44) <= 1e-3);

  Rng rng = derive_rng(4, Stream::kTest);
  RandomMdpOptions opts;
  opts.n_transient = 4;
  opts.n_actions = 3;
  write_json_atomic(path("small_mdp.json"), to_json(make_random_mdp(opts, rng)));
  REQUIRE(run("solve --mdp " + path("small_mdp.json") + " --method enumerate --out " + path("solve_enum")) == 0);
  const auto summary = read_json(scratch() / "solve_enum" / "solve.json");
  CHECK(summary["n_policies"] == 81);
  CHECK(summary["max_abs_difference"].get<double>() <= 1e-9);
}

TEST_CASE("learn") {
  write_json_atomic(path("chain.json"), to_json(testing::chain_mdp()));
  LearnerConfig config;
  config.n_updates = 0;
  write_json_atomic(path("learn0.json"), to_json(config));
  REQUIRE(run("learn --mdp " + path("chain.json") + " --learner survival-q --config " + path("learn0.json") +
              " --out " + path("learn0")) == 0);
  const auto q = qtable_from_json(read_json(scratch() / "learn0" / "q_table.json"));
  for (double v : q.values) CHECK(v == 0.0);

  config.n_updates = 200'000;
  write_json_atomic(path("learn.json"), to_json(config));
  REQUIRE(run("learn --mdp " + path("chain.json") + " --learner survival-q --config " + path("learn.json") +
              " --seed 3 --out " + path("learn")) == 0);
  const auto csv = read_text(scratch() / "learn" / "curve.csv");
  CHECK(csv.rfind("step,sup_error,policy_match_fraction\n", 0) == 0);
  CHECK(read_json(scratch() / "learn" / "learn.json")["final_sup_error"].get<double>() <= 0.01);

  REQUIRE(run("learn --mdp " + path("chain.json") + " --learner baseline-q --out " + path("learn_b")) == 0);
  CHECK(qtable_from_json(read_json(scratch() / "learn_b" / "q_table.json")).kind == ValueKind::kReturn);
}

TEST_CASE("fit and report") {
  const auto spec = small_spec();
  const auto config = small_config();
  REQUIRE(run("generate --spec " + spec + " --out " + path("run")) == 0);
  const std::string data = path("run/dataset.jsonl"), mdp = path("run/mdp.json");

  REQUIRE(run("fit --dataset " + data + " --pipeline hazard --mdp " + mdp + " --out " + path("hz")) == 0);
  const auto metrics = read_json(scratch() / "hz" / "hazard_metrics.json");
  CHECK(metrics.contains("sup_error"));
  CHECK(metrics["calibration"].size() == 10);
  CHECK(hazard_model_from_json(read_json(scratch() / "hz" / "hazard_model.json")).features.dim() == 90);

  REQUIRE(run("fit --dataset " + data + " --pipeline rl4s --config " + config + " --hazard " +
              path("hz/hazard_model.json") + " --out " + path("rl")) == 0);
  CHECK(!fs::exists(scratch() / "rl" / "hazard_model.json"));
  REQUIRE(run("fit --dataset " + data + " --pipeline baseline --config " + config + " --out " + path("bl")) == 0);
  CHECK(fitted_q_from_json(read_json(scratch() / "bl" / "baseline_model.json")).kind == ValueKind::kReturn);

  const std::string report_args = "report --mdp " + mdp + " --spec " + path("run/spec.json") + " --dataset " + data +
                                  " --rl4s " + path("rl/rl4s_model.json") + " --baseline " +
                                  path("bl/baseline_model.json") + " --config " + config + " --out ";
  REQUIRE(run(report_args + path("rep_a")) == 0);
  REQUIRE(run(report_args + path("rep_b")) == 0);
  const auto summary = read_json(scratch() / "rep_a" / "summary.json");
  REQUIRE(summary["policies"].size() == 5);
  const char* names[] = {"optimal", "rl4s", "baseline", "behavior", "uniform"};
  const double optimal = summary["policies"][0]["survival"];
  for (int i = 0; i < 5; ++i) {
    CHECK(summary["policies"][i]["policy"] == names[i]);
    CHECK(optimal >= summary["policies"][i]["survival"].get<double>() - 1e-9);
  }
  for (const auto& entry : fs::directory_iterator(scratch() / "rep_a")) {
    const auto name = entry.path().filename();
    CAPTURE(name.string());
    CHECK(file_sha256(entry.path()) == file_sha256(scratch() / "rep_b" / name));
  }
  CHECK(read_text(scratch() / "rep_a" / "q_strata_exact.csv").rfind("stratum,statistic,value\n", 0) == 0);

  CHECK(run("fit --dataset " + data + " --pipeline rl4s --mdp " + path("chain_missing.json") + " --out " +
            path("x")) == 2);
}

TEST_CASE("divergence exits 3") {
  const auto spec = small_spec();
  REQUIRE(run("generate --spec " + spec + " --out " + path("div")) == 0);
  Rl4sConfig config;
  config.lr = 1e6;
  config.n_iterations = 2000;
  write_json_atomic(path("diverge.json"), to_json(config));
  CHECK(run("fit --dataset " + path("div/dataset.jsonl") + " --pipeline baseline --config " + path("diverge.json") +
            " --out " + path("div_fit")) == 3);
  CHECK(read_text(scratch() / "stderr.txt").find("diverged") != std::string::npos);
}

TEST_CASE("repro detects tampering") {
  auto registry = read_json(std::string(RL4S_REGISTRY_DIR) + "/benchmark.json");
  registry["specs"] = Json::array({registry["specs"][0]});
  registry["specs"][0]["n_episodes"] = 2000;
  registry["rl4s_config"]["n_iterations"] = 2000;
  write_json_atomic(path("mini_registry.json"), registry);
  REQUIRE(run("experiment --spec " + path("mini_registry.json") + " --out " + path("exp")) == 0);
  REQUIRE(run("repro --manifest " + path("exp/manifest.json") + " --out " + path("exp_replay")) == 0);
  CHECK(read_text(scratch() / "stdout.txt").find("identical") != std::string::npos);

  auto manifest = read_json(scratch() / "exp" / "manifest.json");
  manifest["outputs"]["experiment.json"] = std::string(64, '0');
  write_json_atomic(path("tampered.json"), manifest);
  CHECK(run("repro --manifest " + path("tampered.json") + " --out " + path("exp_replay2")) == 3);
}
