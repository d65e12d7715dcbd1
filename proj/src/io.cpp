#include "rl4s/io.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace rl4s {
namespace {

template <typename T>
T field(const Json& j, const char* name) {
  if (!j.contains(name)) throw PreconditionError(std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("bad field '") + name + "': " + e.what());
  }
}

}  // namespace

const char* kind_name(ValueKind kind) {
  return kind == ValueKind::kSurvival ? "SURVIVAL" : "RETURN";
}

ValueKind kind_from_name(const std::string& name) {
  if (name == "SURVIVAL") return ValueKind::kSurvival;
  if (name == "RETURN") return ValueKind::kReturn;
  throw PreconditionError("unknown value_kind '" + name + "'");
}

void expect_schema(const Json& j, const std::string& expected) {
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string() ||
      j["schema"].get<std::string>() != expected) {
    throw PreconditionError("expected schema '" + expected + "'");
  }
}

Json to_json(const HazardMdp& mdp) {
  return Json{{"schema", kMdpSchema},
              {"n_states", mdp.n_states},
              {"n_actions", mdp.n_actions},
              {"h_min", mdp.h_min},
              {"transition", mdp.transition},
              {"hazard", mdp.hazard},
              {"release", mdp.release},
              {"death", mdp.death}};
}

HazardMdp mdp_from_json(const Json& j) {
  expect_schema(j, kMdpSchema);
  auto mdp = HazardMdp::zeros(field<int>(j, "n_states"), field<int>(j, "n_actions"));
  mdp.h_min = field<double>(j, "h_min");
  mdp.transition = field<std::vector<double>>(j, "transition");
  mdp.hazard = field<std::vector<double>>(j, "hazard");
  mdp.release = field<std::vector<bool>>(j, "release");
  mdp.death = field<std::vector<bool>>(j, "death");
  const auto S = static_cast<std::size_t>(mdp.n_states);
  const auto A = static_cast<std::size_t>(mdp.n_actions);
  if (mdp.transition.size() != S * A * S || mdp.hazard.size() != S * A ||
      mdp.release.size() != S || mdp.death.size() != S) {
    throw PreconditionError("hazard-mdp arrays do not match n_states/n_actions");
  }
  return mdp;
}

Json to_json(const Policy& policy) {
  Json j{{"schema", kPolicySchema},
         {"n_states", policy.n_states()},
         {"n_actions", policy.n_actions()},
         {"kind", policy.is_deterministic() ? "deterministic" : "stochastic"}};
  if (policy.is_deterministic()) {
    std::vector<ActionId> actions;
    for (StateId s = 0; s < policy.n_states(); ++s) actions.push_back(policy.action(s));
    j["actions"] = actions;
  } else {
    j["probabilities"] = policy.probabilities();
  }
  return j;
}

Policy policy_from_json(const Json& j) {
  expect_schema(j, kPolicySchema);
  const auto kind = field<std::string>(j, "kind");
  const int n_actions = field<int>(j, "n_actions");
  if (kind == "deterministic") {
    return Policy::deterministic(field<std::vector<ActionId>>(j, "actions"), n_actions);
  }
  if (kind == "stochastic") {
    return Policy::stochastic(field<int>(j, "n_states"), n_actions,
                              field<std::vector<double>>(j, "probabilities"));
  }
  throw PreconditionError("unknown policy kind '" + kind + "'");
}

Json to_json(const QTable& q) {
  return Json{{"schema", kQTableSchema},
              {"n_states", q.n_states},
              {"n_actions", q.n_actions},
              {"value_kind", kind_name(q.kind)},
              {"values", q.values}};
}

QTable qtable_from_json(const Json& j) {
  expect_schema(j, kQTableSchema);
  QTable q;
  q.n_states = field<int>(j, "n_states");
  q.n_actions = field<int>(j, "n_actions");
  q.kind = kind_from_name(field<std::string>(j, "value_kind"));
  q.values = field<std::vector<double>>(j, "values");
  if (q.n_states <= 0 || q.n_actions <= 0 ||
      q.values.size() != static_cast<std::size_t>(q.n_states) * q.n_actions) {
    throw PreconditionError("q-table values do not match its shape");
  }
  return q;
}

Json to_json(const Episode& episode) {
  Json steps = Json::array();
  for (const auto& s : episode.steps) steps.push_back({s.state, s.action, s.next_state, s.t});
  return Json{{"steps", steps},
              {"outcome", to_string(episode.outcome)},
              {"terminal_state", episode.terminal_state},
              {"terminal_step", episode.terminal_step}};
}

Episode episode_from_json(const Json& j) {
  Episode e;
  e.outcome = outcome_from_string(field<std::string>(j, "outcome"));
  e.terminal_state = field<int>(j, "terminal_state");
  e.terminal_step = field<int>(j, "terminal_step");
  for (const auto& s : field<std::vector<std::array<int, 4>>>(j, "steps")) {
    e.steps.push_back({s[0], s[1], s[2], s[3]});
  }
  return e;
}

Json to_json(const TrajectoryDataset& data) {
  Json episodes = Json::array();
  for (const auto& e : data.episodes) episodes.push_back(to_json(e));
  return Json{{"schema", kDatasetSchema},
              {"n_states", data.n_states},
              {"n_actions", data.n_actions},
              {"episodes", episodes}};
}

TrajectoryDataset dataset_from_json(const Json& j) {
  expect_schema(j, kDatasetSchema);
  TrajectoryDataset data;
  data.n_states = field<int>(j, "n_states");
  data.n_actions = field<int>(j, "n_actions");
  for (const auto& e : field<Json>(j, "episodes")) data.episodes.push_back(episode_from_json(e));
  return data;
}

std::string to_jsonl(const TrajectoryDataset& data) {
  std::string out;
  for (const auto& e : data.episodes) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

Json dataset_manifest(const TrajectoryDataset& data) {
  return Json{{"schema", kDatasetSchema},
              {"n_states", data.n_states},
              {"n_actions", data.n_actions},
              {"n_episodes", data.episodes.size()},
              {"n_released", data.count(Outcome::kReleased)},
              {"n_died", data.count(Outcome::kDied)},
              {"n_truncated", data.count(Outcome::kTruncated)},
              {"n_transient_steps", data.transient_steps()},
              {"mortality", data.mortality()}};
}

TrajectoryDataset dataset_from_jsonl(const std::string& text, const Json& manifest) {
  expect_schema(manifest, kDatasetSchema);
  TrajectoryDataset data;
  data.n_states = field<int>(manifest, "n_states");
  data.n_actions = field<int>(manifest, "n_actions");
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      data.episodes.push_back(episode_from_json(Json::parse(line)));
    } catch (const Json::parse_error& e) {
      throw PreconditionError(std::string("malformed dataset line: ") + e.what());
    }
  }
  if (manifest.contains("n_episodes") &&
      manifest["n_episodes"].get<std::size_t>() != data.episodes.size()) {
    throw PreconditionError("dataset line count does not match the manifest");
  }
  return data;
}

void reject_unknown_fields(const Json& j, std::initializer_list<const char*> allowed,
                           const std::string& what) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* name : allowed) known = known || key == name;
    if (!known) throw PreconditionError(what + ": unknown field '" + key + "'");
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw PreconditionError(path.string() + ": " + e.what());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const Json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace rl4s
