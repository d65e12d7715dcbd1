#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>

#include "json.hpp"

#include "rl4s/mdp.hpp"

namespace rl4s {

using Json = nlohmann::json;

inline constexpr const char* kMdpSchema = "hazard-mdp/1";
inline constexpr const char* kDatasetSchema = "trajectory-dataset/1";
inline constexpr const char* kPolicySchema = "policy/1";
inline constexpr const char* kQTableSchema = "q-table/1";

/// "SURVIVAL" / "RETURN".
const char* kind_name(ValueKind kind);
ValueKind kind_from_name(const std::string& name);

Json to_json(const HazardMdp& mdp);
HazardMdp mdp_from_json(const Json& j);

Json to_json(const Policy& policy);
Policy policy_from_json(const Json& j);

Json to_json(const QTable& q);
QTable qtable_from_json(const Json& j);

Json to_json(const Episode& episode);
Episode episode_from_json(const Json& j);

/// Whole dataset as one document (schema trajectory-dataset/1).
Json to_json(const TrajectoryDataset& data);
TrajectoryDataset dataset_from_json(const Json& j);

/// JSON-lines form: one episode per line. Shape and counts live in the
/// manifest written next to it.
std::string to_jsonl(const TrajectoryDataset& data);
Json dataset_manifest(const TrajectoryDataset& data);
TrajectoryDataset dataset_from_jsonl(const std::string& text, const Json& manifest);

/// Throws PreconditionError when `j["schema"]` is not `expected`.
void expect_schema(const Json& j, const std::string& expected);
/// Throws PreconditionError naming the first key of `j` not in `allowed`.
void reject_unknown_fields(const Json& j, std::initializer_list<const char*> allowed,
                           const std::string& what);

std::string read_text(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

/// Writes through a temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const Json& j);

}  // namespace rl4s
