#pragma once

// JSON forms of the domain types, line-delimited record files and run
// manifests. Every file carries a schema_version.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "ireg/interaction.hpp"
#include "ireg/listener.hpp"
#include "ireg/metrics.hpp"
#include "ireg/speaker.hpp"
#include "ireg/training.hpp"
#include "ireg/world.hpp"

namespace ireg {

using Json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

class PersistenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void to_json(Json& j, const BBox& b);
void from_json(const Json& j, BBox& b);
void to_json(Json& j, const AttributeSchema& s);
void from_json(const Json& j, AttributeSchema& s);
void to_json(Json& j, const WorldConfig& c);
void from_json(const Json& j, WorldConfig& c);
void to_json(Json& j, const DatasetConfig& c);
void from_json(const Json& j, DatasetConfig& c);
void to_json(Json& j, const SceneObject& o);
void from_json(const Json& j, SceneObject& o);
void to_json(Json& j, const Scene& s);
void from_json(const Json& j, Scene& s);
void to_json(Json& j, const RefSample& s);
void from_json(const Json& j, RefSample& s);
void to_json(Json& j, const SpeakerConfig& c);
void from_json(const Json& j, SpeakerConfig& c);
void to_json(Json& j, const LearnedListenerConfig& c);
void from_json(const Json& j, LearnedListenerConfig& c);
void to_json(Json& j, const InteractionRecord& r);
void from_json(const Json& j, InteractionRecord& r);
void to_json(Json& j, const RoundEntry& e);
void from_json(const Json& j, RoundEntry& e);
void to_json(Json& j, const RoundTrace& t);
void from_json(const Json& j, RoundTrace& t);
void to_json(Json& j, const EvaluationTable& t);

Json corpus_stats_to_json(const CorpusStats& stats);
CorpusStats corpus_stats_from_json(const Json& j);

/// FNV-1a 64 over bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
/// Hash of the compact dump of `config`.
std::string config_hash(const Json& config);
std::string file_hash(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);

/// Line-delimited file: a header line {"schema_version", "kind"} followed by
/// one JSON record per line.
void write_jsonl(const std::filesystem::path& path, const std::string& kind, const std::vector<Json>& records);
std::vector<Json> read_jsonl(const std::filesystem::path& path, const std::string& kind);

/// world.json, scenes.jsonl and samples.jsonl under `dir`.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

void save_history(const InteractionHistory& history, const std::filesystem::path& path);
std::vector<InteractionRecord> load_history(const std::filesystem::path& path);

void save_traces(const std::vector<RoundTrace>& traces, const std::filesystem::path& path);
std::vector<RoundTrace> load_traces(const std::filesystem::path& path);

/// Run manifest: command, config and its hash, seeds, input/output hashes,
/// metric curves and tables.
struct Manifest {
  std::string command;
  Json config = Json::object();
  Json seeds = Json::object();
  Json inputs = Json::object();
  Json outputs = Json::object();
  Json metrics = Json::object();
  std::string started_at;
  std::string finished_at;

  Json to_json() const;
};

std::string utc_timestamp();
/// Records the hash of every existing path in `files` under `target`.
void hash_files(Json& target, const std::vector<std::filesystem::path>& files);

}  // namespace ireg
