#include "ireg/persistence.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

namespace ireg {

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : it->template get<T>();
}

void check_version(const Json& j, const std::string& what) {
  const int v = get_or(j, "schema_version", -1);
  if (v != kSchemaVersion)
    throw PersistenceError(what + ": unsupported schema_version " + std::to_string(v));
}

}  // namespace

void to_json(Json& j, const BBox& b) { j = Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }
void from_json(const Json& j, BBox& b) {
  if (!j.is_array() || j.size() != 4) throw PersistenceError("bbox must be [x_min, y_min, x_max, y_max]");
  b = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void to_json(Json& j, const AttributeSchema& s) {
  j = Json{{"categories", s.categories}, {"colors", s.colors}, {"sizes", s.sizes}};
}
void from_json(const Json& j, AttributeSchema& s) {
  AttributeSchema d;
  s.categories = get_or(j, "categories", d.categories);
  s.colors = get_or(j, "colors", d.colors);
  s.sizes = get_or(j, "sizes", d.sizes);
}

void to_json(Json& j, const WorldConfig& c) {
  j = Json{{"grid_rows", c.grid_rows},       {"grid_cols", c.grid_cols},
           {"cell_size", c.cell_size},       {"min_objects", c.min_objects},
           {"max_objects", c.max_objects},   {"n_regions", c.n_regions},
           {"schema", c.schema},             {"hard", c.hard},
           {"min_same_category", c.min_same_category}, {"positional_words", c.positional_words},
           {"max_attempts", c.max_attempts}};
}
void from_json(const Json& j, WorldConfig& c) {
  WorldConfig d;
  c.grid_rows = get_or(j, "grid_rows", d.grid_rows);
  c.grid_cols = get_or(j, "grid_cols", d.grid_cols);
  c.cell_size = get_or(j, "cell_size", d.cell_size);
  c.min_objects = get_or(j, "min_objects", d.min_objects);
  c.max_objects = get_or(j, "max_objects", d.max_objects);
  c.n_regions = get_or(j, "n_regions", d.n_regions);
  c.schema = j.contains("schema") ? j.at("schema").get<AttributeSchema>() : d.schema;
  c.hard = get_or(j, "hard", d.hard);
  c.min_same_category = get_or(j, "min_same_category", d.min_same_category);
  c.positional_words = get_or(j, "positional_words", d.positional_words);
  c.max_attempts = get_or(j, "max_attempts", d.max_attempts);
}

void to_json(Json& j, const DatasetConfig& c) {
  j = Json{{"world", c.world},
           {"n_scenes", c.n_scenes},
           {"targets_per_scene", c.targets_per_scene},
           {"train_fraction", c.train_fraction},
           {"val_fraction", c.val_fraction},
           {"seed", c.seed}};
}
void from_json(const Json& j, DatasetConfig& c) {
  DatasetConfig d;
  c.world = j.contains("world") ? j.at("world").get<WorldConfig>() : d.world;
  c.n_scenes = get_or(j, "n_scenes", d.n_scenes);
  c.targets_per_scene = get_or(j, "targets_per_scene", d.targets_per_scene);
  c.train_fraction = get_or(j, "train_fraction", d.train_fraction);
  c.val_fraction = get_or(j, "val_fraction", d.val_fraction);
  c.seed = get_or(j, "seed", d.seed);
}

void to_json(Json& j, const SceneObject& o) {
  j = Json{{"object_id", o.object_id}, {"category", o.category}, {"color", o.color},
           {"size", o.size},           {"cell", {o.cell.row, o.cell.col}}, {"bbox", o.bbox}};
}
void from_json(const Json& j, SceneObject& o) {
  o.object_id = j.at("object_id").get<int>();
  o.category = j.at("category").get<std::string>();
  o.color = j.at("color").get<std::string>();
  o.size = j.at("size").get<std::string>();
  o.cell = {j.at("cell").at(0).get<int>(), j.at("cell").at(1).get<int>()};
  o.bbox = j.at("bbox").get<BBox>();
}

void to_json(Json& j, const Scene& s) {
  j = Json{{"scene_id", s.scene_id}, {"width", s.width},   {"height", s.height},
           {"grid_rows", s.grid_rows}, {"grid_cols", s.grid_cols}, {"hard", s.hard},
           {"rng_seed", s.rng_seed}, {"objects", s.objects}};
}
void from_json(const Json& j, Scene& s) {
  s.scene_id = j.at("scene_id").get<std::string>();
  s.width = j.at("width").get<double>();
  s.height = j.at("height").get<double>();
  s.grid_rows = j.at("grid_rows").get<int>();
  s.grid_cols = j.at("grid_cols").get<int>();
  s.hard = j.at("hard").get<bool>();
  s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  s.objects = j.at("objects").get<std::vector<SceneObject>>();
}

void to_json(Json& j, const RefSample& s) {
  std::vector<std::string> texts;
  for (const auto& e : s.expressions) texts.push_back(join_tokens(e));
  j = Json{{"scene_id", s.scene_id}, {"target_index", s.target_index}, {"expressions", texts},
           {"split", to_string(s.split)}};
}
void from_json(const Json& j, RefSample& s) {
  s.scene_id = j.at("scene_id").get<std::string>();
  s.target_index = j.at("target_index").get<int>();
  s.expressions.clear();
  for (const auto& t : j.at("expressions")) s.expressions.push_back(tokenize_expression(t.get<std::string>()));
  s.split = split_from_string(j.at("split").get<std::string>());
}

void to_json(Json& j, const SpeakerConfig& c) {
  j = Json{{"n_regions", c.n_regions},
           {"attr_dim", c.attr_dim},
           {"d_model", c.d_model},
           {"heads", c.heads},
           {"encoder_layers", c.encoder_layers},
           {"decoder_layers", c.decoder_layers},
           {"ffn_dim", c.ffn_dim},
           {"max_expression_length", c.max_expression_length},
           {"max_prompt_length", c.max_prompt_length},
           {"init_seed", c.init_seed}};
}
void from_json(const Json& j, SpeakerConfig& c) {
  SpeakerConfig d;
  c.n_regions = get_or(j, "n_regions", d.n_regions);
  c.attr_dim = get_or(j, "attr_dim", d.attr_dim);
  c.d_model = get_or(j, "d_model", d.d_model);
  c.heads = get_or(j, "heads", d.heads);
  c.encoder_layers = get_or(j, "encoder_layers", d.encoder_layers);
  c.decoder_layers = get_or(j, "decoder_layers", d.decoder_layers);
  c.ffn_dim = get_or(j, "ffn_dim", d.ffn_dim);
  c.max_expression_length = get_or(j, "max_expression_length", d.max_expression_length);
  c.max_prompt_length = get_or(j, "max_prompt_length", d.max_prompt_length);
  c.init_seed = get_or(j, "init_seed", d.init_seed);
}

void to_json(Json& j, const LearnedListenerConfig& c) {
  j = Json{{"embedding_dim", c.embedding_dim}, {"hidden_dim", c.hidden_dim},
           {"epochs", c.epochs},               {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate}, {"seed", c.seed}};
}
void from_json(const Json& j, LearnedListenerConfig& c) {
  LearnedListenerConfig d;
  c.embedding_dim = get_or(j, "embedding_dim", d.embedding_dim);
  c.hidden_dim = get_or(j, "hidden_dim", d.hidden_dim);
  c.epochs = get_or(j, "epochs", d.epochs);
  c.batch_size = get_or(j, "batch_size", d.batch_size);
  c.learning_rate = get_or(j, "learning_rate", d.learning_rate);
  c.seed = get_or(j, "seed", d.seed);
}

void to_json(Json& j, const InteractionRecord& r) {
  j = Json{{"scene_id", r.scene_id},
           {"target_index", r.target_index},
           {"gt_expression", join_tokens(r.gt_expression)},
           {"generated_expression", join_tokens(r.generated_expression)},
           {"predicted_index", r.predicted_index},
           {"predicted_bbox", r.predicted_bbox},
           {"iou_at_collection", r.iou_at_collection}};
}
void from_json(const Json& j, InteractionRecord& r) {
  r.scene_id = j.at("scene_id").get<std::string>();
  r.target_index = j.at("target_index").get<int>();
  r.gt_expression = tokenize_expression(j.at("gt_expression").get<std::string>());
  r.generated_expression = tokenize_expression(j.at("generated_expression").get<std::string>());
  r.predicted_index = j.at("predicted_index").get<int>();
  r.predicted_bbox = j.at("predicted_bbox").get<BBox>();
  r.iou_at_collection = j.at("iou_at_collection").get<double>();
}

void to_json(Json& j, const RoundEntry& e) {
  j = Json{{"round", e.round},
           {"expression", join_tokens(e.expression)},
           {"predicted_index", e.predicted_index},
           {"predicted_bbox", e.predicted_bbox},
           {"iou", e.iou},
           {"located", e.located}};
}
void from_json(const Json& j, RoundEntry& e) {
  e.round = j.at("round").get<int>();
  e.expression = tokenize_expression(j.at("expression").get<std::string>());
  e.predicted_index = j.at("predicted_index").get<int>();
  e.predicted_bbox = j.at("predicted_bbox").get<BBox>();
  e.iou = j.at("iou").get<double>();
  e.located = j.at("located").get<bool>();
}

void to_json(Json& j, const RoundTrace& t) {
  j = Json{{"scene_id", t.scene_id},
           {"target_index", t.target_index},
           {"max_round", t.max_round},
           {"rounds", t.rounds},
           {"termination", to_string(t.termination)},
           {"located_round", t.located_round ? Json(*t.located_round) : Json(nullptr)},
           {"final_expression", join_tokens(t.final_expression)},
           {"stagnation_count", t.stagnation_count}};
}
void from_json(const Json& j, RoundTrace& t) {
  t.scene_id = j.at("scene_id").get<std::string>();
  t.target_index = j.at("target_index").get<int>();
  t.max_round = j.at("max_round").get<int>();
  t.rounds = j.at("rounds").get<std::vector<RoundEntry>>();
  t.termination = termination_from_string(j.at("termination").get<std::string>());
  t.located_round = j.at("located_round").is_null() ? std::nullopt : std::optional<int>(j.at("located_round").get<int>());
  t.final_expression = tokenize_expression(j.at("final_expression").get<std::string>());
  t.stagnation_count = j.at("stagnation_count").get<int>();
}

void to_json(Json& j, const EvaluationTable& t) {
  Json budgets = Json::array();
  for (std::size_t k = 0; k < t.accuracy_by_budget.size(); ++k)
    budgets.push_back({{"budget", k + 1}, {"accuracy", t.accuracy_by_budget[k]}});
  j = Json{{"schema_version", kSchemaVersion}, {"max_round", t.max_round},   {"samples", t.samples},
           {"accuracy_by_budget", budgets},    {"cider", t.cider},           {"mean_rounds", t.mean_rounds}};
}

Json corpus_stats_to_json(const CorpusStats& stats) {
  return Json{{"schema_version", kSchemaVersion},
              {"corpus_size", stats.corpus_size()},
              {"document_frequency", stats.frequencies()}};
}

CorpusStats corpus_stats_from_json(const Json& j) {
  check_version(j, "corpus stats");
  return CorpusStats(j.at("document_frequency").get<std::map<std::string, int>>(), j.at("corpus_size").get<int>());
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const Json& config) { return fnv1a_hex(config.dump()); }

std::string file_hash(const std::filesystem::path& path) { return fnv1a_hex(read_text(path)); }

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot write " + path.string());
  out << text;
  if (!out) throw PersistenceError("write failed: " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw PersistenceError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& value) { write_text(path, value.dump(2) + "\n"); }

void write_jsonl(const std::filesystem::path& path, const std::string& kind, const std::vector<Json>& records) {
  std::string text = Json{{"schema_version", kSchemaVersion}, {"kind", kind}}.dump() + "\n";
  for (const auto& r : records) text += r.dump() + "\n";
  write_text(path, text);
}

std::vector<Json> read_jsonl(const std::filesystem::path& path, const std::string& kind) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw PersistenceError(path.string() + ": empty file");
  const Json header = Json::parse(line);
  check_version(header, path.string());
  if (header.value("kind", "") != kind)
    throw PersistenceError(path.string() + ": expected kind " + kind + ", found " + header.value("kind", ""));
  std::vector<Json> out;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(Json::parse(line));
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  write_json(dir / "world.json", Json{{"schema_version", kSchemaVersion}, {"world", data.world()}});
  std::vector<Json> scenes, samples;
  for (const auto& s : data.scenes()) scenes.push_back(s);
  for (const auto& s : data.samples()) samples.push_back(s);
  write_jsonl(dir / "scenes.jsonl", "scene", scenes);
  write_jsonl(dir / "samples.jsonl", "ref_sample", samples);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const Json world = read_json(dir / "world.json");
  check_version(world, "world.json");
  std::vector<Scene> scenes;
  std::vector<RefSample> samples;
  for (const auto& j : read_jsonl(dir / "scenes.jsonl", "scene")) scenes.push_back(j.get<Scene>());
  for (const auto& j : read_jsonl(dir / "samples.jsonl", "ref_sample")) samples.push_back(j.get<RefSample>());
  return Dataset(world.at("world").get<WorldConfig>(), std::move(scenes), std::move(samples));
}

void save_history(const InteractionHistory& history, const std::filesystem::path& path) {
  std::vector<Json> records;
  for (const auto& r : history.records) records.push_back(r);
  write_jsonl(path, "interaction_record", records);
}

std::vector<InteractionRecord> load_history(const std::filesystem::path& path) {
  std::vector<InteractionRecord> out;
  for (const auto& j : read_jsonl(path, "interaction_record")) out.push_back(j.get<InteractionRecord>());
  return out;
}

void save_traces(const std::vector<RoundTrace>& traces, const std::filesystem::path& path) {
  std::vector<Json> records;
  for (const auto& t : traces) records.push_back(t);
  write_jsonl(path, "round_trace", records);
}

std::vector<RoundTrace> load_traces(const std::filesystem::path& path) {
  std::vector<RoundTrace> out;
  for (const auto& j : read_jsonl(path, "round_trace")) out.push_back(j.get<RoundTrace>());
  return out;
}

Json Manifest::to_json() const {
  return Json{{"schema_version", kSchemaVersion},
              {"command", command},
              {"config", config},
              {"config_hash", config_hash(config)},
              {"seeds", seeds},
              {"inputs", inputs},
              {"outputs", outputs},
              {"metrics", metrics},
              {"started_at", started_at},
              {"finished_at", finished_at}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void hash_files(Json& target, const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files)
    if (std::filesystem::exists(f)) target[f.filename().string()] = file_hash(f);
}

}  // namespace ireg
