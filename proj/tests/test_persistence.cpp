#include <filesystem>

#include "doctest.h"
#include "ireg/persistence.hpp"
#include "speaker_fixtures.hpp"

using namespace ireg;
using namespace ireg::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ireg_persist_" + name);
  fs::remove_all(p);
  return p;
}

Dataset small_dataset(std::uint64_t seed = 7) {
  DatasetConfig cfg;
  cfg.n_scenes = 30;
  cfg.seed = seed;
  return generate_dataset(cfg);
}

}  // namespace

TEST_CASE("dataset files round-trip and are reproducible") {
  const Dataset d = small_dataset();
  const fs::path a = scratch("a"), b = scratch("b");
  save_dataset(d, a);
  save_dataset(small_dataset(), b);
  for (const char* f : {"world.json", "scenes.jsonl", "samples.jsonl"}) CHECK(file_hash(a / f) == file_hash(b / f));
  const Dataset loaded = load_dataset(a);
  CHECK(loaded.scenes() == d.scenes());
  REQUIRE(loaded.samples().size() == d.samples().size());
  for (std::size_t i = 0; i < d.samples().size(); ++i) {
    CHECK(loaded.samples()[i].expressions == d.samples()[i].expressions);
    CHECK(loaded.samples()[i].split == d.samples()[i].split);
  }
  const std::string header = read_text(a / "scenes.jsonl").substr(0, 40);
  CHECK(header.find("schema_version") != std::string::npos);
  CHECK_THROWS_AS(read_jsonl(a / "scenes.jsonl", "ref_sample"), PersistenceError);
  write_text(a / "bad.jsonl", "{\"schema_version\":99,\"kind\":\"scene\"}\n");
  CHECK_THROWS_AS(read_jsonl(a / "bad.jsonl", "scene"), PersistenceError);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("corpus stats survive serialization") {
  const Dataset d = small_dataset();
  const CorpusStats stats = corpus_stats_for(d.samples());
  const CorpusStats back = corpus_stats_from_json(Json::parse(corpus_stats_to_json(stats).dump()));
  CHECK(back.corpus_size() == stats.corpus_size());
  CHECK(back.frequencies() == stats.frequencies());
  const auto& s = d.samples().front();
  CHECK(cider(s.expressions.front(), s.expressions, back) == cider(s.expressions.front(), s.expressions, stats));
}

TEST_CASE("interaction records and traces round-trip") {
  InteractionRecord r;
  r.scene_id = "train-00001";
  r.target_index = 2;
  r.gt_expression = tokenize_expression("red ball left");
  r.generated_expression = tokenize_expression("ball");
  r.predicted_index = 1;
  r.predicted_bbox = {1.25, 2.5, 30.125, 40.0625};
  r.iou_at_collection = 0.0;
  InteractionHistory h;
  h.records = {r, r};
  const fs::path p = scratch("hist.jsonl");
  save_history(h, p);
  const auto back = load_history(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].gt_expression == r.gt_expression);
  CHECK(back[0].predicted_bbox == r.predicted_bbox);

  RoundTrace t;
  t.scene_id = "test-00003";
  t.target_index = 1;
  t.max_round = 5;
  t.rounds = {{0, tokenize_expression("ball"), 0, {0, 0, 1, 1}, 0.1 + 0.2, false},
              {1, tokenize_expression("red ball"), 1, {2, 2, 3, 3}, 1.0, true}};
  t.termination = Termination::kLocated;
  t.located_round = 1;
  t.final_expression = tokenize_expression("red ball");
  const fs::path tp = scratch("traces.jsonl");
  save_traces({t}, tp);
  const auto traces = load_traces(tp);
  REQUIRE(traces.size() == 1);
  CHECK(traces[0] == t);
  CHECK(Json(traces[0]).dump() == Json(t).dump());
  fs::remove(p);
  fs::remove(tp);
}

TEST_CASE("manifest and hashing") {
  Manifest m;
  m.command = "gen-data";
  m.config = Json{{"seed", 7}};
  const Json j = m.to_json();
  CHECK(j["config_hash"] == config_hash(Json{{"seed", 7}}));
  CHECK(j["schema_version"] == kSchemaVersion);
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(config_hash(Json{{"seed", 7}}) != config_hash(Json{{"seed", 8}}));
}

TEST_CASE("config structs round-trip") {
  DatasetConfig c;
  c.n_scenes = 123;
  c.world.hard = false;
  c.world.schema.colors = {"red", "blue"};
  const DatasetConfig back = Json(c).get<DatasetConfig>();
  CHECK(back.n_scenes == 123);
  CHECK_FALSE(back.world.hard);
  CHECK(back.world.schema.colors == c.world.schema.colors);
  SpeakerConfig s = tiny_config();
  CHECK(Json(s).get<SpeakerConfig>() == s);
}
