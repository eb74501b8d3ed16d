#include <set>

#include "doctest.h"
#include "ireg/world.hpp"
#include "test_util.hpp"

using namespace ireg;
using ireg::testing::contains;
using ireg::testing::make_object;
using ireg::testing::make_scene;

TEST_CASE("generate_scene respects grid invariants") {
  WorldConfig cfg;
  cfg.min_objects = 2;
  cfg.max_objects = 2;
  cfg.hard = false;
  const Scene s = generate_scene(cfg, 7);
  REQUIRE(s.size() == 2);
  CHECK_FALSE(s.objects[0].cell == s.objects[1].cell);
  for (int i = 0; i < s.size(); ++i) {
    const auto& o = s.objects[static_cast<std::size_t>(i)];
    CHECK(o.object_id == i);
    CHECK(o.bbox.valid());
    CHECK(o.bbox.x_min >= 0.0);
    CHECK(o.bbox.y_min >= 0.0);
    CHECK(o.bbox.x_max <= s.width);
    CHECK(o.bbox.y_max <= s.height);
    CHECK(o.bbox == object_bbox(cfg.schema, o.category, o.size, o.cell, cfg.cell_size));
  }
}

TEST_CASE("generate_scene is deterministic in (config, seed)") {
  WorldConfig cfg;
  CHECK(generate_scene(cfg, 11) == generate_scene(cfg, 11));
  CHECK_FALSE(generate_scene(cfg, 11) == generate_scene(cfg, 12));
}

TEST_CASE("hard scenes contain a shared category") {
  WorldConfig cfg;
  for (std::uint64_t seed : {3u, 4u, 5u, 6u}) {
    const Scene s = generate_scene(cfg, seed);
    std::map<std::string, int> counts;
    for (const auto& o : s.objects) ++counts[o.category];
    int best = 0;
    for (const auto& [k, v] : counts) best = std::max(best, v);
    CHECK(best >= 2);
    CHECK(s.hard);
  }
}

TEST_CASE("infeasible configs are rejected") {
  WorldConfig cfg;
  cfg.grid_rows = 2;
  cfg.grid_cols = 2;
  cfg.max_objects = 5;
  CHECK_THROWS_AS(generate_scene(cfg, 1), ConfigError);
  WorldConfig bad;
  bad.min_objects = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("positional words follow the grid center") {
  CHECK(positional_words_for({0, 0}, 4, 4) == std::vector<std::string>{"top", "left"});
  CHECK(positional_words_for({3, 2}, 4, 4) == std::vector<std::string>{"bottom", "right"});
  CHECK(positional_words_for({1, 1}, 3, 3) == std::vector<std::string>{"middle"});
  CHECK(positional_words_for({0, 1}, 3, 3) == std::vector<std::string>{"top"});
}

TEST_CASE("oracle scores count matches minus contradictions") {
  AttributeSchema schema;
  const Scene s = make_scene({make_object(schema, 0, "ball", "red", "small", 0, 0),
                              make_object(schema, 1, "box", "blue", "small", 0, 3)});
  CHECK(oracle_scores(s, tokenize_expression("blue ball"), schema) == std::vector<int>{0, 0});
  CHECK(oracle_scores(s, tokenize_expression("red ball"), schema) == std::vector<int>{2, -2});
  CHECK(oracle_scores(s, tokenize_expression("zebra"), schema) == std::vector<int>{0, 0});
  CHECK(known_token_count(tokenize_expression("the red zebra"), schema) == 1);
}

TEST_CASE("canonical expressions: color disambiguates two balls") {
  AttributeSchema schema;
  const Scene s = make_scene({make_object(schema, 0, "ball", "red", "small", 0, 0),
                              make_object(schema, 1, "ball", "blue", "small", 0, 3)});
  const auto exprs = canonical_expressions(s, 0, schema);
  CHECK(contains(exprs, "red ball"));
  for (const auto& e : exprs) CHECK(uniquely_resolves(s, 0, e, schema));
}

TEST_CASE("canonical expressions: a lone object is its category") {
  AttributeSchema schema;
  const Scene s = make_scene({make_object(schema, 0, "cup", "green", "large", 2, 2)});
  const auto exprs = canonical_expressions(s, 0, schema);
  REQUIRE(exprs.size() == 1);
  CHECK(join_tokens(exprs[0]) == "cup");
}

TEST_CASE("canonical expressions: identical balls need a positional word") {
  AttributeSchema schema;
  const Scene s = make_scene({make_object(schema, 0, "ball", "red", "small", 1, 0),
                              make_object(schema, 1, "ball", "red", "small", 1, 3)});
  const auto exprs = canonical_expressions(s, 0, schema);
  CHECK(contains(exprs, "ball left"));
  for (const auto& e : exprs) {
    const auto& pos = AttributeSchema::positional_words();
    bool has_pos = false;
    for (const auto& t : e) has_pos |= std::find(pos.begin(), pos.end(), t) != pos.end();
    CHECK(has_pos);
  }
  CHECK(canonical_expressions(s, 0, schema, false).empty());
}

TEST_CASE("canonical expressions keep the noun and minimal modifiers") {
  WorldConfig cfg;
  const AttributeSchema& schema = cfg.schema;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene(cfg, seed);
    for (int t = 0; t < s.size(); ++t) {
      const auto exprs = canonical_expressions(s, t, schema);
      REQUIRE_FALSE(exprs.empty());
      for (const auto& e : exprs) {
        CHECK(uniquely_resolves(s, t, e, schema));
        for (std::size_t drop = 0; drop < e.size(); ++drop) {
          if (std::find(schema.categories.begin(), schema.categories.end(), e[drop]) != schema.categories.end())
            continue;
          Expression shorter = e;
          shorter.erase(shorter.begin() + static_cast<long>(drop));
          CHECK_FALSE(uniquely_resolves(s, t, shorter, schema));
        }
      }
    }
  }
}

TEST_CASE("sample_negative_region") {
  AttributeSchema schema;
  const Scene two = make_scene({make_object(schema, 0, "ball", "red", "small", 0, 0),
                                make_object(schema, 1, "ball", "red", "small", 0, 3)});
  CHECK(sample_negative_region(two, 0, 5) == 1);
  const Scene lone = make_scene({make_object(schema, 0, "cup", "red", "small", 0, 0),
                                 make_object(schema, 1, "ball", "red", "small", 0, 3)});
  CHECK_FALSE(sample_negative_region(lone, 0, 5).has_value());
  const Scene three = make_scene({make_object(schema, 0, "ball", "red", "small", 0, 0),
                                  make_object(schema, 1, "ball", "blue", "small", 0, 3),
                                  make_object(schema, 2, "ball", "green", "small", 3, 3)});
  const auto a = sample_negative_region(three, 0, 99);
  CHECK(a == sample_negative_region(three, 0, 99));
  REQUIRE(a.has_value());
  CHECK(*a != 0);
}

TEST_CASE("render_scene draws one element per object") {
  WorldConfig cfg;
  cfg.min_objects = 3;
  cfg.max_objects = 3;
  const Scene s = generate_scene(cfg, 2);
  const std::string svg = render_scene(s);
  CHECK(ireg::testing::count_substr(svg, "class=\"object\"") == 3);
  CHECK(ireg::testing::count_substr(svg, "class=\"overlay\"") == 0);
  for (const auto& o : s.objects)
    CHECK(svg.find("data-object-id=\"" + std::to_string(o.object_id) + "\"") != std::string::npos);

  Scene box = make_scene({});
  SceneObject o;
  o.object_id = 0;
  o.category = "box";
  o.color = "red";
  o.size = "small";
  o.bbox = {10, 10, 40, 40};
  box.objects.push_back(o);
  const std::string one = render_scene(box, {.highlight_object = std::nullopt, .overlays = {{{1, 2, 3, 4}}}});
  CHECK(one.find("x=\"10\" y=\"10\" width=\"30\" height=\"30\"") != std::string::npos);
  CHECK(ireg::testing::count_substr(one, "class=\"overlay\"") == 1);
}

TEST_CASE("generate_dataset: splits are disjoint and every expression resolves") {
  DatasetConfig cfg;
  cfg.n_scenes = 60;
  const Dataset d = generate_dataset(cfg);
  std::set<std::string> seen[3];
  for (const auto& s : d.samples()) {
    seen[static_cast<int>(s.split)].insert(s.scene_id);
    REQUIRE_FALSE(s.expressions.empty());
    const Scene& scene = d.scene(s.scene_id);
    CHECK(s.target_index < scene.size());
    for (const auto& e : s.expressions) CHECK(uniquely_resolves(scene, s.target_index, e, cfg.world.schema));
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (const auto& id : seen[a]) CHECK_FALSE(seen[b].contains(id));
  CHECK_FALSE(seen[0].empty());
  CHECK_FALSE(seen[2].empty());

  const Dataset again = generate_dataset(cfg);
  CHECK(again.scenes() == d.scenes());
}
