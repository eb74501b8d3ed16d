#include "doctest.h"
#include "ireg/checkpoint.hpp"
#include "ireg/listener.hpp"
#include "test_util.hpp"

using namespace ireg;
using ireg::testing::make_object;
using ireg::testing::make_scene;

TEST_CASE("oracle listener examples") {
  AttributeSchema schema;
  const OracleListener oracle(schema);
  const Scene balls = make_scene({make_object(schema, 0, "ball", "red", "small", 0, 0),
                                  make_object(schema, 1, "ball", "blue", "small", 0, 3)});
  const auto v = oracle.locate(balls, tokenize_expression("red ball"));
  CHECK(v.predicted_index == 0);
  CHECK(v.predicted_bbox == balls.objects[0].bbox);
  CHECK_FALSE(v.uninformative);
  CHECK(oracle.locate(balls, tokenize_expression("blue ball")).predicted_index == 1);

  const Scene twins = make_scene({make_object(schema, 0, "ball", "red", "small", 0, 0),
                                  make_object(schema, 1, "ball", "red", "small", 0, 3)});
  CHECK(oracle.locate(twins, tokenize_expression("red ball")).predicted_index == 0);

  const Scene mixed = make_scene({make_object(schema, 0, "ball", "red", "small", 0, 0),
                                  make_object(schema, 1, "box", "blue", "small", 0, 3)});
  const auto tie = oracle.locate(mixed, tokenize_expression("blue ball"));
  CHECK(tie.scores == std::vector<double>{0.0, 0.0});
  CHECK(tie.predicted_index == 0);

  const auto garbage = oracle.locate(mixed, tokenize_expression("the zebra"));
  CHECK(garbage.uninformative);
  CHECK(garbage.predicted_index == 0);
  CHECK(oracle.locate(mixed, {}).uninformative);
}

TEST_CASE("oracle grounds every ground-truth expression") {
  DatasetConfig cfg;
  cfg.n_scenes = 50;
  const Dataset d = generate_dataset(cfg);
  const OracleListener oracle(cfg.world.schema);
  CHECK(grounding_accuracy(oracle, d, d.samples()) == 1.0);
}

TEST_CASE("learned listener trains, freezes and reloads") {
  DatasetConfig cfg;
  cfg.n_scenes = 300;
  const Dataset d = generate_dataset(cfg);
  LearnedListenerConfig lc;
  lc.epochs = 12;
  ListenerTrainingReport report;
  LearnedListener listener = train_learned_listener(d, d.split(Split::kTrain), d.split(Split::kVal), lc, &report);
  CHECK(listener.frozen());
  CHECK(report.val_accuracy > 0.8);
  CHECK(report.val_accuracy == doctest::Approx(grounding_accuracy(listener, d, d.split(Split::kVal))));

  nn::Adam adam(listener.parameters(), {});
  nn::Gradients grads(listener.parameters());
  CHECK_THROWS_AS(listener.apply_update(adam, grads), ImmutableError);

  const auto path = std::filesystem::temp_directory_path() / "ireg_test_listener.ckpt";
  save_listener(listener, path);
  CHECK(checkpoint_kind(path) == "listener");
  const LearnedListener loaded = load_listener(path);
  CHECK(loaded.frozen());
  for (const auto& s : d.split(Split::kTest)) {
    const Scene& scene = d.scene(s.scene_id);
    const auto a = loaded.locate(scene, s.expressions.front());
    const auto b = loaded.locate(scene, s.expressions.front());
    CHECK(a.predicted_index == b.predicted_index);
    CHECK(a.scores == b.scores);
    CHECK(a.scores == listener.locate(scene, s.expressions.front()).scores);
    CHECK(a.predicted_bbox == scene.objects[static_cast<std::size_t>(a.predicted_index)].bbox);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(train_learned_listener(d, {}, {}, lc), std::invalid_argument);
}
