#include "doctest.h"
#include "ireg/interaction.hpp"
#include "speaker_fixtures.hpp"

using namespace ireg;
using namespace ireg::testing;

namespace {

struct Fixture {
  Dataset data;
  Speaker ireg;
  Speaker reinforced;
  std::vector<RefSample> test;

  Fixture()
      : data(make_data()),
        ireg(make_speaker(data.world(), tiny_config(6, 21))),
        reinforced(make_speaker(data.world(), tiny_config(6, 22))),
        test(data.split(Split::kTest)) {}

  static Dataset make_data() {
    DatasetConfig cfg;
    cfg.world = small_world();
    cfg.n_scenes = 40;
    cfg.val_fraction = 0.0;
    cfg.train_fraction = 0.5;
    return generate_dataset(cfg);
  }
  const AttributeSchema& schema() const { return data.world().schema; }
};

}  // namespace

TEST_CASE("successful round 0 stops immediately") {
  Fixture f;
  const RefSample& s = f.test.front();
  const Scene& scene = f.data.scene(s.scene_id);
  const ScriptedListener right([&](const Scene&, const Expression&) { return s.target_index; });
  const RoundTrace t = interactive_infer(f.ireg, f.reinforced, right, scene, s.target_index, f.schema());
  REQUIRE(t.rounds.size() == 1);
  CHECK(t.termination == Termination::kLocated);
  CHECK(t.located_round == 0);
  CHECK(t.rounds[0].iou == 1.0);
  CHECK(t.final_expression == initial_expression(f.reinforced, scene, s.target_index, f.schema()).expression);
}

TEST_CASE("adversarial listener exhausts the budget") {
  Fixture f;
  const RefSample& s = f.test.front();
  const Scene& scene = f.data.scene(s.scene_id);
  const ScriptedListener wrong([&](const Scene& sc, const Expression&) { return other_than(sc, s.target_index); });
  for (int max_round : {1, 3, 5}) {
    const RoundTrace t = interactive_infer(f.ireg, f.reinforced, wrong, scene, s.target_index, f.schema(),
                                           {.max_round = max_round});
    CHECK(t.rounds.size() == static_cast<std::size_t>(max_round));
    CHECK(t.termination == Termination::kBudgetExhausted);
    CHECK_FALSE(t.located_round.has_value());
    CHECK(t.final_expression == t.rounds.back().expression);
    int stagnant = 0;
    for (std::size_t i = 1; i < t.rounds.size(); ++i) stagnant += t.rounds[i].expression == t.rounds[i - 1].expression;
    CHECK(t.stagnation_count == stagnant);
    for (const auto& e : t.rounds) CHECK_FALSE(e.located);
  }
  CHECK_THROWS_AS(interactive_infer(f.ireg, f.reinforced, wrong, scene, s.target_index, f.schema(), {.max_round = 0}),
                  std::invalid_argument);
}

TEST_CASE("rounds are a first-order Markov chain") {
  Fixture f;
  const OracleListener oracle(f.schema());
  int refined = 0;
  for (const auto& s : f.test) {
    const Scene& scene = f.data.scene(s.scene_id);
    const RoundTrace t = interactive_infer(f.ireg, f.reinforced, oracle, scene, s.target_index, f.schema());
    CHECK(t == interactive_infer(f.ireg, f.reinforced, oracle, scene, s.target_index, f.schema()));
    for (std::size_t r = 1; r < t.rounds.size(); ++r) {
      const auto replay = refine_expression(f.ireg, scene, s.target_index, t.rounds[r - 1].expression,
                                            t.rounds[r - 1].predicted_index, f.schema());
      CHECK(replay.expression == t.rounds[r].expression);
      ++refined;
    }
    const int located = static_cast<int>(std::count_if(t.rounds.begin(), t.rounds.end(),
                                                       [](const RoundEntry& e) { return e.located; }));
    CHECK(located <= 1);
    if (located == 1) CHECK(t.rounds.back().located);
  }
  CHECK(refined > 0);
}

TEST_CASE("evaluate_split") {
  Fixture f;
  const OracleListener oracle(f.schema());
  const EvaluationTable table = evaluate_split(f.ireg, f.reinforced, oracle, f.data, f.test);
  REQUIRE(table.accuracy_by_budget.size() == 5);
  for (std::size_t k = 1; k < 5; ++k) CHECK(table.accuracy_by_budget[k] >= table.accuracy_by_budget[k - 1]);
  const SingleShotResult single = evaluate_single_shot(f.reinforced, oracle, f.data, f.test);
  CHECK(table.accuracy_by_budget[0] == doctest::Approx(single.accuracy).epsilon(1e-12));
  CHECK(table.mean_rounds >= 1.0);
  CHECK(table.mean_rounds <= 5.0);

  const EvaluationTable one = evaluate_split(f.ireg, f.reinforced, oracle, f.data, f.test, {.max_round = 1});
  CHECK(one.accuracy_by_budget[0] == table.accuracy_by_budget[0]);
  CHECK(one.cider == doctest::Approx(single.cider).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate_split(f.ireg, f.reinforced, oracle, f.data, {}), std::invalid_argument);
}

TEST_CASE("episodes reject use after completion") {
  Fixture f;
  const RefSample& s = f.test.front();
  const Scene& scene = f.data.scene(s.scene_id);
  Episode ep(f.ireg, f.reinforced, scene, s.target_index, f.schema(), {.max_round = 2});
  CHECK_THROWS_AS(ep.observe(99), std::invalid_argument);
  ep.observe(s.target_index);
  CHECK(ep.done());
  CHECK_THROWS_AS(ep.observe(s.target_index), std::logic_error);
}
