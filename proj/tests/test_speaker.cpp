#include <cmath>
#include <functional>

#include "doctest.h"
#include "grad_check.hpp"
#include "ireg/checkpoint.hpp"
#include "ireg/speaker.hpp"
#include "speaker_fixtures.hpp"

using namespace ireg;
using namespace ireg::testing;

TEST_CASE("vocabulary layout and sentinels") {
  const Vocabulary v({"red", "ball"}, 12);
  CHECK(v.token(v.pad()) == "<pad>");
  CHECK(v.token(v.bos()) == "<bos>");
  CHECK(v.token(v.eos()) == "<eos>");
  CHECK(v.token(v.sentinel(12)) == "<vis_12>");
  CHECK(v.token(v.sentinel(13)) == "<vis_13>");
  CHECK_THROWS(v.sentinel(14));
  CHECK(v.output_size() == 3);
  CHECK(v.output_to_token(0) == v.eos());
  CHECK(v.token_to_output(v.id("ball")) == 2);
  CHECK(v.token_to_output(v.id("caption")) == -1);
  CHECK_THROWS(v.tokenize("red zebra"));
  const Vocabulary again = Vocabulary::from_tokens(v.tokens(), 12);
  CHECK(again == v);
  CHECK(again.hash() == v.hash());
  CHECK_FALSE(Vocabulary({"ball", "red"}, 12).hash() == v.hash());
}

TEST_CASE("REG prompt") {
  const Vocabulary v(AttributeSchema{}.content_words(), 12);
  const auto p = build_reg_prompt(v, 12);
  CHECK(v.detokenize(p) == "caption region: <vis_12>");
  CHECK(p.size() == 3);
  CHECK(v.tokenize(v.detokenize(p)) == p);
  CHECK_THROWS_AS(build_reg_prompt(v, 11), std::invalid_argument);
}

TEST_CASE("refine prompt") {
  const Vocabulary v(AttributeSchema{}.content_words(), 12);
  const auto p = build_refine_prompt(v, tokenize_expression("red ball"), 12, 13);
  CHECK(v.detokenize(p) == "caption region: <vis_12> red ball incorrectly located as: <vis_13> Please refine it.");
  CHECK(std::count(p.begin(), p.end(), v.sentinel(12)) == 1);
  CHECK(std::count(p.begin(), p.end(), v.sentinel(13)) == 1);
  const std::vector<int> prev{v.id("red"), v.id("ball")};
  CHECK(std::search(p.begin(), p.end(), prev.begin(), prev.end()) != p.end());
  CHECK_THROWS_AS(build_refine_prompt(v, {}, 12, 13), std::invalid_argument);
  CHECK_THROWS_AS(build_refine_prompt(v, tokenize_expression("red"), 12, 12), std::invalid_argument);
}

TEST_CASE("encoder output length per mode") {
  const WorldConfig w = small_world();
  const Speaker s = make_speaker(w, tiny_config());
  const Scene scene = two_ball_scene(w.schema);
  const auto reg = build_region_slots(scene, 0, std::nullopt, 6, w.schema);
  const std::vector<int> prompt{s.vocab().id("caption"), s.vocab().id("region:"), s.vocab().sentinel(6),
                                s.vocab().id("red")};
  CHECK(s.encode(prompt, reg).rows() == 4 + 7);
  const auto refine = build_region_slots(scene, 0, 1, 6, w.schema);
  CHECK(s.encode(prompt, refine).rows() == 4 + 8);
  RegionSlots bad = reg;
  bad.features.pop_back();
  bad.present.pop_back();
  CHECK_THROWS_AS(s.encode(prompt, bad), std::invalid_argument);
}

TEST_CASE("padding slots do not influence the encoding") {
  const WorldConfig w = small_world();
  const Speaker s = make_speaker(w, tiny_config());
  const Scene scene = two_ball_scene(w.schema);
  auto slots = build_region_slots(scene, 0, std::nullopt, 6, w.schema);
  const auto prompt = build_reg_prompt(s.vocab(), 6);
  const nn::Matrix a = s.encode(prompt, slots);
  slots.features[4].attributes.assign(slots.features[4].attributes.size(), 3.0);
  slots.features[4].box = {0.9, 0.9, 0.1, 0.1, 7.0};
  const nn::Matrix b = s.encode(prompt, slots);
  const int unmasked[] = {0, 1, 2, 3, 4, 5, 9};
  for (int r : unmasked) CHECK((a.row(r) - b.row(r)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sequence probabilities sum to one over all bounded sequences") {
  AttributeSchema schema;
  SpeakerConfig cfg = tiny_config(4);
  cfg.attr_dim = static_cast<int>(schema.one_hot_width());
  cfg.max_expression_length = 2;
  const Speaker s(cfg, Vocabulary({"red", "ball", "cup"}, 4));
  const Scene scene = two_ball_scene(schema);
  const auto slots = build_region_slots(scene, 1, std::nullopt, 4, schema);
  const auto prompt = build_reg_prompt(s.vocab(), 4);
  const std::vector<std::string> words{"red", "ball", "cup"};
  double total = 0.0;
  for (const auto& a : words) {
    total += std::exp(s.sequence_log_prob(prompt, slots, {a}));
    for (const auto& b : words) {
      nn::Graph g(s.parameters(), false);
      total += std::exp(g.scalar(s.sequence_log_prob(g, prompt, slots, {a, b}, false)));
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("teacher forcing equals the sum of step log-probs") {
  const WorldConfig w = small_world();
  const Speaker s = make_speaker(w, tiny_config());
  const Scene scene = two_ball_scene(w.schema);
  const auto slots = build_region_slots(scene, 0, std::nullopt, 6, w.schema);
  const auto prompt = build_reg_prompt(s.vocab(), 6);
  const Expression expr = tokenize_expression("small red ball left");
  double stepwise = 0.0;
  Expression prefix;
  for (const auto& tok : expr) {
    const auto lp = s.next_token_log_probs(prompt, slots, prefix);
    double norm = 0.0;
    for (double x : lp) norm += std::exp(x);
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
    stepwise += lp[static_cast<std::size_t>(s.vocab().token_to_output(s.vocab().id(tok)))];
    prefix.push_back(tok);
  }
  stepwise += s.next_token_log_probs(prompt, slots, prefix)[0];
  const double forced = s.sequence_log_prob(prompt, slots, expr);
  CHECK(forced <= 0.0);
  CHECK(forced == doctest::Approx(stepwise).epsilon(1e-10));
  CHECK(s.next_token_log_probs(prompt, slots, {})[0] == -std::numeric_limits<double>::infinity());
  CHECK_THROWS(s.sequence_log_prob(prompt, slots, {}));
  CHECK_THROWS(s.sequence_log_prob(prompt, slots, tokenize_expression("red zebra")));
}

TEST_CASE("decoding modes") {
  const WorldConfig w = small_world();
  const Speaker s = make_speaker(w, tiny_config());
  const Scene scene = two_ball_scene(w.schema);
  const auto slots = build_region_slots(scene, 2, std::nullopt, 6, w.schema);
  const auto prompt = build_reg_prompt(s.vocab(), 6);

  const Generation greedy = s.generate_one(prompt, slots, DecodeMode::greedy());
  CHECK_FALSE(greedy.expression.empty());
  CHECK(greedy.expression.size() <= 6u);
  CHECK(s.generate_one(prompt, slots, DecodeMode::beam(1)).expression == greedy.expression);

  const auto beams = s.generate(prompt, slots, DecodeMode::beam(5));
  REQUIRE_FALSE(beams.empty());
  CHECK(beams.size() <= 5u);
  CHECK(beams.front().log_prob >= greedy.log_prob - 1e-12);
  for (std::size_t i = 1; i < beams.size(); ++i) CHECK(beams[i - 1].log_prob >= beams[i].log_prob);
  for (const auto& b : beams) {
    nn::Graph g(s.parameters(), false);
    CHECK(g.scalar(s.sequence_log_prob(g, prompt, slots, b.expression, !b.truncated)) ==
          doctest::Approx(b.log_prob).epsilon(1e-9));
  }

  const auto s1 = s.generate_one(prompt, slots, DecodeMode::sample(1.0, 42));
  const auto s2 = s.generate_one(prompt, slots, DecodeMode::sample(1.0, 42));
  CHECK(s1.expression == s2.expression);
  CHECK(s1.log_prob == s2.log_prob);
  bool differs = false;
  for (std::uint64_t seed = 0; seed < 20 && !differs; ++seed)
    differs = s.generate_one(prompt, slots, DecodeMode::sample(1.0, seed)).expression != s1.expression;
  CHECK(differs);
}

TEST_CASE("region identity travels with the sentinel id, not the slot position") {
  const WorldConfig w = small_world();
  const Speaker s = make_speaker(w, tiny_config());
  const Scene scene = two_ball_scene(w.schema);
  const auto prompt = build_reg_prompt(s.vocab(), 6);
  const Expression expr = tokenize_expression("red ball");
  const auto slots = build_region_slots(scene, 0, std::nullopt, 6, w.schema);
  const double base = s.sequence_log_prob(prompt, slots, expr);

  RegionSlots moved = slots;
  std::swap(moved.features[0], moved.features[2]);
  CHECK(s.sequence_log_prob(prompt, moved, expr) == doctest::Approx(base).epsilon(1e-10));

  RegionSlots relabelled = moved;
  std::swap(relabelled.features[0].region_id, relabelled.features[2].region_id);
  CHECK(std::abs(s.sequence_log_prob(prompt, relabelled, expr) - base) > 1e-6);
}

TEST_CASE("sequence log-prob gradients match finite differences") {
  const WorldConfig w = small_world();
  Speaker s = make_speaker(w, tiny_config());
  const Scene scene = two_ball_scene(w.schema);
  const auto slots = build_region_slots(scene, 1, 0, 6, w.schema);
  const auto prompt = build_refine_prompt(s.vocab(), tokenize_expression("red ball"), 6, 7);
  const Expression expr = tokenize_expression("large blue ball");
  auto loss = [&](nn::Gradients* grads) {
    nn::Graph g(s.parameters(), grads != nullptr);
    const nn::Var lp = s.sequence_log_prob(g, prompt, slots, expr);
    if (grads) g.backward(lp, *grads);
    return g.scalar(lp);
  };
  const auto r = gradient_check(s.parameters(), loss, 3);
  CHECK(r.checked > 50);
  INFO("analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("stages only advance") {
  Speaker s = make_speaker(small_world(), tiny_config());
  CHECK(s.stage() == Stage::kBase);
  s.advance_stage(Stage::kMmi);
  s.advance_stage(Stage::kReinforced);
  CHECK_THROWS_AS(s.advance_stage(Stage::kMmi), std::logic_error);
  CHECK(stage_from_string(to_string(Stage::kIreg)) == Stage::kIreg);
}

TEST_CASE("speaker checkpoint round trip is bit exact") {
  const WorldConfig w = small_world();
  Speaker s = make_speaker(w, tiny_config());
  s.advance_stage(Stage::kMmi);
  const auto path = std::filesystem::temp_directory_path() / "ireg_test_speaker.ckpt";
  save_speaker(s, path);
  CHECK(checkpoint_kind(path) == "speaker");
  const Speaker loaded = load_speaker(path, s.vocab());
  CHECK(loaded.stage() == Stage::kMmi);
  CHECK(loaded.config() == s.config());
  const Scene scene = two_ball_scene(w.schema);
  const auto slots = build_region_slots(scene, 0, std::nullopt, 6, w.schema);
  const auto prompt = build_reg_prompt(s.vocab(), 6);
  CHECK(loaded.next_token_log_probs(prompt, slots, {"red"}) == s.next_token_log_probs(prompt, slots, {"red"}));
  for (std::size_t i = 0; i < s.parameters().size(); ++i) CHECK(loaded.parameters()[i].value == s.parameters()[i].value);

  const Vocabulary other({"red", "ball"}, 6);
  CHECK_THROWS_AS(load_speaker(path, other), CheckpointError);
  CHECK_THROWS_AS(load_listener(path), CheckpointError);
  std::filesystem::remove(path);
}
