#include "doctest.h"
#include "ireg/http_server.hpp"
#include "ireg/session_service.hpp"
#include "speaker_fixtures.hpp"

// After the Eigen headers: resolv.h, pulled in by httplib, defines _res.
#include "httplib.h"

using namespace ireg;
using namespace ireg::testing;

namespace {

struct Fixture {
  Dataset data;
  Speaker ireg;
  Speaker reinforced;
  OracleListener oracle;

  Fixture()
      : data(make_data()),
        ireg(make_speaker(data.world(), tiny_config(6, 31))),
        reinforced(make_speaker(data.world(), tiny_config(6, 32))),
        oracle(data.world().schema) {}

  static Dataset make_data() {
    DatasetConfig cfg;
    cfg.world = small_world();
    cfg.n_scenes = 30;
    cfg.train_fraction = 0.5;
    return generate_dataset(cfg);
  }
};

Json post(httplib::Client& c, const std::string& path, const Json& body, int expect) {
  const auto res = c.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expect);
  return Json::parse(res->body);
}

Json get(httplib::Client& c, const std::string& path, int expect = 200) {
  const auto res = c.Get(path);
  REQUIRE(res);
  CHECK(res->status == expect);
  return Json::parse(res->body);
}

}  // namespace

TEST_CASE("human mode hides the target, annotator mode shows it") {
  Fixture f;
  SessionService svc(f.data, f.ireg, f.reinforced, f.oracle);
  const Json human = svc.create_session(Json{{"split", "test"}, {"mode", "human"}});
  CHECK(human["target_bbox"].is_null());
  CHECK(human["target_index"].is_null());
  CHECK(human["round"] == 0);
  CHECK_FALSE(human["expression"].get<std::string>().empty());
  CHECK(human["render_url"] == "/api/scenes/" + human["scene_id"].get<std::string>() + "/render");
  const Json ann = svc.create_session(Json{{"split", "test"}, {"mode", "annotator"}});
  CHECK(ann["target_bbox"].is_array());
  CHECK_THROWS_AS(svc.create_session(Json{{"mode", "robot"}}), ServiceError);
  CHECK_THROWS_AS(svc.create_session(Json{{"split", "dev"}}), ServiceError);
}

TEST_CASE("click protocol") {
  Fixture f;
  SessionService svc(f.data, f.ireg, f.reinforced, f.oracle);
  const auto test = f.data.split(Split::kTest);
  const RefSample& s = test.front();
  const Scene& scene = f.data.scene(s.scene_id);

  const Json a = svc.create_session(Json{{"mode", "annotator"}, {"scene_id", s.scene_id}, {"target_index", s.target_index}});
  const int target_id = scene.objects[static_cast<std::size_t>(s.target_index)].object_id;
  const Json ok = svc.click(a["session_id"], Json{{"object_id", target_id}});
  CHECK(ok["located"] == true);
  CHECK(ok["done"] == true);
  CHECK(ok["final_expression"] == a["expression"]);
  try {
    svc.click(a["session_id"], Json{{"object_id", target_id}});
    FAIL("expected conflict");
  } catch (const ServiceError& e) {
    CHECK(e.status() == 409);
    CHECK(e.code() == "session_completed");
  }

  const Json b = svc.create_session(Json{{"mode", "human"}, {"scene_id", s.scene_id}, {"target_index", s.target_index}});
  const int wrong = scene.objects[static_cast<std::size_t>(other_than(scene, s.target_index))].object_id;
  const Json miss = svc.click(b["session_id"], Json{{"object_id", wrong}});
  CHECK(miss["located"] == false);
  CHECK(miss["done"] == false);
  CHECK(miss["round"] == 1);
  CHECK(miss.contains("next_expression"));
  const Json trace = svc.trace(b["session_id"]);
  CHECK(trace["rounds"].size() == 1);
  CHECK(trace["rounds"][0]["predicted_index"] == other_than(scene, s.target_index));

  try {
    svc.click(b["session_id"], Json{{"object_id", 999}});
    FAIL("expected bad request");
  } catch (const ServiceError& e) {
    CHECK(e.status() == 400);
    CHECK(e.code() == "invalid_object_id");
  }
  try {
    svc.trace("nope");
    FAIL("expected not found");
  } catch (const ServiceError& e) {
    CHECK(e.status() == 404);
    CHECK(e.code() == "session_not_found");
  }
}

TEST_CASE("model mode runs the listener to completion") {
  Fixture f;
  SessionService svc(f.data, f.ireg, f.reinforced, f.oracle);
  const auto test = f.data.split(Split::kTest);
  const RefSample& s = test.front();
  const Json m = svc.create_session(Json{{"mode", "model"}, {"scene_id", s.scene_id}, {"target_index", s.target_index}});
  CHECK(m["done"] == true);
  const RoundTrace offline = interactive_infer(f.ireg, f.reinforced, f.oracle, f.data.scene(s.scene_id),
                                               s.target_index, f.data.world().schema);
  CHECK(svc.trace(m["session_id"]).dump() == Json(offline).dump());
}

TEST_CASE("HTTP API: protocol equivalence, summaries and errors") {
  Fixture f;
  SessionService svc(f.data, f.ireg, f.reinforced, f.oracle);
  HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client c("127.0.0.1", port);

  const auto test = f.data.split(Split::kTest);
  for (std::size_t i = 0; i < std::min<std::size_t>(test.size(), 6); ++i) {
    const RefSample& s = test[i];
    const Scene& scene = f.data.scene(s.scene_id);
    const Json created = post(c, "/api/sessions",
                              Json{{"mode", "human"}, {"scene_id", s.scene_id}, {"target_index", s.target_index}}, 201);
    const std::string id = created["session_id"];
    std::string expr = created["expression"];
    bool done = false;
    while (!done) {
      const int pick = f.oracle.locate(scene, tokenize_expression(expr)).predicted_index;
      const Json r = post(c, "/api/sessions/" + id + "/click",
                          Json{{"object_id", scene.objects[static_cast<std::size_t>(pick)].object_id}}, 200);
      done = r["done"];
      if (!done) expr = r["next_expression"];
    }
    const auto res = c.Get("/api/sessions/" + id + "/trace");
    REQUIRE(res);
    const RoundTrace offline =
        interactive_infer(f.ireg, f.reinforced, f.oracle, scene, s.target_index, f.data.world().schema);
    CHECK(res->body == Json(offline).dump());
  }

  // Fresh server state for the judgment set {T, T, F, T}.
  SessionService svc2(f.data, f.ireg, f.reinforced, f.oracle);
  HttpServer server2(svc2);
  httplib::Client c2("127.0.0.1", server2.start("127.0.0.1", 0));
  CHECK(get(c2, "/api/eval/human-summary")["accuracy"].is_null());
  const bool judgments[] = {true, true, false, true};
  for (bool correct : judgments) {
    const RefSample& s = test.front();
    const Scene& scene = f.data.scene(s.scene_id);
    const Json created = post(c2, "/api/sessions",
                              Json{{"mode", "human"},
                                   {"scene_id", s.scene_id},
                                   {"target_index", s.target_index},
                                   {"max_round", 1},
                                   {"evaluator_id", "e1"}},
                              201);
    const int idx = correct ? s.target_index : other_than(scene, s.target_index);
    const Json r = post(c2, "/api/sessions/" + created["session_id"].get<std::string>() + "/click",
                        Json{{"object_id", scene.objects[static_cast<std::size_t>(idx)].object_id}}, 200);
    CHECK(r["done"] == true);
    const Json summary = get(c2, "/api/sessions/" + created["session_id"].get<std::string>() + "/summary");
    CHECK(summary["located"] == correct);
  }
  const Json hs = get(c2, "/api/eval/human-summary");
  CHECK(hs["accuracy"] == 0.75);
  CHECK(hs["total"] == 4);
  CHECK(hs["by_evaluator"]["e1"]["accuracy"] == 0.75);
  CHECK(get(c2, "/api/eval/human-summary?evaluator_id=e2")["total"] == 0);

  CHECK(get(c2, "/api/sessions/missing/trace", 404)["error"]["code"] == "session_not_found");
  CHECK(post(c2, "/api/sessions/missing/click", Json{{"object_id", 0}}, 404)["error"]["code"] == "session_not_found");
  const auto svg = c2.Get("/api/scenes/" + test.front().scene_id + "/render");
  REQUIRE(svg);
  CHECK(svg->status == 200);
  CHECK(svg->body.find("<svg") == 0);
  CHECK(get(c2, "/api/scenes/none/render", 404)["error"]["code"] == "scene_not_found");
  const auto bad = c2.Post("/api/sessions", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  server.stop();
  server2.stop();
}

TEST_CASE("interleaved sessions stay isolated") {
  Fixture f;
  SessionService svc(f.data, f.ireg, f.reinforced, f.oracle);
  const auto test = f.data.split(Split::kTest);
  const RefSample& s1 = test[0];
  const RefSample& s2 = test[1];
  const Scene& sc1 = f.data.scene(s1.scene_id);
  const Scene& sc2 = f.data.scene(s2.scene_id);
  const Json a = svc.create_session(Json{{"scene_id", s1.scene_id}, {"target_index", s1.target_index}});
  const Json b = svc.create_session(Json{{"scene_id", s2.scene_id}, {"target_index", s2.target_index}});
  svc.click(a["session_id"], Json{{"object_id", other_than(sc1, s1.target_index)}});
  svc.click(b["session_id"], Json{{"object_id", s2.target_index}});
  svc.click(a["session_id"], Json{{"object_id", s1.target_index}});
  const Json ta = svc.trace(a["session_id"]);
  const Json tb = svc.trace(b["session_id"]);
  CHECK(ta["scene_id"] == s1.scene_id);
  CHECK(ta["rounds"].size() == 2);
  CHECK(tb["scene_id"] == s2.scene_id);
  CHECK(tb["rounds"].size() == 1);
  (void)sc2;
}
