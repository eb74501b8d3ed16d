#include "ireg/session_service.hpp"

#include <algorithm>
#include <cstdio>

#include "ireg/random.hpp"

namespace ireg {

std::string to_string(SessionMode mode) {
  switch (mode) {
    case SessionMode::kHuman: return "human";
    case SessionMode::kAnnotator: return "annotator";
    case SessionMode::kModel: return "model";
  }
  return "human";
}

SessionMode session_mode_from_string(const std::string& name) {
  if (name == "human") return SessionMode::kHuman;
  if (name == "annotator") return SessionMode::kAnnotator;
  if (name == "model") return SessionMode::kModel;
  throw ServiceError(400, "invalid_mode", "unknown session mode: " + name);
}

SessionService::SessionService(const Dataset& data, const Speaker& ireg, const Speaker& reinforced,
                               const Listener& listener, SessionServiceConfig config)
    : data_(data), ireg_(ireg), reinforced_(reinforced), listener_(listener), config_(config) {
  for (const Split s : {Split::kTrain, Split::kVal, Split::kTest}) splits_[s] = data.split(s);
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw ServiceError(404, "session_not_found", "no session " + session_id);
  return it->second;
}

Json SessionService::session_view(const Session& s) const {
  const Episode& ep = *s.episode;
  const bool show_target = s.mode != SessionMode::kHuman;
  Json out{{"session_id", s.id},
           {"mode", to_string(s.mode)},
           {"split", to_string(s.split)},
           {"scene_id", s.scene->scene_id},
           {"render_url", "/api/scenes/" + s.scene->scene_id + "/render"},
           {"object_ids", Json::array()},
           {"target_index", show_target ? Json(ep.trace().target_index) : Json(nullptr)},
           {"target_bbox",
            show_target ? Json(s.scene->objects[static_cast<std::size_t>(ep.trace().target_index)].bbox)
                        : Json(nullptr)},
           {"max_round", ep.trace().max_round},
           {"round", ep.done() ? ep.round() - 1 : ep.round()},
           {"expression", join_tokens(ep.current_expression())},
           {"done", ep.done()}};
  for (const auto& o : s.scene->objects) out["object_ids"].push_back(o.object_id);
  if (ep.done()) {
    out["located"] = ep.trace().termination == Termination::kLocated;
    out["final_expression"] = join_tokens(ep.trace().final_expression);
  }
  return out;
}

Json SessionService::create_session(const Json& request) {
  if (!request.is_object()) throw ServiceError(400, "invalid_request", "request body must be a JSON object");
  Split split = Split::kTest;
  SessionMode mode = SessionMode::kHuman;
  InteractiveConfig interactive = config_.interactive;
  try {
    split = split_from_string(request.value("split", std::string("test")));
  } catch (const std::exception& e) {
    throw ServiceError(400, "invalid_split", e.what());
  }
  mode = session_mode_from_string(request.value("mode", std::string("human")));
  if (request.contains("max_round")) {
    if (!request["max_round"].is_number_integer() || request["max_round"].get<int>() < 1)
      throw ServiceError(400, "invalid_max_round", "max_round must be a positive integer");
    interactive.max_round = request["max_round"].get<int>();
  }

  auto session = std::make_shared<Session>();
  session->mode = mode;
  session->split = split;
  session->evaluator_id = request.value("evaluator_id", std::string());

  int target = 0;
  std::uint64_t number = 0;
  {
    std::lock_guard lock(mutex_);
    number = counter_++;
  }
  if (request.contains("scene_id")) {
    const std::string scene_id = request["scene_id"].get<std::string>();
    if (!data_.has_scene(scene_id)) throw ServiceError(404, "scene_not_found", "no scene " + scene_id);
    session->scene = &data_.scene(scene_id);
    target = request.value("target_index", 0);
    if (target < 0 || target >= session->scene->size())
      throw ServiceError(400, "invalid_target", "target_index out of range");
  } else {
    const auto& pool = splits_.at(split);
    if (pool.empty()) throw ServiceError(400, "empty_split", "split " + to_string(split) + " has no samples");
    const RefSample& s = pool[mix_seed(config_.seed, number) % pool.size()];
    session->scene = &data_.scene(s.scene_id);
    target = s.target_index;
  }
  char id[32];
  std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(number + 1));
  session->id = id;
  session->episode =
      std::make_unique<Episode>(ireg_, reinforced_, *session->scene, target, data_.world().schema, interactive);
  if (mode == SessionMode::kModel) {
    Episode& ep = *session->episode;
    while (!ep.done()) ep.observe(listener_.locate(*session->scene, ep.current_expression()).predicted_index);
  }
  Json view = session_view(*session);
  std::lock_guard lock(mutex_);
  sessions_[session->id] = session;
  return view;
}

Json SessionService::click(const std::string& session_id, const Json& request) {
  const auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  Episode& ep = *session->episode;
  if (ep.done()) throw ServiceError(409, "session_completed", "session " + session_id + " is already completed");
  if (!request.is_object() || !request.contains("object_id") || !request["object_id"].is_number_integer())
    throw ServiceError(400, "invalid_object_id", "click needs an integer object_id");
  const int object_id = request["object_id"].get<int>();
  int index = -1;
  for (int i = 0; i < session->scene->size(); ++i)
    if (session->scene->objects[static_cast<std::size_t>(i)].object_id == object_id) index = i;
  if (index < 0) throw ServiceError(400, "invalid_object_id", "no object " + std::to_string(object_id) + " in scene");

  const RoundEntry entry = ep.observe(index);
  Json out{{"iou", entry.iou}, {"located", entry.located}, {"judged_round", entry.round}, {"done", ep.done()}};
  if (ep.done()) {
    out["round"] = entry.round;
    out["final_expression"] = join_tokens(ep.trace().final_expression);
    out["termination"] = to_string(ep.trace().termination);
  } else {
    out["round"] = ep.round();
    out["next_expression"] = join_tokens(ep.current_expression());
  }
  return out;
}

Json SessionService::trace(const std::string& session_id) {
  const auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  return Json(session->episode->trace());
}

Json SessionService::summary(const std::string& session_id) {
  const auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  const RoundTrace& t = session->episode->trace();
  const bool done = session->episode->done();
  const bool located = t.termination == Termination::kLocated;
  return Json{{"session_id", session->id},
              {"mode", to_string(session->mode)},
              {"split", to_string(session->split)},
              {"completed", done},
              {"located", done ? Json(located) : Json(nullptr)},
              {"rounds_used", t.rounds.size()},
              {"accuracy", done ? Json(located ? 1.0 : 0.0) : Json(nullptr)}};
}

Json SessionService::human_summary(const std::optional<std::string>& evaluator_id) {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  std::vector<bool> judgments;
  std::map<std::string, std::vector<bool>> by_split, by_evaluator;
  for (const auto& s : all) {
    std::lock_guard lock(s->mutex);
    if (s->mode != SessionMode::kHuman || !s->episode->done()) continue;
    if (evaluator_id && s->evaluator_id != *evaluator_id) continue;
    const bool ok = s->episode->trace().termination == Termination::kLocated;
    judgments.push_back(ok);
    by_split[to_string(s->split)].push_back(ok);
    by_evaluator[s->evaluator_id].push_back(ok);
  }
  auto block = [](const std::vector<bool>& j) {
    const auto correct = static_cast<int>(std::count(j.begin(), j.end(), true));
    return Json{{"total", j.size()},
                {"correct", correct},
                {"accuracy", j.empty() ? Json(nullptr) : Json(human_eval_accuracy(j))}};
  };
  Json out = block(judgments);
  out["by_split"] = Json::object();
  for (const auto& [k, v] : by_split) out["by_split"][k] = block(v);
  out["by_evaluator"] = Json::object();
  for (const auto& [k, v] : by_evaluator)
    if (!k.empty()) out["by_evaluator"][k] = block(v);
  return out;
}

std::string SessionService::render(const std::string& scene_id) {
  if (!data_.has_scene(scene_id)) throw ServiceError(404, "scene_not_found", "no scene " + scene_id);
  return render_scene(data_.scene(scene_id));
}

}  // namespace ireg
