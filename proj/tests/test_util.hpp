#pragma once

#include <string>
#include <vector>

#include "ireg/world.hpp"

namespace ireg::testing {

inline SceneObject make_object(const AttributeSchema& schema, int id, std::string category, std::string color,
                               std::string size, int row, int col, double cell = 64.0) {
  SceneObject o;
  o.object_id = id;
  o.category = std::move(category);
  o.color = std::move(color);
  o.size = std::move(size);
  o.cell = {row, col};
  o.bbox = object_bbox(schema, o.category, o.size, o.cell, cell);
  return o;
}

inline Scene make_scene(std::vector<SceneObject> objects, int rows = 4, int cols = 4, std::string id = "hand-0") {
  Scene s;
  s.scene_id = std::move(id);
  s.grid_rows = rows;
  s.grid_cols = cols;
  s.width = 64.0 * cols;
  s.height = 64.0 * rows;
  s.objects = std::move(objects);
  return s;
}

inline bool contains(const std::vector<Expression>& list, const std::string& text) {
  for (const auto& e : list)
    if (join_tokens(e) == text) return true;
  return false;
}

inline int count_substr(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (std::size_t p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace ireg::testing

#include <functional>

#include "ireg/listener.hpp"

namespace ireg::testing {

/// Listener driven by a callback, for adversaries and scripted behaviour.
class ScriptedListener final : public Listener {
 public:
  using Fn = std::function<int(const Scene&, const Expression&)>;
  explicit ScriptedListener(Fn fn) : fn_(std::move(fn)) {}
  ListenerVerdict locate(const Scene& scene, const Expression& expression) const override {
    std::vector<double> scores(static_cast<std::size_t>(scene.size()), 0.0);
    scores[static_cast<std::size_t>(fn_(scene, expression))] = 1.0;
    return verdict_from_scores(scene, scores, false);
  }
  std::string name() const override { return "scripted"; }

 private:
  Fn fn_;
};

/// Index of an object that is not `target`.
inline int other_than(const Scene& scene, int target) { return target == 0 ? scene.size() - 1 : 0; }

}  // namespace ireg::testing
