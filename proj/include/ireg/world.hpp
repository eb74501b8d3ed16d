#pragma once

// Procedural visual world: attributed objects on a grid, ground-truth
// referring expressions, and train/val/test splits.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ireg/types.hpp"

namespace ireg {

struct AttributeSchema {
  std::vector<std::string> categories{"ball", "box", "cup", "book", "person"};
  std::vector<std::string> colors{"red", "blue", "green", "yellow", "purple"};
  // Ordered small to large; the index scales the bbox.
  std::vector<std::string> sizes{"small", "medium", "large"};

  static const std::vector<std::string>& positional_words();

  std::size_t one_hot_width() const { return categories.size() + colors.size() + sizes.size(); }
  /// All content words in canonical order: sizes, colors, categories, positional.
  std::vector<std::string> content_words() const;
};

struct WorldConfig {
  int grid_rows = 4;
  int grid_cols = 4;
  double cell_size = 64.0;
  int min_objects = 3;
  int max_objects = 7;
  int n_regions = 12;
  AttributeSchema schema;
  // Hard scenes contain a category shared by min_same_category + 1 objects.
  bool hard = true;
  int min_same_category = 1;
  bool positional_words = true;
  int max_attempts = 2000;

  void validate() const;
};

struct GridCell {
  int row = 0;
  int col = 0;
  bool operator==(const GridCell&) const = default;
};

struct SceneObject {
  int object_id = 0;
  std::string category;
  std::string color;
  std::string size;
  GridCell cell;
  BBox bbox;
  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  std::string scene_id;
  double width = 0.0;
  double height = 0.0;
  int grid_rows = 0;
  int grid_cols = 0;
  bool hard = false;
  std::uint64_t rng_seed = 0;
  std::vector<SceneObject> objects;

  int size() const { return static_cast<int>(objects.size()); }
  bool operator==(const Scene&) const = default;
};

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct RefSample {
  std::string scene_id;
  int target_index = 0;
  std::vector<Expression> expressions;
  Split split = Split::kTrain;
};

/// bbox of an object as a function of its attributes and cell.
BBox object_bbox(const AttributeSchema& schema, const std::string& category, const std::string& size,
                 GridCell cell, double cell_size);

/// Positional words that hold for a cell ({top,bottom} x {left,right}, or
/// "middle" for the exact grid center).
std::vector<std::string> positional_words_for(GridCell cell, int grid_rows, int grid_cols);

/// Rule-based listener scores: +1 per matching content token, -1 per
/// contradicted one; unknown tokens are ignored.
std::vector<int> oracle_scores(const Scene& scene, const Expression& expression, const AttributeSchema& schema);
/// Number of tokens the oracle recognises as content words.
int known_token_count(const Expression& expression, const AttributeSchema& schema);
/// True when `target` is the strict unique argmax of the oracle scores.
bool uniquely_resolves(const Scene& scene, int target, const Expression& expression,
                       const AttributeSchema& schema);

Scene generate_scene(const WorldConfig& config, std::uint64_t seed);

/// All inclusion-minimal modifier sets (the category noun is always present)
/// that uniquely resolve the target. Empty only for hand-built scenes where no
/// description resolves the target; generated scenes never hit that case.
std::vector<Expression> canonical_expressions(const Scene& scene, int target_index, const AttributeSchema& schema,
                                              bool use_positional = true);

/// Deterministic same-category distractor, or nullopt when there is none.
std::optional<int> sample_negative_region(const Scene& scene, int target_index, std::uint64_t seed);

struct Overlay {
  BBox box;
  std::string css_class = "overlay";
};

struct RenderOptions {
  std::optional<int> highlight_object;
  std::vector<Overlay> overlays;
};

/// SVG document; every object is a <rect> carrying data-object-id.
std::string render_scene(const Scene& scene, const RenderOptions& options = {});

struct DatasetConfig {
  WorldConfig world;
  int n_scenes = 2000;
  int targets_per_scene = 2;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  std::uint64_t seed = 7;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(WorldConfig world, std::vector<Scene> scenes, std::vector<RefSample> samples);

  const WorldConfig& world() const { return world_; }
  const std::vector<Scene>& scenes() const { return scenes_; }
  const std::vector<RefSample>& samples() const { return samples_; }
  const Scene& scene(const std::string& scene_id) const;
  bool has_scene(const std::string& scene_id) const { return index_.contains(scene_id); }

  std::vector<RefSample> split(Split which) const;

 private:
  WorldConfig world_;
  std::vector<Scene> scenes_;
  std::vector<RefSample> samples_;
  std::map<std::string, std::size_t> index_;
};

Dataset generate_dataset(const DatasetConfig& config);

}  // namespace ireg
