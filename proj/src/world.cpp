#include "ireg/world.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ireg/random.hpp"

namespace ireg {

Expression tokenize_expression(std::string_view text) {
  Expression out;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

const std::vector<std::string>& AttributeSchema::positional_words() {
  static const std::vector<std::string> words{"left", "right", "top", "bottom", "middle"};
  return words;
}

std::vector<std::string> AttributeSchema::content_words() const {
  std::vector<std::string> out;
  out.insert(out.end(), sizes.begin(), sizes.end());
  out.insert(out.end(), colors.begin(), colors.end());
  out.insert(out.end(), categories.begin(), categories.end());
  const auto& pos = positional_words();
  out.insert(out.end(), pos.begin(), pos.end());
  return out;
}

void WorldConfig::validate() const {
  if (grid_rows < 1 || grid_cols < 1) throw ConfigError("grid must have at least one cell");
  if (cell_size <= 0.0) throw ConfigError("cell_size must be positive");
  if (min_objects < 1 || max_objects < min_objects) throw ConfigError("invalid object-count range");
  if (max_objects > grid_rows * grid_cols)
    throw ConfigError("more objects than grid cells: " + std::to_string(max_objects) + " > " +
                      std::to_string(grid_rows * grid_cols));
  if (max_objects > n_regions) throw ConfigError("max_objects exceeds n_regions");
  if (schema.categories.empty() || schema.colors.empty() || schema.sizes.empty())
    throw ConfigError("attribute vocabulary must be nonempty");
  if (hard && min_same_category + 1 > max_objects)
    throw ConfigError("hard scenes need room for min_same_category + 1 objects");
  if (max_attempts < 1) throw ConfigError("max_attempts must be positive");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: " + name);
}

namespace {

std::size_t index_of(const std::vector<std::string>& words, const std::string& w) {
  const auto it = std::find(words.begin(), words.end(), w);
  if (it == words.end()) throw std::invalid_argument("word not in schema: " + w);
  return static_cast<std::size_t>(it - words.begin());
}

bool contains(const std::vector<std::string>& words, const std::string& w) {
  return std::find(words.begin(), words.end(), w) != words.end();
}

// Width/height factors per category slot; gives each category its own silhouette.
constexpr double kAspect[5][2] = {{1.0, 1.0}, {1.0, 0.8}, {0.75, 1.0}, {1.0, 0.7}, {0.6, 1.0}};

}  // namespace

BBox object_bbox(const AttributeSchema& schema, const std::string& category, const std::string& size,
                 GridCell cell, double cell_size) {
  const std::size_t size_idx = index_of(schema.sizes, size);
  const std::size_t cat_idx = index_of(schema.categories, category);
  const double n_sizes = static_cast<double>(schema.sizes.size());
  const double scale = 0.45 + 0.4 * (n_sizes > 1 ? static_cast<double>(size_idx) / (n_sizes - 1) : 0.5);
  const double w = cell_size * scale * kAspect[cat_idx % 5][0];
  const double h = cell_size * scale * kAspect[cat_idx % 5][1];
  const double cx = (cell.col + 0.5) * cell_size;
  const double cy = (cell.row + 0.5) * cell_size;
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

std::vector<std::string> positional_words_for(GridCell cell, int grid_rows, int grid_cols) {
  const double row_center = (grid_rows - 1) / 2.0;
  const double col_center = (grid_cols - 1) / 2.0;
  std::vector<std::string> words;
  if (cell.row < row_center) words.emplace_back("top");
  if (cell.row > row_center) words.emplace_back("bottom");
  if (cell.col < col_center) words.emplace_back("left");
  if (cell.col > col_center) words.emplace_back("right");
  if (words.empty()) words.emplace_back("middle");
  return words;
}

std::vector<int> oracle_scores(const Scene& scene, const Expression& expression, const AttributeSchema& schema) {
  const auto& positional = AttributeSchema::positional_words();
  std::vector<int> scores(scene.objects.size(), 0);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& obj = scene.objects[i];
    std::vector<std::string> obj_pos;
    bool pos_ready = false;
    int score = 0;
    for (const std::string& tok : expression) {
      if (contains(schema.categories, tok)) {
        score += tok == obj.category ? 1 : -1;
      } else if (contains(schema.colors, tok)) {
        score += tok == obj.color ? 1 : -1;
      } else if (contains(schema.sizes, tok)) {
        score += tok == obj.size ? 1 : -1;
      } else if (contains(positional, tok)) {
        if (!pos_ready) {
          obj_pos = positional_words_for(obj.cell, scene.grid_rows, scene.grid_cols);
          pos_ready = true;
        }
        score += contains(obj_pos, tok) ? 1 : -1;
      }
    }
    scores[i] = score;
  }
  return scores;
}

int known_token_count(const Expression& expression, const AttributeSchema& schema) {
  const auto& positional = AttributeSchema::positional_words();
  int n = 0;
  for (const auto& tok : expression) {
    if (contains(schema.categories, tok) || contains(schema.colors, tok) || contains(schema.sizes, tok) ||
        contains(positional, tok))
      ++n;
  }
  return n;
}

bool uniquely_resolves(const Scene& scene, int target, const Expression& expression,
                       const AttributeSchema& schema) {
  if (known_token_count(expression, schema) == 0) return false;
  const auto scores = oracle_scores(scene, expression, schema);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(i) != target && scores[i] >= scores[static_cast<std::size_t>(target)]) return false;
  }
  return true;
}

std::vector<Expression> canonical_expressions(const Scene& scene, int target_index, const AttributeSchema& schema,
                                              bool use_positional) {
  if (target_index < 0 || target_index >= scene.size()) throw std::out_of_range("target_index out of range");
  const SceneObject& target = scene.objects[static_cast<std::size_t>(target_index)];

  // Modifiers in rendering order; the category noun sits between the
  // attribute adjectives and the positional words.
  std::vector<std::string> pre{target.size, target.color};
  std::vector<std::string> post;
  if (use_positional) post = positional_words_for(target.cell, scene.grid_rows, scene.grid_cols);
  const std::size_t n_mod = pre.size() + post.size();

  std::vector<unsigned> minimal_masks;
  std::vector<unsigned> masks(1u << n_mod);
  std::iota(masks.begin(), masks.end(), 0u);
  std::stable_sort(masks.begin(), masks.end(),
                   [](unsigned a, unsigned b) { return __builtin_popcount(a) < __builtin_popcount(b); });

  std::vector<Expression> out;
  for (unsigned mask : masks) {
    const bool has_resolving_subset = std::any_of(minimal_masks.begin(), minimal_masks.end(),
                                                  [mask](unsigned m) { return (m & mask) == m; });
    if (has_resolving_subset) continue;
    Expression expr;
    for (std::size_t i = 0; i < pre.size(); ++i)
      if (mask & (1u << i)) expr.push_back(pre[i]);
    expr.push_back(target.category);
    for (std::size_t i = 0; i < post.size(); ++i)
      if (mask & (1u << (pre.size() + i))) expr.push_back(post[i]);
    if (uniquely_resolves(scene, target_index, expr, schema)) {
      minimal_masks.push_back(mask);
      out.push_back(std::move(expr));
    }
  }
  return out;
}

std::optional<int> sample_negative_region(const Scene& scene, int target_index, std::uint64_t seed) {
  if (target_index < 0 || target_index >= scene.size()) throw std::out_of_range("target_index out of range");
  const std::string& category = scene.objects[static_cast<std::size_t>(target_index)].category;
  std::vector<int> candidates;
  for (const auto& obj : scene.objects)
    if (obj.object_id != target_index && obj.category == category) candidates.push_back(obj.object_id);
  if (candidates.empty()) return std::nullopt;
  const auto pick = mix_seed(seed, static_cast<std::uint64_t>(target_index)) % candidates.size();
  return candidates[pick];
}

Scene generate_scene(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  const AttributeSchema& schema = config.schema;
  Rng rng(seed);
  std::vector<GridCell> cells;
  for (int r = 0; r < config.grid_rows; ++r)
    for (int c = 0; c < config.grid_cols; ++c) cells.push_back({r, c});

  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    const int k = rng.range(std::max(config.min_objects, config.hard ? config.min_same_category + 1 : 1),
                            config.max_objects);
    std::vector<GridCell> shuffled = cells;
    rng.shuffle(std::span<GridCell>(shuffled));

    Scene scene;
    scene.scene_id = "scene-" + std::to_string(seed);
    scene.width = config.grid_cols * config.cell_size;
    scene.height = config.grid_rows * config.cell_size;
    scene.grid_rows = config.grid_rows;
    scene.grid_cols = config.grid_cols;
    scene.hard = config.hard;
    scene.rng_seed = seed;

    const std::string shared_category = schema.categories[rng.below(schema.categories.size())];
    for (int i = 0; i < k; ++i) {
      SceneObject obj;
      obj.object_id = i;
      obj.category = (config.hard && i <= config.min_same_category)
                         ? shared_category
                         : schema.categories[rng.below(schema.categories.size())];
      obj.color = schema.colors[rng.below(schema.colors.size())];
      obj.size = schema.sizes[rng.below(schema.sizes.size())];
      obj.cell = shuffled[static_cast<std::size_t>(i)];
      obj.bbox = object_bbox(schema, obj.category, obj.size, obj.cell, config.cell_size);
      scene.objects.push_back(std::move(obj));
    }
    // Shuffle so the shared-category objects do not always take the low ids.
    rng.shuffle(std::span<SceneObject>(scene.objects));
    for (int i = 0; i < k; ++i) scene.objects[static_cast<std::size_t>(i)].object_id = i;

    bool resolvable = true;
    for (int i = 0; i < k && resolvable; ++i)
      resolvable = !canonical_expressions(scene, i, schema, config.positional_words).empty();
    if (resolvable) return scene;
  }
  throw ConfigError("could not generate a scene where every object is describable after " +
                    std::to_string(config.max_attempts) + " attempts");
}

namespace {

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s(buf);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

void rect(std::ostringstream& os, const BBox& b) {
  os << " x=\"" << fmt_num(b.x_min) << "\" y=\"" << fmt_num(b.y_min) << "\" width=\"" << fmt_num(b.width())
     << "\" height=\"" << fmt_num(b.height()) << "\"";
}

}  // namespace

std::string render_scene(const Scene& scene, const RenderOptions& options) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_num(scene.width) << "\" height=\""
     << fmt_num(scene.height) << "\" viewBox=\"0 0 " << fmt_num(scene.width) << ' ' << fmt_num(scene.height)
     << "\" data-scene-id=\"" << scene.scene_id << "\">\n";
  os << "  <rect class=\"background\" x=\"0\" y=\"0\" width=\"" << fmt_num(scene.width) << "\" height=\""
     << fmt_num(scene.height) << "\" fill=\"#f4f4f4\"/>\n";
  for (const auto& obj : scene.objects) {
    os << "  <rect class=\"object\" data-object-id=\"" << obj.object_id << "\" data-category=\"" << obj.category
       << "\" data-color=\"" << obj.color << "\" data-size=\"" << obj.size << "\"";
    rect(os, obj.bbox);
    os << " fill=\"" << obj.color << "\" stroke=\"#222\"";
    if (obj.category == "ball") os << " rx=\"" << fmt_num(obj.bbox.width() / 2) << "\"";
    os << "><title>" << obj.size << ' ' << obj.color << ' ' << obj.category << "</title></rect>\n";
  }
  if (options.highlight_object) {
    const int id = *options.highlight_object;
    if (id < 0 || id >= scene.size()) throw std::out_of_range("highlight object out of range");
    os << "  <rect class=\"target\" data-object-id=\"" << id << "\"";
    rect(os, scene.objects[static_cast<std::size_t>(id)].bbox);
    os << " fill=\"none\" stroke=\"#ff00ff\" stroke-width=\"3\" stroke-dasharray=\"6 3\"/>\n";
  }
  for (const auto& ov : options.overlays) {
    os << "  <rect class=\"" << ov.css_class << "\"";
    rect(os, ov.box);
    os << " fill=\"none\" stroke=\"#000\" stroke-width=\"2\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

Dataset::Dataset(WorldConfig world, std::vector<Scene> scenes, std::vector<RefSample> samples)
    : world_(std::move(world)), scenes_(std::move(scenes)), samples_(std::move(samples)) {
  for (std::size_t i = 0; i < scenes_.size(); ++i) {
    if (!index_.emplace(scenes_[i].scene_id, i).second)
      throw std::invalid_argument("duplicate scene_id: " + scenes_[i].scene_id);
  }
  for (const auto& s : samples_) {
    if (!index_.contains(s.scene_id)) throw std::invalid_argument("sample references unknown scene " + s.scene_id);
  }
}

const Scene& Dataset::scene(const std::string& scene_id) const {
  const auto it = index_.find(scene_id);
  if (it == index_.end()) throw std::out_of_range("unknown scene_id: " + scene_id);
  return scenes_[it->second];
}

std::vector<RefSample> Dataset::split(Split which) const {
  std::vector<RefSample> out;
  for (const auto& s : samples_)
    if (s.split == which) out.push_back(s);
  return out;
}

Dataset generate_dataset(const DatasetConfig& config) {
  config.world.validate();
  if (config.n_scenes < 1) throw ConfigError("n_scenes must be positive");
  if (config.targets_per_scene < 1) throw ConfigError("targets_per_scene must be positive");
  const int n_train = static_cast<int>(config.n_scenes * config.train_fraction);
  const int n_val = static_cast<int>(config.n_scenes * config.val_fraction);

  std::vector<Scene> scenes;
  std::vector<RefSample> samples;
  scenes.reserve(static_cast<std::size_t>(config.n_scenes));
  for (int i = 0; i < config.n_scenes; ++i) {
    const Split split = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
    const std::uint64_t scene_seed = mix_seed(config.seed, static_cast<std::uint64_t>(i));
    Scene scene = generate_scene(config.world, scene_seed);
    char id[32];
    std::snprintf(id, sizeof id, "%s-%05d", to_string(split).c_str(), i);
    scene.scene_id = id;

    // Targets with a same-category distractor first, each group in seeded order.
    std::vector<int> ambiguous, plain;
    for (const auto& obj : scene.objects) {
      const bool shared = std::any_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
        return o.object_id != obj.object_id && o.category == obj.category;
      });
      (shared ? ambiguous : plain).push_back(obj.object_id);
    }
    Rng rng(mix_seed(scene_seed, 0x7a11));
    rng.shuffle(std::span<int>(ambiguous));
    rng.shuffle(std::span<int>(plain));
    ambiguous.insert(ambiguous.end(), plain.begin(), plain.end());
    const int n_targets = std::min<int>(config.targets_per_scene, scene.size());
    for (int t = 0; t < n_targets; ++t) {
      RefSample sample;
      sample.scene_id = scene.scene_id;
      sample.target_index = ambiguous[static_cast<std::size_t>(t)];
      sample.expressions =
          canonical_expressions(scene, sample.target_index, config.world.schema, config.world.positional_words);
      sample.split = split;
      samples.push_back(std::move(sample));
    }
    scenes.push_back(std::move(scene));
  }
  return Dataset(config.world, std::move(scenes), std::move(samples));
}

}  // namespace ireg
