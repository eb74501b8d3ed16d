#include "ireg/listener.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ireg/random.hpp"
#include "ireg/speaker.hpp"

namespace ireg {

ListenerVerdict verdict_from_scores(const Scene& scene, std::vector<double> scores, bool uninformative) {
  if (scene.objects.empty()) throw std::invalid_argument("locate: scene has no objects");
  if (scores.size() != scene.objects.size()) throw std::logic_error("locate: score vector length mismatch");
  ListenerVerdict v;
  v.predicted_index = 0;
  if (!uninformative) {
    for (std::size_t i = 1; i < scores.size(); ++i)
      if (scores[i] > scores[static_cast<std::size_t>(v.predicted_index)]) v.predicted_index = static_cast<int>(i);
  }
  v.predicted_bbox = scene.objects[static_cast<std::size_t>(v.predicted_index)].bbox;
  v.scores = std::move(scores);
  v.uninformative = uninformative;
  return v;
}

ListenerVerdict OracleListener::locate(const Scene& scene, const Expression& expression) const {
  const auto raw = oracle_scores(scene, expression, schema_);
  std::vector<double> scores(raw.begin(), raw.end());
  return verdict_from_scores(scene, std::move(scores), known_token_count(expression, schema_) == 0);
}

LearnedListener::LearnedListener(AttributeSchema schema, LearnedListenerConfig config)
    : schema_(std::move(schema)), config_(config), words_(schema_.content_words()) {
  for (std::size_t i = 0; i < words_.size(); ++i) word_ids_.emplace(words_[i], static_cast<int>(i));
  Rng rng(config_.seed);
  const int in = static_cast<int>(schema_.one_hot_width()) + kBoxFeatureDim;
  params_.add_normal("word_emb", static_cast<int>(words_.size()), config_.embedding_dim, 0.3, rng);
  params_.add_glorot("region.w1", in, config_.hidden_dim, rng);
  params_.add_constant("region.b1", 1, config_.hidden_dim, 0.0);
  params_.add_glorot("region.w2", config_.hidden_dim, config_.embedding_dim, rng);
  params_.add_constant("region.b2", 1, config_.embedding_dim, 0.0);
}

std::vector<int> LearnedListener::known_token_ids(const Expression& expression) const {
  std::vector<int> ids;
  for (const auto& tok : expression) {
    const auto it = word_ids_.find(tok);
    if (it != word_ids_.end()) ids.push_back(it->second);
  }
  return ids;
}

nn::Var LearnedListener::scores(nn::Graph& g, const Scene& scene, std::span<const int> token_ids) const {
  const int in = static_cast<int>(schema_.one_hot_width()) + kBoxFeatureDim;
  nn::Matrix feats(scene.size(), in);
  for (int i = 0; i < scene.size(); ++i) {
    const RegionFeature f = region_feature(scene, i, 0, schema_);
    for (std::size_t j = 0; j < f.attributes.size(); ++j) feats(i, static_cast<Eigen::Index>(j)) = f.attributes[j];
    for (int j = 0; j < kBoxFeatureDim; ++j)
      feats(i, static_cast<Eigen::Index>(f.attributes.size()) + j) = f.box[static_cast<std::size_t>(j)];
  }
  const nn::Var hidden =
      g.relu(g.add_row(g.matmul(g.constant(std::move(feats)), g.param("region.w1")), g.param("region.b1")));
  const nn::Var regions = g.add_row(g.matmul(hidden, g.param("region.w2")), g.param("region.b2"));
  const nn::Var text = g.mean_rows(g.gather_rows(g.param("word_emb"), token_ids));
  return g.matmul(text, g.transpose(regions));  // 1 x K
}

ListenerVerdict LearnedListener::locate(const Scene& scene, const Expression& expression) const {
  const std::vector<int> ids = known_token_ids(expression);
  if (ids.empty()) return verdict_from_scores(scene, std::vector<double>(scene.objects.size(), 0.0), true);
  nn::Graph g(params_, false);
  const nn::Matrix& s = g.value(scores(g, scene, ids));
  return verdict_from_scores(scene, std::vector<double>(s.data(), s.data() + s.size()), false);
}

nn::Var LearnedListener::target_log_prob(nn::Graph& g, const Scene& scene, const Expression& expression,
                                         int target) const {
  if (target < 0 || target >= scene.size()) throw std::out_of_range("target out of range");
  const std::vector<int> ids = known_token_ids(expression);
  if (ids.empty()) throw std::invalid_argument("expression has no known words");
  const std::array<int, 1> tgt{target};
  return g.log_prob_sum(scores(g, scene, ids), tgt);
}

void LearnedListener::apply_update(nn::Adam& optimizer, const nn::Gradients& grads) {
  if (frozen_) throw ImmutableError("listener checkpoint is frozen; parameter updates are rejected");
  optimizer.step(params_, grads);
}

double grounding_accuracy(const Listener& listener, const Dataset& data, const std::vector<RefSample>& samples) {
  std::size_t hits = 0, total = 0;
  for (const auto& s : samples) {
    const Scene& scene = data.scene(s.scene_id);
    for (const auto& expr : s.expressions) {
      ++total;
      if (listener.locate(scene, expr).predicted_index == s.target_index) ++hits;
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

LearnedListener train_learned_listener(const Dataset& data, const std::vector<RefSample>& train,
                                       const std::vector<RefSample>& val, const LearnedListenerConfig& config,
                                       ListenerTrainingReport* report) {
  if (train.empty()) throw std::invalid_argument("train_learned_listener: empty dataset");
  for (const auto& s : train)
    if (s.split != Split::kTrain) throw std::invalid_argument("train_learned_listener: train split only");

  struct Item {
    const RefSample* sample;
    std::size_t expr;
  };
  std::vector<Item> items;
  for (const auto& s : train)
    for (std::size_t e = 0; e < s.expressions.size(); ++e) items.push_back({&s, e});

  LearnedListener listener(data.world().schema, config);
  nn::Adam adam(listener.parameters(), {.learning_rate = config.learning_rate, .clip_norm = 5.0});
  Rng rng(config.seed);
  double last_loss = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<Item>(items));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(items.size(), start + static_cast<std::size_t>(config.batch_size));
      nn::Gradients grads(listener.parameters());
      for (std::size_t i = start; i < end; ++i) {
        const RefSample& s = *items[i].sample;
        nn::Graph g(listener.parameters());
        const nn::Var lp =
            listener.target_log_prob(g, data.scene(s.scene_id), s.expressions[items[i].expr], s.target_index);
        epoch_loss -= g.scalar(lp);
        g.backward(g.scale(lp, -1.0), grads);
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      listener.apply_update(adam, grads);
    }
    last_loss = epoch_loss / static_cast<double>(items.size());
  }
  listener.freeze();
  if (report) {
    report->final_loss = last_loss;
    report->train_accuracy = grounding_accuracy(listener, data, train);
    report->val_accuracy = val.empty() ? 0.0 : grounding_accuracy(listener, data, val);
  }
  return listener;
}

}  // namespace ireg
