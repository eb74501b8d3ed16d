#pragma once

// Frozen REC agents: (scene, expression) -> predicted object.

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ireg/nn/adam.hpp"
#include "ireg/nn/graph.hpp"
#include "ireg/world.hpp"

namespace ireg {

struct ListenerVerdict {
  int predicted_index = 0;
  BBox predicted_bbox;
  std::vector<double> scores;
  /// No known content token; the prediction is the tie-break default.
  bool uninformative = false;
};

class Listener {
 public:
  virtual ~Listener() = default;
  virtual ListenerVerdict locate(const Scene& scene, const Expression& expression) const = 0;
  virtual std::string name() const = 0;
};

/// Argmax with lowest-index tie-break, filled into a verdict.
ListenerVerdict verdict_from_scores(const Scene& scene, std::vector<double> scores, bool uninformative);

class OracleListener final : public Listener {
 public:
  explicit OracleListener(AttributeSchema schema = {}) : schema_(std::move(schema)) {}
  ListenerVerdict locate(const Scene& scene, const Expression& expression) const override;
  std::string name() const override { return "oracle"; }
  const AttributeSchema& schema() const { return schema_; }

 private:
  AttributeSchema schema_;
};

class ImmutableError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct LearnedListenerConfig {
  int embedding_dim = 32;
  int hidden_dim = 64;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 3e-3;
  std::uint64_t seed = 11;
};

/// Bag-of-words expression encoder scored against an MLP over region
/// features (attribute one-hots and normalised box).
class LearnedListener final : public Listener {
 public:
  LearnedListener(AttributeSchema schema, LearnedListenerConfig config);

  ListenerVerdict locate(const Scene& scene, const Expression& expression) const override;
  std::string name() const override { return "learned"; }

  /// Grounding log-likelihood log p(target | scene, expression) as a graph node.
  nn::Var target_log_prob(nn::Graph& g, const Scene& scene, const Expression& expression, int target) const;

  /// Rejected with ImmutableError once frozen.
  void apply_update(nn::Adam& optimizer, const nn::Gradients& grads);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  const AttributeSchema& schema() const { return schema_; }
  const LearnedListenerConfig& config() const { return config_; }
  const std::vector<std::string>& words() const { return words_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

 private:
  std::vector<int> known_token_ids(const Expression& expression) const;
  nn::Var scores(nn::Graph& g, const Scene& scene, std::span<const int> token_ids) const;

  AttributeSchema schema_;
  LearnedListenerConfig config_;
  std::vector<std::string> words_;
  std::map<std::string, int> word_ids_;
  nn::ParameterSet params_;
  bool frozen_ = false;
};

struct ListenerTrainingReport {
  double final_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

/// Trains on every ground-truth expression of `train`, reports held-out
/// grounding accuracy on `val`, and returns the listener frozen.
LearnedListener train_learned_listener(const Dataset& data, const std::vector<RefSample>& train,
                                       const std::vector<RefSample>& val, const LearnedListenerConfig& config,
                                       ListenerTrainingReport* report = nullptr);

/// Fraction of ground-truth expressions grounded on the target.
double grounding_accuracy(const Listener& listener, const Dataset& data, const std::vector<RefSample>& samples);

}  // namespace ireg
