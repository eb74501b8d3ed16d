#pragma once

// Three-stage speaker training: supervised CE/MMI, REINFORCE with the
// listener-in-the-loop reward, and round-robin refiner training on the
// interaction history.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ireg/listener.hpp"
#include "ireg/metrics.hpp"
#include "ireg/speaker.hpp"
#include "ireg/world.hpp"

namespace ireg {

struct MMIConfig {
  double lambda = 1.0;
  double margin = 0.1;
  std::uint64_t negative_seed = 0;
};

/// One teacher-forced supervised item. `negative` is a same-category region
/// used by the MMI margin term; nullopt contributes only the CE term.
struct SupervisedExample {
  const Scene* scene = nullptr;
  int target_index = 0;
  Expression expression;
  std::optional<int> negative;
};

/// Mean over the batch of -log p(T | R, I). Accumulates d(loss)/d(theta)
/// into `grads` when given.
double ce_loss(const Speaker& speaker, const AttributeSchema& schema, std::span<const SupervisedExample> batch,
               nn::Gradients* grads = nullptr);

/// Mean over the batch of -{log p(S|R) - lambda * max(0, M - log p(S|R) + log p(S|R'))}.
double mmi_loss(const Speaker& speaker, const AttributeSchema& schema, std::span<const SupervisedExample> batch,
                const MMIConfig& config, nn::Gradients* grads = nullptr);

/// Per-item MMI loss from the two sequence log-probabilities.
double mmi_objective(double log_p_target, double log_p_negative, const MMIConfig& config);

enum class RewardMode { kRec, kCider, kBoth };
std::string to_string(RewardMode mode);
RewardMode reward_mode_from_string(const std::string& name);

enum class BaselineMode { kNone, kGreedy };

struct RLConfig {
  double beta = 0.5;
  RewardMode reward = RewardMode::kBoth;
  double temperature = 1.0;
  BaselineMode baseline = BaselineMode::kNone;
  int batch_size = 32;
  double learning_rate = 5e-5;
  int epochs = 5;
  std::uint64_t seed = 0;
};

/// Scalar reward actually optimised for a breakdown under `mode`.
double rl_reward(const RewardBreakdown& breakdown, RewardMode mode);

/// Surrogate whose gradient is -(reward - baseline) * grad log p(T).
nn::Var reinforce_surrogate(nn::Graph& g, nn::Var log_prob, double reward, double baseline);

struct ReinforceItem {
  const Scene* scene = nullptr;
  int target_index = 0;
  /// Ground-truth references for the CIDEr term.
  std::vector<Expression> references;
};

struct ReinforceResult {
  double surrogate_loss = 0.0;
  RewardBreakdown mean_breakdown;
  double mean_reward = 0.0;
  double sample_accuracy = 0.0;
  std::vector<Expression> samples;
};

/// Samples one expression per item, scores it with the frozen listener and
/// the frozen CIDEr statistics, and accumulates the REINFORCE gradient.
ReinforceResult reinforce_step(const Speaker& speaker, const AttributeSchema& schema,
                               std::span<const ReinforceItem> batch, const Listener& listener,
                               const CorpusStats& stats, const RLConfig& config, std::uint64_t step_seed,
                               nn::Gradients* grads = nullptr);

struct InteractionRecord {
  std::string scene_id;
  int target_index = 0;
  Expression gt_expression;
  Expression generated_expression;
  int predicted_index = 0;
  BBox predicted_bbox;
  double iou_at_collection = 0.0;
};

/// Every evaluated sample, kept so the failure rule can be rechecked.
struct CollectionProbe {
  std::string scene_id;
  int target_index = 0;
  Expression generated_expression;
  int predicted_index = 0;
  double iou = 0.0;
};

struct InteractionHistory {
  std::vector<InteractionRecord> records;
  std::vector<RefSample> ground_truth;
  std::vector<CollectionProbe> probes;
  double threshold = 0.5;

  std::size_t merged_size() const { return ground_truth.size() + records.size(); }
  double failure_fraction() const {
    return probes.empty() ? 0.0 : static_cast<double>(records.size()) / static_cast<double>(probes.size());
  }
};

/// Beam-decodes each sample with the reinforced speaker, grounds it and keeps
/// a record whenever IoU fails the "> threshold" test. Failure records use
/// the sample's first ground-truth expression as the refinement target.
InteractionHistory collect_interaction_history(const Speaker& speaker, const Listener& listener, const Dataset& data,
                                               const std::vector<RefSample>& samples, double threshold = 0.5,
                                               std::uint64_t seed = 0, int beam_width = 5);

/// Mean over records of -log p(T | R, I, R_predict, T_generate).
double refiner_loss(const Speaker& speaker, const Dataset& data, std::span<const InteractionRecord> records,
                    nn::Gradients* grads = nullptr);

struct TrainingProgress {
  std::string stage;
  int epoch = 0;
  double value = 0.0;
};
using ProgressFn = std::function<void(const TrainingProgress&)>;

struct SupervisedConfig {
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 5e-4;
  bool use_mmi = true;
  MMIConfig mmi;
  std::uint64_t seed = 0;
};

/// Returns the mean training loss per epoch. Stage becomes mmi (or base).
std::vector<double> train_supervised(Speaker& speaker, const Dataset& data, const std::vector<RefSample>& train,
                                     const SupervisedConfig& config, const ProgressFn& progress = {});

/// Returns the mean optimised reward per epoch. Stage becomes reinforced.
std::vector<double> train_reinforce(Speaker& speaker, const Dataset& data, const std::vector<RefSample>& train,
                                    const Listener& listener, const CorpusStats& stats, const RLConfig& config,
                                    const ProgressFn& progress = {});

enum class RoundRobinTask { kReg, kRefine };
/// [REG, REF, REG, REF, ...] of length n_steps.
std::vector<RoundRobinTask> round_robin_schedule(int n_steps);

struct RoundRobinConfig {
  int epochs = 6;
  int batch_size = 32;
  double learning_rate = 5e-5;
  std::uint64_t seed = 0;
};

/// Alternates one REG batch and one refiner batch per step; the smaller task
/// cycles. Requires a reinforced speaker; stage becomes ireg.
std::vector<double> round_robin_train(Speaker& speaker, const Dataset& data, const std::vector<RefSample>& reg_data,
                                      const std::vector<InteractionRecord>& refiner_data,
                                      const RoundRobinConfig& config, const ProgressFn& progress = {});

/// Fresh speaker whose vocabulary and slot layout follow the world config.
Speaker make_speaker(const WorldConfig& world, SpeakerConfig config = {});

/// CIDEr statistics over the reference sets of `samples`.
CorpusStats corpus_stats_for(const std::vector<RefSample>& samples);

}  // namespace ireg
