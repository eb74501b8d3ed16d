#include "ireg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "ireg/nn/adam.hpp"
#include "ireg/random.hpp"

namespace ireg {

namespace {

double supervised_loss(const Speaker& speaker, const AttributeSchema& schema, std::span<const SupervisedExample> batch,
                       double lambda, double margin, nn::Gradients* grads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const int n = speaker.config().n_regions;
  const std::vector<int> prompt = build_reg_prompt(speaker.vocab(), n);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const SupervisedExample& ex : batch) {
    if (!ex.scene) throw std::invalid_argument("supervised example without scene");
    if (ex.negative && *ex.negative == ex.target_index)
      throw std::invalid_argument("negative region must differ from the target");
    nn::Graph g(speaker.parameters(), grads != nullptr);
    const RegionSlots slots = build_region_slots(*ex.scene, ex.target_index, std::nullopt, n, schema);
    const nn::Var lp = speaker.sequence_log_prob(g, prompt, slots, ex.expression);
    nn::Var loss = g.scale(lp, -1.0);
    if (lambda != 0.0 && ex.negative) {
      const RegionSlots neg = build_region_slots(*ex.scene, *ex.negative, std::nullopt, n, schema);
      const nn::Var lp_neg = speaker.sequence_log_prob(g, prompt, neg, ex.expression);
      const nn::Var hinge = g.relu(g.add(g.sub(lp_neg, lp), g.constant(nn::Matrix::Constant(1, 1, margin))));
      loss = g.add(loss, g.scale(hinge, lambda));
    }
    total += g.scalar(loss);
    if (grads) g.backward(g.scale(loss, inv_b), *grads);
  }
  return total * inv_b;
}

template <typename T>
std::span<const T> batch_at(const std::vector<T>& items, std::size_t batch_index, std::size_t batch_size) {
  const std::size_t start = batch_index * batch_size;
  const std::size_t end = std::min(items.size(), start + batch_size);
  return std::span<const T>(items.data() + start, end - start);
}

std::size_t batch_count(std::size_t n, std::size_t batch_size) { return (n + batch_size - 1) / batch_size; }

}  // namespace

double ce_loss(const Speaker& speaker, const AttributeSchema& schema, std::span<const SupervisedExample> batch,
               nn::Gradients* grads) {
  return supervised_loss(speaker, schema, batch, 0.0, 0.0, grads);
}

double mmi_loss(const Speaker& speaker, const AttributeSchema& schema, std::span<const SupervisedExample> batch,
                const MMIConfig& config, nn::Gradients* grads) {
  if (config.lambda < 0.0) throw std::invalid_argument("mmi lambda must be >= 0");
  if (!std::isfinite(config.margin)) throw std::invalid_argument("mmi margin must be finite");
  return supervised_loss(speaker, schema, batch, config.lambda, config.margin, grads);
}

double mmi_objective(double log_p_target, double log_p_negative, const MMIConfig& config) {
  return -(log_p_target - config.lambda * std::max(0.0, config.margin - log_p_target + log_p_negative));
}

std::string to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::kRec: return "rec";
    case RewardMode::kCider: return "cider";
    case RewardMode::kBoth: return "both";
  }
  return "both";
}

RewardMode reward_mode_from_string(const std::string& name) {
  if (name == "rec") return RewardMode::kRec;
  if (name == "cider") return RewardMode::kCider;
  if (name == "both") return RewardMode::kBoth;
  throw std::invalid_argument("unknown reward mode: " + name);
}

double rl_reward(const RewardBreakdown& b, RewardMode mode) {
  switch (mode) {
    case RewardMode::kRec: return b.rec_reward;
    case RewardMode::kCider: return b.beta * b.cider;
    case RewardMode::kBoth: return b.total;
  }
  return b.total;
}

nn::Var reinforce_surrogate(nn::Graph& g, nn::Var log_prob, double reward, double baseline) {
  return g.scale(log_prob, -(reward - baseline));
}

ReinforceResult reinforce_step(const Speaker& speaker, const AttributeSchema& schema,
                               std::span<const ReinforceItem> batch, const Listener& listener,
                               const CorpusStats& stats, const RLConfig& config, std::uint64_t step_seed,
                               nn::Gradients* grads) {
  if (batch.empty()) throw std::invalid_argument("reinforce_step: empty batch");
  if (config.beta < 0.0) throw std::invalid_argument("reinforce_step: beta must be >= 0");
  const int n = speaker.config().n_regions;
  const std::vector<int> prompt = build_reg_prompt(speaker.vocab(), n);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  auto score = [&](const ReinforceItem& item, const Expression& expr, std::size_t index) {
    ListenerVerdict verdict;
    try {
      verdict = listener.locate(*item.scene, expr);
    } catch (const std::exception& e) {
      throw std::runtime_error("reinforce_step: listener failed on batch item " + std::to_string(index) + " (" +
                               item.scene->scene_id + ", \"" + join_tokens(expr) + "\"): " + e.what());
    }
    const BBox& gt = item.scene->objects[static_cast<std::size_t>(item.target_index)].bbox;
    return combined_reward(gt, verdict.predicted_bbox, item.references, expr, config.beta, stats);
  };

  ReinforceResult result;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ReinforceItem& item = batch[i];
    if (!item.scene) throw std::invalid_argument("reinforce item without scene");
    if (item.references.empty()) throw std::invalid_argument("reinforce item without references");
    const RegionSlots slots = build_region_slots(*item.scene, item.target_index, std::nullopt, n, schema);
    const Generation gen =
        speaker.generate_one(prompt, slots, DecodeMode::sample(config.temperature, mix_seed(step_seed, i)));
    const RewardBreakdown breakdown = score(item, gen.expression, i);
    const double reward = rl_reward(breakdown, config.reward);
    double baseline = 0.0;
    if (config.baseline == BaselineMode::kGreedy) {
      const Generation greedy = speaker.generate_one(prompt, slots, DecodeMode::greedy());
      baseline = rl_reward(score(item, greedy.expression, i), config.reward);
    }

    result.mean_breakdown.rec_reward += breakdown.rec_reward * inv_b;
    result.mean_breakdown.cider += breakdown.cider * inv_b;
    result.mean_breakdown.total += breakdown.total * inv_b;
    result.mean_reward += reward * inv_b;
    if (breakdown.rec_reward > 0.5) ++hits;

    nn::Graph g(speaker.parameters(), grads != nullptr);
    const nn::Var lp = speaker.sequence_log_prob(g, prompt, slots, gen.expression, !gen.truncated);
    const nn::Var surrogate = g.scale(reinforce_surrogate(g, lp, reward, baseline), inv_b);
    result.surrogate_loss += g.scalar(surrogate);
    if (grads) g.backward(surrogate, *grads);
    result.samples.push_back(gen.expression);
  }
  result.mean_breakdown.beta = config.beta;
  result.sample_accuracy = static_cast<double>(hits) * inv_b;
  return result;
}

InteractionHistory collect_interaction_history(const Speaker& speaker, const Listener& listener, const Dataset& data,
                                               const std::vector<RefSample>& samples, double threshold,
                                               std::uint64_t seed, int beam_width) {
  if (speaker.stage() != Stage::kReinforced)
    throw std::logic_error("collect_interaction_history needs a reinforced-stage speaker, got " +
                           to_string(speaker.stage()));
  (void)seed;  // beam decoding is deterministic; kept for a reproducible interface
  const int n = speaker.config().n_regions;
  const AttributeSchema& schema = data.world().schema;
  const std::vector<int> prompt = build_reg_prompt(speaker.vocab(), n);
  InteractionHistory history;
  history.threshold = threshold;
  history.ground_truth = samples;
  for (const RefSample& s : samples) {
    const Scene& scene = data.scene(s.scene_id);
    const RegionSlots slots = build_region_slots(scene, s.target_index, std::nullopt, n, schema);
    const Generation gen = speaker.generate_one(prompt, slots, DecodeMode::beam(beam_width));
    const ListenerVerdict verdict = listener.locate(scene, gen.expression);
    const double score = iou(scene.objects[static_cast<std::size_t>(s.target_index)].bbox, verdict.predicted_bbox);
    history.probes.push_back({s.scene_id, s.target_index, gen.expression, verdict.predicted_index, score});
    if (score > threshold) continue;
    InteractionRecord rec;
    rec.scene_id = s.scene_id;
    rec.target_index = s.target_index;
    rec.gt_expression = s.expressions.front();
    rec.generated_expression = gen.expression;
    rec.predicted_index = verdict.predicted_index;
    rec.predicted_bbox = verdict.predicted_bbox;
    rec.iou_at_collection = score;
    history.records.push_back(std::move(rec));
  }
  return history;
}

double refiner_loss(const Speaker& speaker, const Dataset& data, std::span<const InteractionRecord> records,
                    nn::Gradients* grads) {
  if (records.empty()) throw std::invalid_argument("refiner_loss: empty batch");
  const int n = speaker.config().n_regions;
  const AttributeSchema& schema = data.world().schema;
  const double inv_b = 1.0 / static_cast<double>(records.size());
  double total = 0.0;
  for (const InteractionRecord& rec : records) {
    const Scene& scene = data.scene(rec.scene_id);
    if (rec.predicted_index < 0 || rec.predicted_index >= scene.size())
      throw std::invalid_argument("interaction record is missing its predicted region");
    const RegionSlots slots = build_region_slots(scene, rec.target_index, rec.predicted_index, n, schema);
    const std::vector<int> prompt = build_refine_prompt(speaker.vocab(), rec.generated_expression, n, n + 1);
    nn::Graph g(speaker.parameters(), grads != nullptr);
    const nn::Var loss = g.scale(speaker.sequence_log_prob(g, prompt, slots, rec.gt_expression), -1.0);
    total += g.scalar(loss);
    if (grads) g.backward(g.scale(loss, inv_b), *grads);
  }
  return total * inv_b;
}

std::vector<double> train_supervised(Speaker& speaker, const Dataset& data, const std::vector<RefSample>& train,
                                     const SupervisedConfig& config, const ProgressFn& progress) {
  if (train.empty()) throw std::invalid_argument("train_supervised: empty training set");
  const AttributeSchema& schema = data.world().schema;
  std::vector<SupervisedExample> items;
  for (const RefSample& s : train)
    for (const Expression& e : s.expressions) items.push_back({&data.scene(s.scene_id), s.target_index, e, {}});

  nn::Adam adam(speaker.parameters(), {.learning_rate = config.learning_rate});
  Rng rng(config.seed);
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::vector<double> curve;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<SupervisedExample>(items));
    if (config.use_mmi) {
      for (std::size_t i = 0; i < items.size(); ++i)
        items[i].negative = sample_negative_region(
            *items[i].scene, items[i].target_index,
            mix_seed(config.mmi.negative_seed, static_cast<std::uint64_t>(epoch) * 1000003ULL + i));
    }
    double sum = 0.0;
    for (std::size_t b = 0; b < batch_count(items.size(), bs); ++b) {
      const auto batch = batch_at(items, b, bs);
      nn::Gradients grads(speaker.parameters());
      const double loss = config.use_mmi ? mmi_loss(speaker, schema, batch, config.mmi, &grads)
                                         : ce_loss(speaker, schema, batch, &grads);
      sum += loss * static_cast<double>(batch.size());
      adam.step(speaker.parameters(), grads);
    }
    curve.push_back(sum / static_cast<double>(items.size()));
    if (progress) progress({config.use_mmi ? "mmi" : "ce", epoch, curve.back()});
  }
  speaker.advance_stage(config.use_mmi ? Stage::kMmi : Stage::kBase);
  return curve;
}

std::vector<double> train_reinforce(Speaker& speaker, const Dataset& data, const std::vector<RefSample>& train,
                                    const Listener& listener, const CorpusStats& stats, const RLConfig& config,
                                    const ProgressFn& progress) {
  if (train.empty()) throw std::invalid_argument("train_reinforce: empty training set");
  if (static_cast<int>(speaker.stage()) > static_cast<int>(Stage::kReinforced))
    throw std::logic_error("train_reinforce: speaker already past the reinforced stage");
  std::vector<ReinforceItem> items;
  for (const RefSample& s : train) items.push_back({&data.scene(s.scene_id), s.target_index, s.expressions});

  nn::Adam adam(speaker.parameters(), {.learning_rate = config.learning_rate});
  Rng rng(config.seed);
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::vector<double> curve;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<ReinforceItem>(items));
    double sum = 0.0;
    for (std::size_t b = 0; b < batch_count(items.size(), bs); ++b) {
      const auto batch = batch_at(items, b, bs);
      nn::Gradients grads(speaker.parameters());
      const ReinforceResult r = reinforce_step(speaker, data.world().schema, batch, listener, stats, config,
                                               mix_seed(config.seed, step++), &grads);
      sum += r.mean_reward * static_cast<double>(batch.size());
      adam.step(speaker.parameters(), grads);
    }
    curve.push_back(sum / static_cast<double>(items.size()));
    if (progress) progress({"rl-" + to_string(config.reward), epoch, curve.back()});
  }
  speaker.advance_stage(Stage::kReinforced);
  return curve;
}

std::vector<RoundRobinTask> round_robin_schedule(int n_steps) {
  std::vector<RoundRobinTask> out;
  for (int i = 0; i < n_steps; ++i) out.push_back(i % 2 == 0 ? RoundRobinTask::kReg : RoundRobinTask::kRefine);
  return out;
}

std::vector<double> round_robin_train(Speaker& speaker, const Dataset& data, const std::vector<RefSample>& reg_data,
                                      const std::vector<InteractionRecord>& refiner_data,
                                      const RoundRobinConfig& config, const ProgressFn& progress) {
  if (reg_data.empty()) throw std::invalid_argument("round_robin_train: REG task data is empty");
  if (refiner_data.empty()) throw std::invalid_argument("round_robin_train: refiner task data is empty");
  if (speaker.stage() != Stage::kReinforced && speaker.stage() != Stage::kIreg)
    throw std::logic_error("round_robin_train needs a reinforced-stage speaker, got " + to_string(speaker.stage()));
  const AttributeSchema& schema = data.world().schema;
  std::vector<SupervisedExample> reg;
  for (const RefSample& s : reg_data)
    for (const Expression& e : s.expressions) reg.push_back({&data.scene(s.scene_id), s.target_index, e, {}});
  std::vector<InteractionRecord> ref = refiner_data;

  nn::Adam adam(speaker.parameters(), {.learning_rate = config.learning_rate});
  Rng rng(config.seed);
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t n_reg = batch_count(reg.size(), bs);
  const std::size_t n_ref = batch_count(ref.size(), bs);
  const std::size_t pairs = std::max(n_reg, n_ref);
  std::vector<double> curve;
  std::size_t reg_cursor = 0, ref_cursor = 0;
  rng.shuffle(std::span<SupervisedExample>(reg));
  rng.shuffle(std::span<InteractionRecord>(ref));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double sum = 0.0;
    const auto schedule = round_robin_schedule(static_cast<int>(2 * pairs));
    for (const RoundRobinTask task : schedule) {
      nn::Gradients grads(speaker.parameters());
      if (task == RoundRobinTask::kReg) {
        if (reg_cursor == n_reg) {
          reg_cursor = 0;
          rng.shuffle(std::span<SupervisedExample>(reg));
        }
        sum += ce_loss(speaker, schema, batch_at(reg, reg_cursor++, bs), &grads);
      } else {
        if (ref_cursor == n_ref) {
          ref_cursor = 0;
          rng.shuffle(std::span<InteractionRecord>(ref));
        }
        sum += refiner_loss(speaker, data, batch_at(ref, ref_cursor++, bs), &grads);
      }
      adam.step(speaker.parameters(), grads);
    }
    curve.push_back(sum / static_cast<double>(2 * pairs));
    if (progress) progress({"round-robin", epoch, curve.back()});
  }
  speaker.advance_stage(Stage::kIreg);
  return curve;
}

Speaker make_speaker(const WorldConfig& world, SpeakerConfig config) {
  config.n_regions = world.n_regions;
  config.attr_dim = static_cast<int>(world.schema.one_hot_width());
  return Speaker(config, Vocabulary(world.schema.content_words(), world.n_regions));
}

CorpusStats corpus_stats_for(const std::vector<RefSample>& samples) {
  std::vector<std::vector<Expression>> sets;
  sets.reserve(samples.size());
  for (const auto& s : samples) sets.push_back(s.expressions);
  return CorpusStats(sets);
}

}  // namespace ireg
