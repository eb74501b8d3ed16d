#include "ireg/interaction.hpp"

#include <stdexcept>

#include "ireg/training.hpp"

namespace ireg {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kLocated: return "located";
    case Termination::kBudgetExhausted: return "budget_exhausted";
    case Termination::kInProgress: return "in_progress";
  }
  return "in_progress";
}

Termination termination_from_string(const std::string& name) {
  if (name == "located") return Termination::kLocated;
  if (name == "budget_exhausted") return Termination::kBudgetExhausted;
  if (name == "in_progress") return Termination::kInProgress;
  throw std::invalid_argument("unknown termination: " + name);
}

Generation initial_expression(const Speaker& speaker, const Scene& scene, int target, const AttributeSchema& schema,
                              int beam_width) {
  const int n = speaker.config().n_regions;
  const RegionSlots slots = build_region_slots(scene, target, std::nullopt, n, schema);
  return speaker.generate_one(build_reg_prompt(speaker.vocab(), n), slots, DecodeMode::beam(beam_width));
}

Generation refine_expression(const Speaker& speaker, const Scene& scene, int target, const Expression& previous,
                             int previous_prediction, const AttributeSchema& schema, int beam_width) {
  const int n = speaker.config().n_regions;
  const RegionSlots slots = build_region_slots(scene, target, previous_prediction, n, schema);
  return speaker.generate_one(build_refine_prompt(speaker.vocab(), previous, n, n + 1), slots,
                              DecodeMode::beam(beam_width));
}

Episode::Episode(const Speaker& ireg, const Speaker& reinforced, const Scene& scene, int target,
                 const AttributeSchema& schema, InteractiveConfig config)
    : ireg_(&ireg), scene_(&scene), schema_(&schema), config_(config) {
  if (config.max_round < 1) throw std::invalid_argument("max_round must be >= 1");
  if (target < 0 || target >= scene.size()) throw std::invalid_argument("target index out of range");
  trace_.scene_id = scene.scene_id;
  trace_.target_index = target;
  trace_.max_round = config.max_round;
  current_ = initial_expression(reinforced, scene, target, schema, config.beam_width).expression;
}

const RoundEntry& Episode::observe(int predicted_index) {
  if (done()) throw std::logic_error("episode already finished");
  if (predicted_index < 0 || predicted_index >= scene_->size())
    throw std::invalid_argument("predicted object index out of range");
  RoundEntry entry;
  entry.round = round();
  entry.expression = current_;
  entry.predicted_index = predicted_index;
  entry.predicted_bbox = scene_->objects[static_cast<std::size_t>(predicted_index)].bbox;
  entry.iou = iou(scene_->objects[static_cast<std::size_t>(trace_.target_index)].bbox, entry.predicted_bbox);
  entry.located = entry.iou > config_.threshold;
  trace_.rounds.push_back(entry);
  trace_.final_expression = current_;

  if (entry.located) {
    trace_.termination = Termination::kLocated;
    trace_.located_round = entry.round;
  } else if (round() == config_.max_round) {
    trace_.termination = Termination::kBudgetExhausted;
  } else {
    Expression next = refine_expression(*ireg_, *scene_, trace_.target_index, current_, predicted_index, *schema_,
                                        config_.beam_width)
                          .expression;
    if (next == current_) ++trace_.stagnation_count;
    current_ = std::move(next);
  }
  return trace_.rounds.back();
}

RoundTrace interactive_infer(const Speaker& ireg, const Speaker& reinforced, const Listener& listener,
                             const Scene& scene, int target, const AttributeSchema& schema,
                             const InteractiveConfig& config) {
  Episode episode(ireg, reinforced, scene, target, schema, config);
  while (!episode.done()) episode.observe(listener.locate(scene, episode.current_expression()).predicted_index);
  return episode.trace();
}

EvaluationTable evaluate_split(const Speaker& ireg, const Speaker& reinforced, const Listener& listener,
                               const Dataset& data, const std::vector<RefSample>& split,
                               const InteractiveConfig& config) {
  if (split.empty()) throw std::invalid_argument("evaluate_split: empty split");
  if (config.max_round < 1) throw std::invalid_argument("max_round must be >= 1");
  const CorpusStats stats = corpus_stats_for(split);
  EvaluationTable table;
  table.max_round = config.max_round;
  table.samples = split.size();
  table.accuracy_by_budget.assign(static_cast<std::size_t>(config.max_round), 0.0);
  double cider_sum = 0.0, rounds_sum = 0.0;
  for (const RefSample& s : split) {
    RoundTrace trace =
        interactive_infer(ireg, reinforced, listener, data.scene(s.scene_id), s.target_index, data.world().schema, config);
    for (int k = 1; k <= config.max_round; ++k)
      if (trace.located_within(k)) table.accuracy_by_budget[static_cast<std::size_t>(k - 1)] += 1.0;
    cider_sum += cider(trace.final_expression, s.expressions, stats);
    rounds_sum += static_cast<double>(trace.rounds.size());
    table.traces.push_back(std::move(trace));
  }
  const double n = static_cast<double>(split.size());
  for (double& a : table.accuracy_by_budget) a /= n;
  table.cider = cider_sum / n;
  table.mean_rounds = rounds_sum / n;
  return table;
}

SingleShotResult evaluate_single_shot(const Speaker& speaker, const Listener& listener, const Dataset& data,
                                      const std::vector<RefSample>& split, int beam_width) {
  if (split.empty()) throw std::invalid_argument("evaluate_single_shot: empty split");
  const CorpusStats stats = corpus_stats_for(split);
  SingleShotResult out;
  out.samples = split.size();
  for (const RefSample& s : split) {
    const Scene& scene = data.scene(s.scene_id);
    const Expression expr = initial_expression(speaker, scene, s.target_index, data.world().schema, beam_width).expression;
    const ListenerVerdict v = listener.locate(scene, expr);
    if (iou(scene.objects[static_cast<std::size_t>(s.target_index)].bbox, v.predicted_bbox) > 0.5) out.accuracy += 1.0;
    out.cider += cider(expr, s.expressions, stats);
  }
  out.accuracy /= static_cast<double>(split.size());
  out.cider /= static_cast<double>(split.size());
  return out;
}

}  // namespace ireg
