#pragma once

// Multi-round interactive inference: generate, ground, stop on success,
// otherwise refine from the previous round only.

#include <optional>
#include <string>
#include <vector>

#include "ireg/listener.hpp"
#include "ireg/metrics.hpp"
#include "ireg/speaker.hpp"
#include "ireg/world.hpp"

namespace ireg {

struct RoundEntry {
  int round = 0;
  Expression expression;
  int predicted_index = 0;
  BBox predicted_bbox;
  double iou = 0.0;
  bool located = false;

  bool operator==(const RoundEntry&) const = default;
};

enum class Termination { kLocated, kBudgetExhausted, kInProgress };
std::string to_string(Termination t);
Termination termination_from_string(const std::string& name);

struct RoundTrace {
  std::string scene_id;
  int target_index = 0;
  int max_round = 5;
  std::vector<RoundEntry> rounds;
  Termination termination = Termination::kInProgress;
  /// Round index of the successful entry.
  std::optional<int> located_round;
  Expression final_expression;
  /// Refinements that repeated the previous round's expression.
  int stagnation_count = 0;

  bool located_within(int budget) const { return located_round && *located_round < budget; }
  bool operator==(const RoundTrace&) const = default;
};

struct InteractiveConfig {
  int max_round = 5;
  int beam_width = 5;
  double threshold = 0.5;
};

/// Round-0 expression: beam decoding of the REG prompt.
Generation initial_expression(const Speaker& speaker, const Scene& scene, int target, const AttributeSchema& schema,
                              int beam_width = 5);
/// One refinement step from the previous expression and prediction only.
Generation refine_expression(const Speaker& speaker, const Scene& scene, int target, const Expression& previous,
                             int previous_prediction, const AttributeSchema& schema, int beam_width = 5);

/// Algorithm-1 state machine. The caller supplies each round's grounding,
/// from a listener or from a human click.
class Episode {
 public:
  Episode(const Speaker& ireg, const Speaker& reinforced, const Scene& scene, int target,
          const AttributeSchema& schema, InteractiveConfig config);

  const Expression& current_expression() const { return current_; }
  bool done() const { return trace_.termination != Termination::kInProgress; }
  int round() const { return static_cast<int>(trace_.rounds.size()); }
  const RoundTrace& trace() const { return trace_; }

  /// Records the grounding of the current expression and refines on
  /// failure. Throws std::logic_error once the episode is done.
  const RoundEntry& observe(int predicted_index);

 private:
  const Speaker* ireg_;
  const Scene* scene_;
  const AttributeSchema* schema_;
  InteractiveConfig config_;
  Expression current_;
  RoundTrace trace_;
};

RoundTrace interactive_infer(const Speaker& ireg, const Speaker& reinforced, const Listener& listener,
                             const Scene& scene, int target, const AttributeSchema& schema,
                             const InteractiveConfig& config = {});

struct EvaluationTable {
  int max_round = 0;
  /// accuracy_by_budget[k - 1] = REC accuracy with a budget of k rounds.
  std::vector<double> accuracy_by_budget;
  double cider = 0.0;
  double mean_rounds = 0.0;
  std::size_t samples = 0;
  std::vector<RoundTrace> traces;
};

EvaluationTable evaluate_split(const Speaker& ireg, const Speaker& reinforced, const Listener& listener,
                               const Dataset& data, const std::vector<RefSample>& split,
                               const InteractiveConfig& config = {});

struct SingleShotResult {
  double accuracy = 0.0;
  double cider = 0.0;
  std::size_t samples = 0;
};

/// One beam-decoded expression per sample, grounded once.
SingleShotResult evaluate_single_shot(const Speaker& speaker, const Listener& listener, const Dataset& data,
                                      const std::vector<RefSample>& split, int beam_width = 5);

}  // namespace ireg
