#pragma once

// The referring-expression speaker: a bidirectional encoder over
// [instruction tokens ; region slots] and an autoregressive decoder.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ireg/nn/graph.hpp"
#include "ireg/vocabulary.hpp"
#include "ireg/world.hpp"

namespace ireg {

enum class Stage { kBase = 0, kMmi = 1, kReinforced = 2, kIreg = 3 };
std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);

struct SpeakerConfig {
  int n_regions = 12;
  int attr_dim = 13;
  int d_model = 64;
  int heads = 4;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int ffn_dim = 128;
  int max_expression_length = 12;
  int max_prompt_length = 32;
  std::uint64_t init_seed = 1;

  void validate() const;
  bool operator==(const SpeakerConfig&) const = default;
};

constexpr int kBoxFeatureDim = 5;

/// One encoder region slot. The slot embedding is
/// attr_proj(attributes) + box_proj(box) + embedding(<vis_region_id>).
struct RegionFeature {
  std::vector<double> attributes;
  std::array<double, kBoxFeatureDim> box{};
  int region_id = 0;
};

/// Region slots for one encoder call; present[i] == false marks padding.
struct RegionSlots {
  std::vector<RegionFeature> features;
  std::vector<bool> present;
};

RegionFeature region_feature(const Scene& scene, int object_index, int region_id, const AttributeSchema& schema);

/// Slots 0..K-1 hold the scene objects, K..n_regions-1 padding, slot
/// n_regions the target and, when `predicted` is set, slot n_regions+1 the
/// wrongly predicted region.
RegionSlots build_region_slots(const Scene& scene, int target_index, std::optional<int> predicted,
                               int n_regions, const AttributeSchema& schema);

/// "caption region: <vis_N>"; target_slot must equal N.
std::vector<int> build_reg_prompt(const Vocabulary& vocab, int target_slot);
/// "caption region: <vis_N> {prev} incorrectly located as: <vis_N+1> Please refine it."
std::vector<int> build_refine_prompt(const Vocabulary& vocab, const Expression& prev_expr, int target_slot,
                                     int pred_slot);

struct DecodeMode {
  enum class Kind { kGreedy, kSample, kBeam };
  Kind kind = Kind::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  int beam_width = 5;

  static DecodeMode greedy() { return {}; }
  static DecodeMode sample(double temperature, std::uint64_t seed) {
    return {Kind::kSample, temperature, seed, 1};
  }
  static DecodeMode beam(int width) { return {Kind::kBeam, 1.0, 0, width}; }
};

struct Generation {
  Expression expression;
  /// Model log-probability of the tokens (plus <eos> unless truncated).
  double log_prob = 0.0;
  /// Hit the length limit without emitting <eos>; <eos> is implied.
  bool truncated = false;
};

class Speaker {
 public:
  Speaker(SpeakerConfig config, Vocabulary vocab);

  const SpeakerConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  Stage stage() const { return stage_; }
  /// Stages only move forward: base -> mmi -> reinforced -> ireg.
  void advance_stage(Stage next);
  /// Unchecked; used when restoring checkpoints.
  void set_stage(Stage stage) { stage_ = stage; }

  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  // Graph-level building blocks shared by the losses.
  nn::Var encode(nn::Graph& g, std::span<const int> prompt, const RegionSlots& regions) const;
  /// Logits over the output space, one row per decoder input position.
  nn::Var decode(nn::Graph& g, nn::Var memory, const RegionSlots& regions, int prompt_length,
                 std::span<const int> input_ids) const;
  /// log p(expr, <eos> | prompt, regions) as a 1x1 graph variable. With
  /// include_eos == false the final <eos> factor is left out, which is the
  /// probability of a generation truncated at the length limit.
  /// Expressions have at least one token; <eos> is never allowed first.
  nn::Var sequence_log_prob(nn::Graph& g, std::span<const int> prompt, const RegionSlots& regions,
                            const Expression& expr, bool include_eos = true) const;

  // Inference helpers (no gradient recording).
  nn::Matrix encode(std::span<const int> prompt, const RegionSlots& regions) const;
  double sequence_log_prob(std::span<const int> prompt, const RegionSlots& regions, const Expression& expr) const;
  /// Log-probabilities over the output space for the next token after `prefix`.
  std::vector<double> next_token_log_probs(std::span<const int> prompt, const RegionSlots& regions,
                                           const Expression& prefix) const;
  std::vector<Generation> generate(std::span<const int> prompt, const RegionSlots& regions,
                                   const DecodeMode& mode) const;
  /// Convenience: the best (or only) generation.
  Generation generate_one(std::span<const int> prompt, const RegionSlots& regions, const DecodeMode& mode) const;

 private:
  struct Linear {
    std::size_t w = 0;
    std::size_t b = 0;
  };
  struct Norm {
    std::size_t gain = 0;
    std::size_t bias = 0;
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct FeedForward {
    Linear in, out;
  };
  struct EncoderLayer {
    Norm ln1, ln2;
    Attention self;
    FeedForward ffn;
  };
  struct DecoderLayer {
    Norm ln1, ln2, ln3;
    Attention self, cross;
    FeedForward ffn;
  };

  Linear add_linear(const std::string& name, int in, int out, Rng& rng);
  Norm add_norm(const std::string& name, int width);
  Attention add_attention(const std::string& name, Rng& rng);

  nn::Var linear(nn::Graph& g, nn::Var x, const Linear& l) const;
  nn::Var norm(nn::Graph& g, nn::Var x, const Norm& n) const;
  nn::Var attend(nn::Graph& g, nn::Var queries, nn::Var keys, const Attention& a, const nn::Matrix& mask) const;
  nn::Var feed_forward(nn::Graph& g, nn::Var x, const FeedForward& f) const;
  void check_slots(const RegionSlots& regions) const;
  nn::Matrix memory_mask(const RegionSlots& regions, int prompt_length, int query_rows) const;

  std::vector<Generation> beam_search(std::span<const int> prompt, const RegionSlots& regions, int width) const;

  SpeakerConfig config_;
  Vocabulary vocab_;
  Stage stage_ = Stage::kBase;
  nn::ParameterSet params_;

  std::size_t tok_emb_ = 0, enc_pos_ = 0, dec_pos_ = 0;
  Linear attr_proj_, box_proj_, out_proj_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Norm enc_final_, dec_final_;
};

}  // namespace ireg
