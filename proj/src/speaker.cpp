#include "ireg/speaker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ireg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> log_softmax(const nn::Matrix& logits, Eigen::Index row) {
  const double mx = logits.row(row).maxCoeff();
  double denom = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) denom += std::exp(logits(row, j) - mx);
  const double lse = mx + std::log(denom);
  std::vector<double> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) out[static_cast<std::size_t>(j)] = logits(row, j) - lse;
  return out;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kBase: return "base";
    case Stage::kMmi: return "mmi";
    case Stage::kReinforced: return "reinforced";
    case Stage::kIreg: return "ireg";
  }
  return "base";
}

Stage stage_from_string(const std::string& name) {
  if (name == "base") return Stage::kBase;
  if (name == "mmi") return Stage::kMmi;
  if (name == "reinforced") return Stage::kReinforced;
  if (name == "ireg") return Stage::kIreg;
  throw std::invalid_argument("unknown stage: " + name);
}

void SpeakerConfig::validate() const {
  if (n_regions < 1) throw ConfigError("n_regions must be positive");
  if (attr_dim < 1) throw ConfigError("attr_dim must be positive");
  if (d_model < 1 || heads < 1 || d_model % heads != 0) throw ConfigError("heads must divide d_model");
  if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("need at least one layer per stack");
  if (ffn_dim < 1) throw ConfigError("ffn_dim must be positive");
  if (max_expression_length < 1 || max_prompt_length < 4) throw ConfigError("length limits too small");
}

RegionFeature region_feature(const Scene& scene, int object_index, int region_id, const AttributeSchema& schema) {
  if (object_index < 0 || object_index >= scene.size()) throw std::out_of_range("region_feature: object index");
  const SceneObject& obj = scene.objects[static_cast<std::size_t>(object_index)];
  RegionFeature f;
  f.attributes.assign(schema.one_hot_width(), 0.0);
  const auto pos = [](const std::vector<std::string>& words, const std::string& w) {
    const auto it = std::find(words.begin(), words.end(), w);
    if (it == words.end()) throw std::invalid_argument("region_feature: attribute '" + w + "' not in schema");
    return static_cast<std::size_t>(it - words.begin());
  };
  f.attributes[pos(schema.categories, obj.category)] = 1.0;
  f.attributes[schema.categories.size() + pos(schema.colors, obj.color)] = 1.0;
  f.attributes[schema.categories.size() + schema.colors.size() + pos(schema.sizes, obj.size)] = 1.0;
  f.box = {obj.bbox.x_min / scene.width, obj.bbox.y_min / scene.height, obj.bbox.x_max / scene.width,
           obj.bbox.y_max / scene.height, obj.bbox.area() / (scene.width * scene.height)};
  f.region_id = region_id;
  return f;
}

RegionSlots build_region_slots(const Scene& scene, int target_index, std::optional<int> predicted,
                               int n_regions, const AttributeSchema& schema) {
  if (scene.size() > n_regions) throw std::invalid_argument("scene has more objects than region slots");
  if (target_index < 0 || target_index >= scene.size()) throw std::out_of_range("target index out of range");
  RegionSlots slots;
  const int total = n_regions + (predicted ? 2 : 1);
  slots.features.resize(static_cast<std::size_t>(total));
  slots.present.assign(static_cast<std::size_t>(total), false);
  for (int i = 0; i < scene.size(); ++i) {
    slots.features[static_cast<std::size_t>(i)] = region_feature(scene, i, i, schema);
    slots.present[static_cast<std::size_t>(i)] = true;
  }
  for (int i = scene.size(); i < n_regions; ++i) {
    RegionFeature pad;
    pad.attributes.assign(schema.one_hot_width(), 0.0);
    pad.region_id = i;
    slots.features[static_cast<std::size_t>(i)] = std::move(pad);
  }
  slots.features[static_cast<std::size_t>(n_regions)] = region_feature(scene, target_index, n_regions, schema);
  slots.present[static_cast<std::size_t>(n_regions)] = true;
  if (predicted) {
    slots.features[static_cast<std::size_t>(n_regions + 1)] = region_feature(scene, *predicted, n_regions + 1, schema);
    slots.present[static_cast<std::size_t>(n_regions + 1)] = true;
  }
  return slots;
}

std::vector<int> build_reg_prompt(const Vocabulary& vocab, int target_slot) {
  if (target_slot != vocab.n_regions())
    throw std::invalid_argument("REG prompt target slot must be " + std::to_string(vocab.n_regions()));
  return {vocab.id("caption"), vocab.id("region:"), vocab.sentinel(target_slot)};
}

std::vector<int> build_refine_prompt(const Vocabulary& vocab, const Expression& prev_expr, int target_slot,
                                     int pred_slot) {
  if (prev_expr.empty()) throw std::invalid_argument("refine prompt needs a previous expression");
  if (pred_slot != vocab.n_regions() + 1)
    throw std::invalid_argument("refine prompt predicted slot must be " + std::to_string(vocab.n_regions() + 1));
  std::vector<int> out = build_reg_prompt(vocab, target_slot);
  for (const int t : vocab.encode_expression(prev_expr)) out.push_back(t);
  for (const char* w : {"incorrectly", "located", "as:"}) out.push_back(vocab.id(w));
  out.push_back(vocab.sentinel(pred_slot));
  for (const char* w : {"Please", "refine", "it."}) out.push_back(vocab.id(w));
  return out;
}

Speaker::Speaker(SpeakerConfig config, Vocabulary vocab) : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  if (vocab_.n_regions() != config_.n_regions) throw ConfigError("vocabulary and config disagree on n_regions");
  Rng rng(config_.init_seed);
  const int d = config_.d_model;
  tok_emb_ = params_.add_normal("tok_emb", vocab_.size(), d, 1.0 / std::sqrt(d), rng);
  enc_pos_ = params_.add_normal("enc_pos", config_.max_prompt_length, d, 0.1, rng);
  dec_pos_ = params_.add_normal("dec_pos", config_.max_expression_length + 1, d, 0.1, rng);
  attr_proj_ = add_linear("attr_proj", config_.attr_dim, d, rng);
  box_proj_ = add_linear("box_proj", kBoxFeatureDim, d, rng);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    EncoderLayer layer;
    layer.ln1 = add_norm(p + ".ln1", d);
    layer.self = add_attention(p + ".self", rng);
    layer.ln2 = add_norm(p + ".ln2", d);
    layer.ffn = {add_linear(p + ".ffn.in", d, config_.ffn_dim, rng), add_linear(p + ".ffn.out", config_.ffn_dim, d, rng)};
    encoder_.push_back(layer);
  }
  enc_final_ = add_norm("enc.final", d);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    DecoderLayer layer;
    layer.ln1 = add_norm(p + ".ln1", d);
    layer.self = add_attention(p + ".self", rng);
    layer.ln2 = add_norm(p + ".ln2", d);
    layer.cross = add_attention(p + ".cross", rng);
    layer.ln3 = add_norm(p + ".ln3", d);
    layer.ffn = {add_linear(p + ".ffn.in", d, config_.ffn_dim, rng), add_linear(p + ".ffn.out", config_.ffn_dim, d, rng)};
    decoder_.push_back(layer);
  }
  dec_final_ = add_norm("dec.final", d);
  out_proj_ = add_linear("out_proj", d, vocab_.output_size(), rng);
}

void Speaker::advance_stage(Stage next) {
  if (static_cast<int>(next) < static_cast<int>(stage_))
    throw std::logic_error("stage cannot move backwards from " + to_string(stage_) + " to " + to_string(next));
  stage_ = next;
}

Speaker::Linear Speaker::add_linear(const std::string& name, int in, int out, Rng& rng) {
  return {params_.add_glorot(name + ".w", in, out, rng), params_.add_constant(name + ".b", 1, out, 0.0)};
}

Speaker::Norm Speaker::add_norm(const std::string& name, int width) {
  return {params_.add_constant(name + ".g", 1, width, 1.0), params_.add_constant(name + ".b", 1, width, 0.0)};
}

Speaker::Attention Speaker::add_attention(const std::string& name, Rng& rng) {
  const int d = config_.d_model;
  return {add_linear(name + ".q", d, d, rng), add_linear(name + ".k", d, d, rng), add_linear(name + ".v", d, d, rng),
          add_linear(name + ".o", d, d, rng)};
}

nn::Var Speaker::linear(nn::Graph& g, nn::Var x, const Linear& l) const {
  return g.add_row(g.matmul(x, g.param(l.w)), g.param(l.b));
}

nn::Var Speaker::norm(nn::Graph& g, nn::Var x, const Norm& n) const {
  return g.layer_norm(x, g.param(n.gain), g.param(n.bias));
}

nn::Var Speaker::attend(nn::Graph& g, nn::Var queries, nn::Var keys, const Attention& a,
                        const nn::Matrix& mask) const {
  const nn::Var q = linear(g, queries, a.q);
  const nn::Var k = linear(g, keys, a.k);
  const nn::Var v = linear(g, keys, a.v);
  return linear(g, g.attention(q, k, v, mask, config_.heads), a.o);
}

nn::Var Speaker::feed_forward(nn::Graph& g, nn::Var x, const FeedForward& f) const {
  return linear(g, g.relu(linear(g, x, f.in)), f.out);
}

void Speaker::check_slots(const RegionSlots& regions) const {
  const auto n = regions.features.size();
  const auto base = static_cast<std::size_t>(config_.n_regions);
  if (n != base + 1 && n != base + 2)
    throw std::invalid_argument("region slots must number n_regions+1 (REG) or n_regions+2 (refine)");
  if (regions.present.size() != n) throw std::invalid_argument("region mask length mismatch");
  if (!regions.present[base]) throw std::invalid_argument("target slot must be present");
  for (const auto& f : regions.features) {
    if (static_cast<int>(f.attributes.size()) != config_.attr_dim)
      throw std::invalid_argument("region attribute width mismatch");
    if (f.region_id < 0 || f.region_id > config_.n_regions + 1) throw std::invalid_argument("region id out of range");
  }
}

nn::Matrix Speaker::memory_mask(const RegionSlots& regions, int prompt_length, int query_rows) const {
  const int cols = prompt_length + static_cast<int>(regions.features.size());
  nn::Matrix mask = nn::Matrix::Zero(query_rows, cols);
  for (std::size_t s = 0; s < regions.present.size(); ++s)
    if (!regions.present[s]) mask.col(prompt_length + static_cast<Eigen::Index>(s)).setConstant(kNegInf);
  return mask;
}

nn::Var Speaker::encode(nn::Graph& g, std::span<const int> prompt, const RegionSlots& regions) const {
  if (prompt.empty()) throw std::invalid_argument("encode: empty prompt");
  if (static_cast<int>(prompt.size()) > config_.max_prompt_length)
    throw std::invalid_argument("encode: prompt longer than max_prompt_length");
  check_slots(regions);
  for (const int t : prompt)
    if (t < 0 || t >= vocab_.size()) throw std::invalid_argument("encode: prompt token out of range");

  const int p = static_cast<int>(prompt.size());
  const int s = static_cast<int>(regions.features.size());
  std::vector<int> positions(static_cast<std::size_t>(p));
  std::iota(positions.begin(), positions.end(), 0);
  const nn::Var prompt_emb = g.add(g.gather_rows(g.param(tok_emb_), prompt), g.gather_rows(g.param(enc_pos_), positions));

  nn::Matrix attrs(s, config_.attr_dim);
  nn::Matrix boxes(s, kBoxFeatureDim);
  std::vector<int> ids(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i) {
    const RegionFeature& f = regions.features[static_cast<std::size_t>(i)];
    for (int j = 0; j < config_.attr_dim; ++j) attrs(i, j) = f.attributes[static_cast<std::size_t>(j)];
    for (int j = 0; j < kBoxFeatureDim; ++j) boxes(i, j) = f.box[static_cast<std::size_t>(j)];
    ids[static_cast<std::size_t>(i)] = vocab_.sentinel(f.region_id);
  }
  const nn::Var region_emb = g.add(g.add(linear(g, g.constant(std::move(attrs)), attr_proj_),
                                         linear(g, g.constant(std::move(boxes)), box_proj_)),
                                   g.gather_rows(g.param(tok_emb_), ids));

  const std::array<nn::Var, 2> parts{prompt_emb, region_emb};
  nn::Var x = g.concat_rows(parts);
  const nn::Matrix mask = memory_mask(regions, p, p + s);
  for (const auto& layer : encoder_) {
    const nn::Var h = norm(g, x, layer.ln1);
    x = g.add(x, attend(g, h, h, layer.self, mask));
    x = g.add(x, feed_forward(g, norm(g, x, layer.ln2), layer.ffn));
  }
  return norm(g, x, enc_final_);
}

nn::Var Speaker::decode(nn::Graph& g, nn::Var memory, const RegionSlots& regions, int prompt_length,
                        std::span<const int> input_ids) const {
  const int t = static_cast<int>(input_ids.size());
  if (t < 1 || t > config_.max_expression_length + 1) throw std::invalid_argument("decode: bad input length");
  std::vector<int> positions(static_cast<std::size_t>(t));
  std::iota(positions.begin(), positions.end(), 0);
  nn::Var y = g.add(g.gather_rows(g.param(tok_emb_), input_ids), g.gather_rows(g.param(dec_pos_), positions));

  nn::Matrix causal = nn::Matrix::Zero(t, t);
  for (int i = 0; i < t; ++i)
    for (int j = i + 1; j < t; ++j) causal(i, j) = kNegInf;
  const nn::Matrix cross = memory_mask(regions, prompt_length, t);

  for (const auto& layer : decoder_) {
    const nn::Var h = norm(g, y, layer.ln1);
    y = g.add(y, attend(g, h, h, layer.self, causal));
    y = g.add(y, attend(g, norm(g, y, layer.ln2), memory, layer.cross, cross));
    y = g.add(y, feed_forward(g, norm(g, y, layer.ln3), layer.ffn));
  }
  const nn::Var logits = linear(g, norm(g, y, dec_final_), out_proj_);
  nn::Matrix no_empty = nn::Matrix::Zero(t, vocab_.output_size());
  no_empty(0, 0) = kNegInf;
  return g.add(logits, g.constant(std::move(no_empty)));
}

nn::Var Speaker::sequence_log_prob(nn::Graph& g, std::span<const int> prompt, const RegionSlots& regions,
                                   const Expression& expr, bool include_eos) const {
  if (expr.empty()) throw std::invalid_argument("expression must have at least one token");
  if (static_cast<int>(expr.size()) > config_.max_expression_length)
    throw std::invalid_argument("expression longer than max_expression_length");
  const std::vector<int> ids = vocab_.encode_expression(expr);
  // inputs = [bos, y1..yT], targets = [y1..yT, eos]
  std::vector<int> inputs{vocab_.bos()};
  std::vector<int> targets;
  for (const int id : ids) {
    inputs.push_back(id);
    targets.push_back(vocab_.token_to_output(id));
  }
  if (include_eos)
    targets.push_back(0);
  else
    inputs.pop_back();

  const nn::Var memory = encode(g, prompt, regions);
  const nn::Var logits = decode(g, memory, regions, static_cast<int>(prompt.size()), inputs);
  return g.log_prob_sum(logits, targets);
}

nn::Matrix Speaker::encode(std::span<const int> prompt, const RegionSlots& regions) const {
  nn::Graph g(params_, false);
  return g.value(encode(g, prompt, regions));
}

double Speaker::sequence_log_prob(std::span<const int> prompt, const RegionSlots& regions,
                                  const Expression& expr) const {
  nn::Graph g(params_, false);
  return g.scalar(sequence_log_prob(g, prompt, regions, expr));
}

std::vector<double> Speaker::next_token_log_probs(std::span<const int> prompt, const RegionSlots& regions,
                                                  const Expression& prefix) const {
  if (static_cast<int>(prefix.size()) > config_.max_expression_length)
    throw std::invalid_argument("prefix longer than max_expression_length");
  nn::Graph g(params_, false);
  const nn::Var memory = encode(g, prompt, regions);
  std::vector<int> inputs{vocab_.bos()};
  for (const int id : vocab_.encode_expression(prefix)) inputs.push_back(id);
  const nn::Var logits = decode(g, memory, regions, static_cast<int>(prompt.size()), inputs);
  return log_softmax(g.value(logits), static_cast<Eigen::Index>(inputs.size()) - 1);
}

std::vector<Generation> Speaker::generate(std::span<const int> prompt, const RegionSlots& regions,
                                          const DecodeMode& mode) const {
  if (mode.kind == DecodeMode::Kind::kBeam) {
    if (mode.beam_width < 1) throw std::invalid_argument("beam width must be >= 1");
    return beam_search(prompt, regions, mode.beam_width);
  }
  if (mode.kind == DecodeMode::Kind::kSample && !(mode.temperature > 0.0))
    throw std::invalid_argument("sampling temperature must be positive");

  nn::Graph g(params_, false);
  const nn::Var memory = encode(g, prompt, regions);
  const int p = static_cast<int>(prompt.size());
  Rng rng(mode.seed);
  Generation out;
  std::vector<int> inputs{vocab_.bos()};
  out.truncated = true;
  for (int step = 0; step < config_.max_expression_length; ++step) {
    const nn::Var logits = decode(g, memory, regions, p, inputs);
    const std::vector<double> lp = log_softmax(g.value(logits), step);
    std::size_t choice = 0;
    if (mode.kind == DecodeMode::Kind::kGreedy) {
      choice = argmax(lp);
    } else {
      std::vector<double> w(lp.size());
      const double mx = *std::max_element(lp.begin(), lp.end());
      double total = 0.0;
      for (std::size_t j = 0; j < lp.size(); ++j) total += w[j] = std::exp((lp[j] - mx) / mode.temperature);
      double u = rng.uniform() * total;
      choice = lp.size() - 1;
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (u < w[j]) {
          choice = j;
          break;
        }
        u -= w[j];
      }
    }
    out.log_prob += lp[choice];
    if (choice == 0) {
      out.truncated = false;
      break;
    }
    const int token = vocab_.output_to_token(static_cast<int>(choice));
    out.expression.push_back(vocab_.token(token));
    inputs.push_back(token);
  }
  return {out};
}

std::vector<Generation> Speaker::beam_search(std::span<const int> prompt, const RegionSlots& regions,
                                             int width) const {
  struct Hyp {
    std::vector<int> inputs;
    double score = 0.0;
  };
  struct Candidate {
    double score;
    std::size_t hyp;
    std::size_t token;
  };

  nn::Graph g(params_, false);
  const nn::Var memory = encode(g, prompt, regions);
  const int p = static_cast<int>(prompt.size());

  auto to_generation = [this](const Hyp& h, bool truncated) {
    Generation gen;
    for (std::size_t i = 1; i < h.inputs.size(); ++i) gen.expression.push_back(vocab_.token(h.inputs[i]));
    gen.log_prob = h.score;
    gen.truncated = truncated;
    return gen;
  };

  std::vector<Hyp> alive{{{vocab_.bos()}, 0.0}};
  std::vector<Generation> finished;
  const auto w = static_cast<std::size_t>(width);
  for (int step = 0; step < config_.max_expression_length && !alive.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const nn::Var logits = decode(g, memory, regions, p, alive[h].inputs);
      const std::vector<double> lp = log_softmax(g.value(logits), step);
      for (std::size_t j = 0; j < lp.size(); ++j) candidates.push_back({alive[h].score + lp[j], h, j});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<Hyp> next;
    for (std::size_t c = 0; c < std::min(w, candidates.size()); ++c) {
      const Candidate& cand = candidates[c];
      Hyp h = alive[cand.hyp];
      h.score = cand.score;
      if (cand.token == 0) {
        finished.push_back(to_generation(h, false));
      } else {
        h.inputs.push_back(vocab_.output_to_token(static_cast<int>(cand.token)));
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);
    if (finished.size() >= w && !alive.empty()) {
      std::vector<double> scores;
      for (const auto& f : finished) scores.push_back(f.log_prob);
      std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(w - 1), scores.end(),
                       std::greater<>());
      const double worst_kept = scores[w - 1];
      const double best_alive =
          std::max_element(alive.begin(), alive.end(), [](const Hyp& a, const Hyp& b) { return a.score < b.score; })
              ->score;
      // Scores only decrease with length, so no alive hypothesis can overtake.
      if (best_alive <= worst_kept) alive.clear();
    }
  }
  for (const auto& h : alive) finished.push_back(to_generation(h, true));
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Generation& a, const Generation& b) { return a.log_prob > b.log_prob; });
  if (finished.size() > w) finished.resize(w);
  return finished;
}

Generation Speaker::generate_one(std::span<const int> prompt, const RegionSlots& regions,
                                 const DecodeMode& mode) const {
  auto out = generate(prompt, regions, mode);
  if (out.empty()) throw std::logic_error("decoder produced no hypotheses");
  return std::move(out.front());
}

}  // namespace ireg
