#include "ireg/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace ireg {

double iou(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("iou: degenerate box");
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

namespace {

using NgramCounts = std::map<std::string, int>;

// counts[n-1] holds n-gram counts.
std::array<NgramCounts, CorpusStats::kMaxN> count_ngrams(const Expression& sentence) {
  std::array<NgramCounts, CorpusStats::kMaxN> counts;
  for (int n = 1; n <= CorpusStats::kMaxN; ++n) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= sentence.size(); ++i) {
      std::string key = sentence[i];
      for (int j = 1; j < n; ++j) key += ' ' + sentence[i + static_cast<std::size_t>(j)];
      ++counts[static_cast<std::size_t>(n - 1)][key];
    }
  }
  return counts;
}

struct TfIdf {
  std::array<std::map<std::string, double>, CorpusStats::kMaxN> vec;
  std::array<double, CorpusStats::kMaxN> norm{};
  std::size_t length = 0;
};

TfIdf tf_idf(const Expression& sentence, const CorpusStats& stats) {
  TfIdf out;
  out.length = sentence.size();
  const double log_n = std::log(static_cast<double>(stats.corpus_size()));
  const auto counts = count_ngrams(sentence);
  for (std::size_t n = 0; n < counts.size(); ++n) {
    double sq = 0.0;
    for (const auto& [gram, tf] : counts[n]) {
      const double df = std::max(1.0, static_cast<double>(stats.document_frequency(gram)));
      const double w = tf * (log_n - std::log(df));
      out.vec[n][gram] = w;
      sq += w * w;
    }
    out.norm[n] = std::sqrt(sq);
  }
  return out;
}

double pair_similarity(const TfIdf& hyp, const TfIdf& ref) {
  constexpr double kSigma = 6.0;
  const double delta = static_cast<double>(hyp.length) - static_cast<double>(ref.length);
  const double penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
  double sum = 0.0;
  int orders = 0;
  for (std::size_t n = 0; n < hyp.vec.size(); ++n) {
    const std::size_t order = n + 1;
    if (hyp.length < order && ref.length < order) continue;
    ++orders;
    double val = 0.0;
    for (const auto& [gram, hw] : hyp.vec[n]) {
      const auto it = ref.vec[n].find(gram);
      if (it != ref.vec[n].end()) val += std::min(hw, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val /= hyp.norm[n] * ref.norm[n];
    sum += val * penalty;
  }
  return orders ? sum / orders : 0.0;
}

}  // namespace

CorpusStats::CorpusStats(std::span<const std::vector<Expression>> reference_sets)
    : corpus_size_(static_cast<int>(reference_sets.size())) {
  for (const auto& refs : reference_sets) {
    std::set<std::string> seen;
    for (const auto& r : refs) {
      for (const auto& counts : count_ngrams(r))
        for (const auto& entry : counts) seen.insert(entry.first);
    }
    for (const auto& g : seen) ++df_[g];
  }
}

CorpusStats::CorpusStats(std::map<std::string, int> document_frequency, int corpus_size)
    : df_(std::move(document_frequency)), corpus_size_(corpus_size) {
  if (corpus_size_ < 0) throw std::invalid_argument("negative corpus size");
  for (const auto& [gram, f] : df_)
    if (f < 1) throw std::invalid_argument("document frequency below 1 for '" + gram + "'");
}

int CorpusStats::document_frequency(const std::string& ngram_key) const {
  const auto it = df_.find(ngram_key);
  return it == df_.end() ? 0 : it->second;
}

double cider(const Expression& candidate, std::span<const Expression> references, const CorpusStats& stats) {
  if (stats.empty()) throw ConfigError("cider: corpus statistics are empty");
  if (references.empty()) throw std::invalid_argument("cider: references must be nonempty");
  if (candidate.empty()) return 0.0;
  const TfIdf hyp = tf_idf(candidate, stats);
  double total = 0.0;
  for (const auto& ref : references) total += pair_similarity(hyp, tf_idf(ref, stats));
  return 10.0 * total / static_cast<double>(references.size());
}

RewardBreakdown combined_reward(const BBox& gt, const BBox& pred, const Expression& gt_text,
                                const Expression& gen_text, double beta, const CorpusStats& stats) {
  return combined_reward(gt, pred, std::span<const Expression>(&gt_text, 1), gen_text, beta, stats);
}

RewardBreakdown combined_reward(const BBox& gt, const BBox& pred, std::span<const Expression> references,
                                const Expression& gen_text, double beta, const CorpusStats& stats) {
  if (beta < 0.0) throw std::invalid_argument("combined_reward: beta must be >= 0");
  RewardBreakdown r;
  r.rec_reward = iou(gt, pred);
  r.cider = cider(gen_text, references, stats);
  r.beta = beta;
  r.total = r.rec_reward + beta * r.cider;
  return r;
}

double rec_accuracy(std::span<const std::pair<BBox, BBox>> pairs, double threshold) {
  if (pairs.empty()) throw std::invalid_argument("rec_accuracy: empty pair list");
  const auto hits = std::count_if(pairs.begin(), pairs.end(),
                                  [threshold](const auto& p) { return iou(p.first, p.second) > threshold; });
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double human_eval_accuracy(std::span<const bool> judgments) {
  if (judgments.empty()) throw std::invalid_argument("human_eval_accuracy: no judgments");
  const auto correct = std::count(judgments.begin(), judgments.end(), true);
  return static_cast<double>(correct) / static_cast<double>(judgments.size());
}

double human_eval_accuracy(const std::vector<bool>& judgments) {
  if (judgments.empty()) throw std::invalid_argument("human_eval_accuracy: no judgments");
  const auto correct = std::count(judgments.begin(), judgments.end(), true);
  return static_cast<double>(correct) / static_cast<double>(judgments.size());
}

}  // namespace ireg
