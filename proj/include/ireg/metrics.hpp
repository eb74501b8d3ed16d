#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ireg/types.hpp"

namespace ireg {

/// Intersection over union. Throws std::invalid_argument on degenerate boxes.
double iou(const BBox& a, const BBox& b);

/// Document frequencies of 1..4-grams over a corpus of reference sets.
///
/// Each reference set (all expressions for one target) counts once per
/// n-gram, which is the IDF convention of CIDEr-D.
class CorpusStats {
 public:
  static constexpr int kMaxN = 4;

  CorpusStats() = default;
  explicit CorpusStats(std::span<const std::vector<Expression>> reference_sets);
  CorpusStats(std::map<std::string, int> document_frequency, int corpus_size);

  int corpus_size() const { return corpus_size_; }
  bool empty() const { return corpus_size_ == 0; }
  /// 0 for n-grams never seen.
  int document_frequency(const std::string& ngram_key) const;
  const std::map<std::string, int>& frequencies() const { return df_; }

 private:
  std::map<std::string, int> df_;
  int corpus_size_ = 0;
};

/// CIDEr-D: clipped tf-idf cosine per n-gram order with a Gaussian length
/// penalty (sigma 6), averaged over orders and references, times 10.
/// An order contributes only when the candidate or the reference has n-grams
/// of that length, so exact matches score 10 regardless of sentence length.
double cider(const Expression& candidate, std::span<const Expression> references, const CorpusStats& stats);

struct RewardBreakdown {
  double rec_reward = 0.0;
  double cider = 0.0;
  double beta = 0.0;
  double total = 0.0;
};

RewardBreakdown combined_reward(const BBox& gt, const BBox& pred, const Expression& gt_text,
                                const Expression& gen_text, double beta, const CorpusStats& stats);
/// Same, with CIDEr taken against every ground-truth expression of the target.
RewardBreakdown combined_reward(const BBox& gt, const BBox& pred, std::span<const Expression> references,
                                const Expression& gen_text, double beta, const CorpusStats& stats);

/// Fraction of pairs whose IoU is strictly above `threshold`.
double rec_accuracy(std::span<const std::pair<BBox, BBox>> pairs, double threshold = 0.5);

double human_eval_accuracy(std::span<const bool> judgments);
double human_eval_accuracy(const std::vector<bool>& judgments);

}  // namespace ireg
