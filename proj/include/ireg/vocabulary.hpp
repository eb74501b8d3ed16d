#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ireg/types.hpp"

namespace ireg {

/// Token inventory shared by prompts, expressions and region sentinels.
///
/// Layout: <pad> <bos> <eos>, the instruction words, the expression words,
/// then <vis_0> .. <vis_{n_regions+1}>. Slot n_regions addresses the target
/// region and slot n_regions+1 the wrongly predicted region in refine prompts.
/// Sentinels are whole tokens and never split by tokenize().
class Vocabulary {
 public:
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kBos = "<bos>";
  static constexpr std::string_view kEos = "<eos>";

  Vocabulary() = default;
  Vocabulary(std::vector<std::string> expression_words, int n_regions);
  /// Rebuilds from a stored token list; throws if it is not a valid layout.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens, int n_regions);

  int size() const { return static_cast<int>(tokens_.size()); }
  int n_regions() const { return n_regions_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::string>& expression_words() const { return words_; }

  int id(const std::string& token) const;
  std::optional<int> find(const std::string& token) const;
  const std::string& token(int id) const;
  int pad() const { return 0; }
  int bos() const { return 1; }
  int eos() const { return 2; }
  int sentinel(int slot) const;
  static std::string sentinel_token(int slot);

  /// Splits on whitespace; every piece must be a known token.
  std::vector<int> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const int> ids) const;
  std::vector<int> encode_expression(const Expression& expr) const;

  /// Decoder output space: <eos> followed by the expression words.
  int output_size() const { return static_cast<int>(words_.size()) + 1; }
  int output_to_token(int output_index) const;
  /// -1 when the token cannot be generated.
  int token_to_output(int token_id) const;

  /// FNV-1a over the token list; stable across runs and platforms.
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
  int n_regions_ = 0;
  int first_word_ = 0;
};

const std::vector<std::string>& instruction_words();

}  // namespace ireg
