#include "ireg/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace ireg {

const std::vector<std::string>& instruction_words() {
  static const std::vector<std::string> words{"caption", "region:", "incorrectly", "located",
                                              "as:",     "Please",  "refine",      "it."};
  return words;
}

Vocabulary::Vocabulary(std::vector<std::string> expression_words, int n_regions)
    : words_(std::move(expression_words)), n_regions_(n_regions) {
  if (n_regions < 1) throw std::invalid_argument("vocabulary: n_regions must be positive");
  if (words_.empty()) throw std::invalid_argument("vocabulary: no expression words");
  tokens_ = {std::string(kPad), std::string(kBos), std::string(kEos)};
  for (const auto& w : instruction_words()) tokens_.push_back(w);
  first_word_ = static_cast<int>(tokens_.size());
  for (const auto& w : words_) tokens_.push_back(w);
  for (int s = 0; s <= n_regions + 1; ++s) tokens_.push_back(sentinel_token(s));
  for (int i = 0; i < size(); ++i) {
    const auto& t = tokens_[static_cast<std::size_t>(i)];
    if (t.empty() || std::any_of(t.begin(), t.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
      throw std::invalid_argument("vocabulary: invalid token '" + t + "'");
    if (!ids_.emplace(t, i).second) throw std::invalid_argument("vocabulary: duplicate token '" + t + "'");
  }
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens, int n_regions) {
  const std::size_t fixed = 3 + instruction_words().size();
  const std::size_t sentinels = static_cast<std::size_t>(n_regions) + 2;
  if (tokens.size() <= fixed + sentinels) throw std::invalid_argument("vocabulary: token list too short");
  std::vector<std::string> words(tokens.begin() + static_cast<std::ptrdiff_t>(fixed),
                                 tokens.end() - static_cast<std::ptrdiff_t>(sentinels));
  Vocabulary v(std::move(words), n_regions);
  if (v.tokens_ != tokens) throw std::invalid_argument("vocabulary: token list does not match the standard layout");
  return v;
}

int Vocabulary::id(const std::string& token) const {
  const auto it = ids_.find(token);
  if (it == ids_.end()) throw std::invalid_argument("token outside vocabulary: '" + token + "'");
  return it->second;
}

std::optional<int> Vocabulary::find(const std::string& token) const {
  const auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::sentinel_token(int slot) { return "<vis_" + std::to_string(slot) + ">"; }

int Vocabulary::sentinel(int slot) const {
  if (slot < 0 || slot > n_regions_ + 1) throw std::out_of_range("sentinel slot out of range");
  return first_word_ + static_cast<int>(words_.size()) + slot;
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> out;
  std::string piece;
  auto flush = [&] {
    if (!piece.empty()) out.push_back(id(piece));
    piece.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)))
      flush();
    else
      piece.push_back(c);
  }
  flush();
  return out;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

std::vector<int> Vocabulary::encode_expression(const Expression& expr) const {
  std::vector<int> out;
  out.reserve(expr.size());
  for (const auto& w : expr) {
    const int t = id(w);
    if (token_to_output(t) < 1) throw std::invalid_argument("token is not an expression word: '" + w + "'");
    out.push_back(t);
  }
  return out;
}

int Vocabulary::output_to_token(int output_index) const {
  if (output_index < 0 || output_index >= output_size()) throw std::out_of_range("output index out of range");
  return output_index == 0 ? eos() : first_word_ + output_index - 1;
}

int Vocabulary::token_to_output(int token_id) const {
  if (token_id == eos()) return 0;
  if (token_id >= first_word_ && token_id < first_word_ + static_cast<int>(words_.size()))
    return token_id - first_word_ + 1;
  return -1;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x0a;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ireg
