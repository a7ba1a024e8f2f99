#pragma once

// Interpolated modified Kneser-Ney n-gram language model over whitespace
// word tokens.
//
// Conventions:
//  - every sentence is padded with a single <s> on the left and </s> on the
//    right; <s> is context only and never predicted.
//  - the predictive vocabulary is ids [0, V): 0 = </s>, 1 = <unk>, then the
//    training words in lexicographic byte order.
//  - the highest order and n-grams starting with <s> use raw counts; other
//    lower orders use continuation counts (distinct left extensions).
//  - three discounts per order (counts 1, 2, >=3) from count-of-counts,
//    all set to 0.75 when count-of-counts are degenerate.
//  - recursion bottoms out in the uniform distribution over V.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace rtpower {

inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kUnk = "<unk>";

using TokenId = std::uint32_t;
using Sentence = std::vector<std::string>;

class NgramModel {
 public:
  static constexpr TokenId kEosId = 0;
  static constexpr TokenId kUnkId = 1;

  // Throws ValidationError on an empty corpus or order < 1.
  static NgramModel train(std::span<const Sentence> corpus, int order = 5, int min_count = 1);

  int order() const { return order_; }
  int min_count() const { return min_count_; }
  // Size of the predictive vocabulary (excludes <s>).
  std::size_t vocab_size() const { return vocabulary_.size(); }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  // Discounts (D1, D2, D3+) for n-grams of length `level` (1-based).
  const std::array<double, 3>& discounts(int level) const { return levels_.at(level - 1).discounts; }

  // Maps OOV tokens to <unk>; "<s>" maps to bos_id().
  TokenId id(std::string_view token) const;
  TokenId bos_id() const { return static_cast<TokenId>(vocabulary_.size()); }
  std::vector<TokenId> ids(std::span<const std::string> tokens) const;

  // Distribution over the V predictive tokens. Only the tokens after the last
  // <s> and at most order-1 of them are used.
  Eigen::VectorXd next_distribution(std::span<const TokenId> context) const;
  Eigen::VectorXd next_distribution(std::span<const std::string> context) const;
  double probability(std::span<const TokenId> context, TokenId token) const;

  // 2^(mean bits per token); each sentence contributes its tokens and </s>.
  double perplexity(std::span<const Sentence> heldout) const;

  // Tab-separated dump, see README for the layout. Loading reproduces all
  // probabilities bit-for-bit.
  void save(std::ostream& out) const;
  static NgramModel load(std::istream& in, const std::string& source = "<stream>");

  // Raw and adjusted (continuation) count of an n-gram, 0 when unseen.
  std::uint64_t raw_count(std::span<const TokenId> ngram) const;
  std::uint64_t adjusted_count(std::span<const TokenId> ngram) const;

 private:
  struct ContextStats {
    double total = 0.0;  // sum of adjusted counts of all successors
    std::array<std::uint64_t, 3> n_by_count{};  // successors with adjusted count 1, 2, >=3
    std::vector<std::pair<TokenId, std::uint64_t>> successors;  // sorted by id
  };
  struct NgramCounts {
    std::uint64_t raw = 0;
    std::uint64_t adjusted = 0;
  };
  struct Level {
    std::array<double, 3> discounts{0.75, 0.75, 0.75};
    std::unordered_map<std::string, NgramCounts> ngrams;    // key: packed ids of the n-gram
    std::unordered_map<std::string, ContextStats> contexts;  // key: packed ids of the history
  };

  static std::string pack(std::span<const TokenId> ids);
  void build_contexts();
  double discount(int level, std::uint64_t count) const;
  std::span<const TokenId> trim_context(std::span<const TokenId> context) const;
  std::vector<TokenId> to_ids(std::span<const std::string> tokens) const;

  int order_ = 1;
  int min_count_ = 1;
  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<Level> levels_;
};

// Sentence-final punctuation test used to reset context in short mode.
bool ends_sentence(std::string_view word);

enum class ContextMode { short_context, long_context };
std::string to_string(ContextMode mode);
ContextMode parse_context_mode(std::string_view name);

struct WordScore {
  double surprisal_bits = 0.0;
  double entropy_bits = 0.0;
};

// Scores one text word by word. Long mode conditions on all preceding words
// of the text; short mode restarts from <s> after sentence-final punctuation.
std::vector<WordScore> score_text(const NgramModel& model, std::span<const std::string> words,
                                  ContextMode mode);

// One sentence per non-empty line, whitespace tokens.
std::vector<Sentence> read_corpus(std::istream& in);
std::vector<Sentence> read_corpus_file(const std::string& path);

}  // namespace rtpower
