#pragma once

// Word-level predictors and regression design assembly.
//
// Each design row holds the response for w_t plus, for each regressor word
// w_t, w_{t-1}, w_{t-2}, the requested subset of surprisal (bits), contextual
// entropy (bits), log2 frequency per billion and length in characters.

#include <cmath>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "rtpower/corpus.hpp"
#include "rtpower/errors.hpp"
#include "rtpower/ngram.hpp"

namespace rtpower {

struct TokenScore {
  std::string language;
  int text_id = 0;
  int word_index = 0;
  std::string word;
  int n_subwords = 1;
  double surprisal_bits = 0.0;
  double entropy_bits = 0.0;  // NaN when the producer did not compute it
  std::string model_id;
  ContextMode context_mode = ContextMode::long_context;
};

// Sum of the subword surprisals. Throws DataError when `subword_bits` is
// empty or holds a negative value.
double word_surprisal(std::span<const double> subword_bits);

// Shannon entropy in bits, 0 log 0 := 0. Throws DataError when the vector is
// not a distribution within `tolerance`.
template <typename Derived>
double word_entropy(const Eigen::DenseBase<Derived>& p, double tolerance = 1e-6) {
  using std::log2;
  double total = 0.0;
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = static_cast<double>(p.derived().coeff(i));
    if (!(pi >= 0.0)) throw DataError("entropy: negative or NaN probability");
    total += pi;
    if (pi > 0.0) h -= pi * log2(pi);
  }
  if (std::abs(total - 1.0) > tolerance) {
    throw DataError("entropy: probabilities sum to " + std::to_string(total) + ", not 1");
  }
  return h;
}

struct FrequencyTable {
  std::string language;
  // Lowercased word -> occurrences per billion tokens.
  std::unordered_map<std::string, double> per_billion;
  double floor_per_billion = 1.0;
};

// Loads a (word, per_billion) TSV; keys are lowercased, duplicates summed.
FrequencyTable read_frequency_table(std::istream& in, const std::string& source, const std::string& language = "");
FrequencyTable read_frequency_table_file(const std::string& path, const std::string& language = "");
void write_frequency_table(std::ostream& out, const FrequencyTable& table);
// Non-canonical helper: relative frequencies of a tokenized corpus.
FrequencyTable frequency_from_corpus(std::span<const Sentence> corpus, const std::string& language = "");

// log2 of the per-billion frequency. Lookup is lowercased, retried with edge
// punctuation stripped; OOV words get the floor (log2 1 = 0 by default).
double log_frequency(const FrequencyTable& table, std::string_view word);

void write_token_scores(std::ostream& out, std::span<const TokenScore> scores, const std::string& comment = "");
std::vector<TokenScore> read_token_scores(std::istream& in, const std::string& source);
std::vector<TokenScore> read_token_scores_file(const std::string& path);

// Scores every text of `words` (grouped by language and text, in word order).
std::vector<TokenScore> score_words(const NgramModel& model, std::span<const WordRecord> words,
                                    ContextMode mode, const std::string& model_id);

enum class PredictorKind { surprisal, entropy, frequency, length };
std::string to_string(PredictorKind kind);
PredictorKind parse_predictor(std::string_view name);

enum class SpilloverPolicy { drop, zero };
SpilloverPolicy parse_spillover_policy(std::string_view name);

inline constexpr int kRegressorWords = 3;  // w_t, w_{t-1}, w_{t-2}

// Column name for `kind` of the word `lag` positions back: surprisal_t,
// surprisal_t1, surprisal_t2, ...
std::string column_name(PredictorKind kind, int lag);

struct RowKey {
  std::string language;
  int text_id = 0;
  int word_index = 0;
};

struct Design {
  std::vector<std::string> columns;
  Eigen::MatrixXd X;  // rows x columns, no intercept
  Eigen::VectorXd y;  // response in ms
  std::vector<RowKey> keys;
  // Free-form provenance (measure, model_id, context_mode, ...).
  std::map<std::string, std::string> metadata;

  Eigen::Index rows() const { return y.size(); }
  bool has_column(std::string_view name) const;
  Eigen::Index column(std::string_view name) const;  // throws ValidationError
  std::vector<std::string> languages() const;  // distinct, sorted
  Design subset(std::span<const Eigen::Index> rows) const;
};

struct DesignOptions {
  Measure measure = Measure::gaze_duration;
  std::set<PredictorKind> predictors{PredictorKind::surprisal, PredictorKind::entropy, PredictorKind::frequency,
                                     PredictorKind::length};
  SpilloverPolicy spillover = SpilloverPolicy::drop;
  // Drop the first and last word of every text.
  bool exclude_text_edges = false;
  // Select scores; empty model_id accepts any single model.
  std::string model_id;
  ContextMode context_mode = ContextMode::long_context;
};

// One row per word whose two preceding words exist in the same text (drop
// policy), or per word with zero-filled missing spillover (zero policy).
// Throws DataError listing words without a TokenScore when surprisal or
// entropy is requested.
Design build_design(std::span<const WordRecord> words, std::span<const TokenScore> scores,
                    const FrequencyTable& frequencies, const DesignOptions& options);

void write_design(std::ostream& out, const Design& design, const std::string& comment = "");
Design read_design(std::istream& in, const std::string& source);
Design read_design_file(const std::string& path);

// Row-wise concatenation; all designs must share the same columns.
Design concat_designs(std::span<const Design> designs);

}  // namespace rtpower
