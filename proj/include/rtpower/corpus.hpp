#pragma once

// Eye-tracking ingest: raw fixations -> per-word reading-time measures
// averaged over participants.
//
// Three measures per word and participant:
//   first fixation  duration of the first fixation of the first pass
//   gaze duration   sum of first-pass fixations
//   total fixation  sum of all fixations, regressive passes included
// A participant who never fixated a word contributes zeros to all three.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rtpower {

struct Fixation {
  std::string participant;
  std::string language;
  int text_id = 0;
  int word_index = 0;
  std::string word;
  double duration_ms = 0.0;
  // 1 = first pass. 0 marks a row that only records the word's presence
  // (displayed, never fixated by this participant).
  int pass = 1;
  int order_in_pass = 1;

  bool is_presence_marker() const { return pass == 0; }
};

struct MeasureTriple {
  double first_fixation = 0.0;
  double gaze_duration = 0.0;
  double total_fixation = 0.0;

  friend bool operator==(const MeasureTriple&, const MeasureTriple&) = default;
};

enum class Measure { first_fixation, gaze_duration, total_fixation };

std::string to_string(Measure measure);
Measure parse_measure(std::string_view name);
double measure_value(const MeasureTriple& triple, Measure measure);

struct WordRecord {
  std::string language;
  int text_id = 0;
  int word_index = 0;
  std::string word;
  // Averaged over participants, in ms.
  MeasureTriple measures;
  int n_participants = 0;
  int length = 0;  // code points in `word`
};

// `fixations` must all belong to one participant and one word. Presence
// markers are ignored. Throws DataError on a negative duration.
MeasureTriple compute_measures(std::span<const Fixation> fixations);

// Arithmetic mean of each measure. Returns nullopt for an empty set.
std::optional<MeasureTriple> mean_measures(std::span<const MeasureTriple> triples);

// nullopt (the caller warns and omits the word) when `triples` is empty.
std::optional<WordRecord> average_across_participants(const std::string& language, int text_id,
                                                      int word_index, const std::string& word,
                                                      std::span<const MeasureTriple> triples);

// Maps the canonical fixation fields onto source column names.
struct ColumnMap {
  std::string participant = "participant";
  std::string text_id = "text_id";
  std::string word_index = "word_index";
  std::string word = "word";
  std::string pass = "pass";
  std::string order_in_pass = "order_in_pass";
  std::string duration = "duration_ms";
  // Subtracted from source word indices so that records are 0-based.
  int index_base = 0;

  static ColumnMap canonical() { return {}; }
  // Column names of the MECO fixation-level release.
  static ColumnMap meco();
};

std::vector<Fixation> read_fixations(std::istream& in, const std::string& source,
                                     const std::string& language, const ColumnMap& columns = {});

struct IngestResult {
  std::vector<WordRecord> words;
  std::vector<std::string> warnings;
};

// Groups by (text, word, participant). Every participant seen anywhere in a
// text contributes a triple for every word of that text. Output is sorted by
// (language, text_id, word_index).
IngestResult ingest(std::span<const Fixation> fixations);

void write_words(std::ostream& out, std::span<const WordRecord> words, const std::string& comment = "");
std::vector<WordRecord> read_words(std::istream& in, const std::string& source);
std::vector<WordRecord> read_words_file(const std::string& path);

}  // namespace rtpower
