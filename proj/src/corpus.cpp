#include "rtpower/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

#include "rtpower/errors.hpp"
#include "rtpower/io.hpp"

namespace rtpower {

std::string to_string(Measure measure) {
  switch (measure) {
    case Measure::first_fixation: return "first_fixation";
    case Measure::gaze_duration: return "gaze_duration";
    case Measure::total_fixation: return "total_fixation";
  }
  return "unknown";
}

Measure parse_measure(std::string_view name) {
  if (name == "first_fixation" || name == "ff") return Measure::first_fixation;
  if (name == "gaze_duration" || name == "gd") return Measure::gaze_duration;
  if (name == "total_fixation" || name == "tf") return Measure::total_fixation;
  throw ValidationError("unknown measure '" + std::string(name) + "'");
}

double measure_value(const MeasureTriple& triple, Measure measure) {
  switch (measure) {
    case Measure::first_fixation: return triple.first_fixation;
    case Measure::gaze_duration: return triple.gaze_duration;
    case Measure::total_fixation: return triple.total_fixation;
  }
  return 0.0;
}

MeasureTriple compute_measures(std::span<const Fixation> fixations) {
  MeasureTriple out;
  for (const auto& fix : fixations) {
    if (fix.is_presence_marker()) continue;
    if (!(fix.duration_ms >= 0.0)) {
      throw DataError("negative fixation duration " + format_double(fix.duration_ms) +
                      " for participant '" + fix.participant + "', text " +
                      std::to_string(fix.text_id) + ", word " + std::to_string(fix.word_index) +
                      " ('" + fix.word + "')");
    }
    out.total_fixation += fix.duration_ms;
    if (fix.pass == 1) {
      out.gaze_duration += fix.duration_ms;
      if (fix.order_in_pass == 1) out.first_fixation = fix.duration_ms;
    }
  }
  return out;
}

std::optional<MeasureTriple> mean_measures(std::span<const MeasureTriple> triples) {
  if (triples.empty()) return std::nullopt;
  MeasureTriple sum;
  for (const auto& t : triples) {
    sum.first_fixation += t.first_fixation;
    sum.gaze_duration += t.gaze_duration;
    sum.total_fixation += t.total_fixation;
  }
  const auto n = static_cast<double>(triples.size());
  return MeasureTriple{sum.first_fixation / n, sum.gaze_duration / n, sum.total_fixation / n};
}

std::optional<WordRecord> average_across_participants(const std::string& language, int text_id,
                                                      int word_index, const std::string& word,
                                                      std::span<const MeasureTriple> triples) {
  const auto mean = mean_measures(triples);
  if (!mean) return std::nullopt;
  WordRecord record;
  record.language = language;
  record.text_id = text_id;
  record.word_index = word_index;
  record.word = word;
  record.measures = *mean;
  record.n_participants = static_cast<int>(triples.size());
  record.length = static_cast<int>(utf8_length(word));
  return record;
}

ColumnMap ColumnMap::meco() {
  ColumnMap map;
  map.participant = "uniform_id";
  map.text_id = "trialid";
  map.word_index = "ianum";
  map.word = "ia";
  map.pass = "pass";
  map.order_in_pass = "fixid_in_pass";
  map.duration = "dur";
  map.index_base = 1;
  return map;
}

std::vector<Fixation> read_fixations(std::istream& in, const std::string& source,
                                     const std::string& language, const ColumnMap& columns) {
  const auto table = read_tsv(in, source);
  const auto c_part = table.column(columns.participant);
  const auto c_text = table.column(columns.text_id);
  const auto c_index = table.column(columns.word_index);
  const auto c_word = table.column(columns.word);
  const auto c_pass = table.column(columns.pass);
  const auto c_order = table.column(columns.order_in_pass);
  const auto c_dur = table.column(columns.duration);

  std::vector<Fixation> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    Fixation fix;
    fix.participant = row[c_part];
    fix.language = language;
    fix.text_id = static_cast<int>(parse_int(row[c_text], columns.text_id));
    fix.word_index = static_cast<int>(parse_int(row[c_index], columns.word_index)) - columns.index_base;
    fix.word = row[c_word];
    const auto& dur = row[c_dur];
    if (dur.empty() || dur == "NA" || dur == "nan") {
      fix.pass = 0;
      fix.order_in_pass = 0;
    } else {
      fix.duration_ms = parse_double(dur, columns.duration);
      fix.pass = static_cast<int>(parse_int(row[c_pass], columns.pass));
      fix.order_in_pass = fix.pass == 0 ? 0 : static_cast<int>(parse_int(row[c_order], columns.order_in_pass));
    }
    if (fix.word_index < 0) throw DataError(source + ": negative word index after index_base");
    out.push_back(std::move(fix));
  }
  return out;
}

IngestResult ingest(std::span<const Fixation> fixations) {
  using TextKey = std::tuple<std::string, int>;
  struct WordSlot {
    std::string surface;
    std::map<std::string, std::vector<Fixation>> by_participant;
  };
  struct TextSlot {
    std::set<std::string> participants;
    std::map<int, WordSlot> words;
  };

  IngestResult result;
  std::map<TextKey, TextSlot> texts;
  for (const auto& fix : fixations) {
    auto& text = texts[{fix.language, fix.text_id}];
    text.participants.insert(fix.participant);
    auto [it, inserted] = text.words.try_emplace(fix.word_index);
    auto& slot = it->second;
    if (inserted) {
      slot.surface = fix.word;
    } else if (slot.surface != fix.word) {
      result.warnings.push_back(fix.language + " text " + std::to_string(fix.text_id) + " word " +
                                std::to_string(fix.word_index) + ": surface '" + fix.word +
                                "' differs from '" + slot.surface + "', keeping the first");
    }
    slot.by_participant[fix.participant].push_back(fix);
  }

  for (const auto& [key, text] : texts) {
    const auto& [language, text_id] = key;
    for (const auto& [word_index, slot] : text.words) {
      if (slot.surface.empty()) {
        throw DataError(language + " text " + std::to_string(text_id) + " word " +
                        std::to_string(word_index) + ": empty surface form");
      }
      std::vector<MeasureTriple> triples;
      triples.reserve(text.participants.size());
      for (const auto& participant : text.participants) {
        const auto found = slot.by_participant.find(participant);
        if (found == slot.by_participant.end()) {
          triples.push_back({});
        } else {
          triples.push_back(compute_measures(found->second));
        }
      }
      auto record = average_across_participants(language, text_id, word_index, slot.surface, triples);
      if (!record) {
        result.warnings.push_back(language + " text " + std::to_string(text_id) + " word " +
                                  std::to_string(word_index) + ": no participants, omitted");
        continue;
      }
      result.words.push_back(std::move(*record));
    }
  }
  return result;
}

void write_words(std::ostream& out, std::span<const WordRecord> words, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  write_tsv_row(out, {"language", "text_id", "word_index", "word", "length", "ff_ms", "gd_ms", "tf_ms",
                      "n_participants"});
  for (const auto& w : words) {
    write_tsv_row(out, {w.language, std::to_string(w.text_id), std::to_string(w.word_index), w.word,
                        std::to_string(w.length), format_double(w.measures.first_fixation),
                        format_double(w.measures.gaze_duration), format_double(w.measures.total_fixation),
                        std::to_string(w.n_participants)});
  }
}

std::vector<WordRecord> read_words(std::istream& in, const std::string& source) {
  const auto table = read_tsv(in, source);
  const auto c_lang = table.column("language");
  const auto c_text = table.column("text_id");
  const auto c_index = table.column("word_index");
  const auto c_word = table.column("word");
  const auto c_len = table.column("length");
  const auto c_ff = table.column("ff_ms");
  const auto c_gd = table.column("gd_ms");
  const auto c_tf = table.column("tf_ms");
  const auto c_n = table.column("n_participants");
  std::vector<WordRecord> words;
  words.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    WordRecord w;
    w.language = row[c_lang];
    w.text_id = static_cast<int>(parse_int(row[c_text], "text_id"));
    w.word_index = static_cast<int>(parse_int(row[c_index], "word_index"));
    w.word = row[c_word];
    w.length = static_cast<int>(parse_int(row[c_len], "length"));
    w.measures.first_fixation = parse_double(row[c_ff], "ff_ms");
    w.measures.gaze_duration = parse_double(row[c_gd], "gd_ms");
    w.measures.total_fixation = parse_double(row[c_tf], "tf_ms");
    w.n_participants = static_cast<int>(parse_int(row[c_n], "n_participants"));
    words.push_back(std::move(w));
  }
  return words;
}

std::vector<WordRecord> read_words_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_words(in, path);
}

}  // namespace rtpower
