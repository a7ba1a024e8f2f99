#include "rtpower/predictors.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "rtpower/io.hpp"

namespace rtpower {

double word_surprisal(std::span<const double> subword_bits) {
  if (subword_bits.empty()) throw DataError("word produced no subword units");
  double total = 0.0;
  for (const double bits : subword_bits) {
    if (!(bits >= 0.0)) throw DataError("subword surprisal must be non-negative, got " + format_double(bits));
    total += bits;
  }
  return total;
}

FrequencyTable read_frequency_table(std::istream& in, const std::string& source, const std::string& language) {
  const auto table = read_tsv(in, source);
  const auto c_word = table.column("word");
  const auto c_freq = table.column("per_billion");
  FrequencyTable out;
  out.language = language;
  for (const auto& row : table.rows) {
    const double f = parse_double(row[c_freq], "per_billion");
    if (!(f >= 0.0)) throw DataError(source + ": negative frequency for '" + row[c_word] + "'");
    out.per_billion[utf8_lowercase(row[c_word])] += f;
  }
  return out;
}

FrequencyTable read_frequency_table_file(const std::string& path, const std::string& language) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_frequency_table(in, path, language);
}

void write_frequency_table(std::ostream& out, const FrequencyTable& table) {
  std::vector<std::pair<std::string, double>> rows(table.per_billion.begin(), table.per_billion.end());
  std::sort(rows.begin(), rows.end());
  write_tsv_row(out, {"word", "per_billion"});
  for (const auto& [word, f] : rows) write_tsv_row(out, {word, format_double(f)});
}

FrequencyTable frequency_from_corpus(std::span<const Sentence> corpus, const std::string& language) {
  std::unordered_map<std::string, double> counts;
  double total = 0.0;
  for (const auto& sentence : corpus) {
    for (const auto& token : sentence) {
      const auto key = strip_punctuation(utf8_lowercase(token));
      if (key.empty()) continue;
      counts[key] += 1.0;
      total += 1.0;
    }
  }
  FrequencyTable table;
  table.language = language;
  for (auto& [word, c] : counts) table.per_billion[word] = c / total * 1e9;
  return table;
}

double log_frequency(const FrequencyTable& table, std::string_view word) {
  const auto lower = utf8_lowercase(word);
  auto it = table.per_billion.find(lower);
  if (it == table.per_billion.end()) it = table.per_billion.find(strip_punctuation(lower));
  const double f = it == table.per_billion.end() ? 0.0 : it->second;
  return std::log2(std::max(f, table.floor_per_billion));
}

void write_token_scores(std::ostream& out, std::span<const TokenScore> scores, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  write_tsv_row(out, {"language", "text_id", "word_index", "word", "n_subwords", "surprisal_bits", "entropy_bits",
                      "model_id", "context_mode"});
  for (const auto& s : scores) {
    write_tsv_row(out, {s.language, std::to_string(s.text_id), std::to_string(s.word_index), s.word,
                        std::to_string(s.n_subwords), format_double(s.surprisal_bits),
                        std::isnan(s.entropy_bits) ? std::string("NA") : format_double(s.entropy_bits),
                        s.model_id, to_string(s.context_mode)});
  }
}

std::vector<TokenScore> read_token_scores(std::istream& in, const std::string& source) {
  const auto table = read_tsv(in, source);
  const auto c_lang = table.column("language");
  const auto c_text = table.column("text_id");
  const auto c_index = table.column("word_index");
  const auto c_word = table.column("word");
  const auto c_sub = table.column("n_subwords");
  const auto c_surp = table.column("surprisal_bits");
  const auto c_ent = table.column("entropy_bits");
  const auto c_model = table.column("model_id");
  const auto c_mode = table.column("context_mode");
  std::vector<TokenScore> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    TokenScore s;
    s.language = row[c_lang];
    s.text_id = static_cast<int>(parse_int(row[c_text], "text_id"));
    s.word_index = static_cast<int>(parse_int(row[c_index], "word_index"));
    s.word = row[c_word];
    s.n_subwords = static_cast<int>(parse_int(row[c_sub], "n_subwords"));
    s.surprisal_bits = parse_double(row[c_surp], "surprisal_bits");
    s.entropy_bits = parse_double(row[c_ent], "entropy_bits");
    s.model_id = row[c_model];
    s.context_mode = parse_context_mode(row[c_mode]);
    if (s.n_subwords < 1) throw DataError(source + ": n_subwords must be >= 1");
    if (!(s.surprisal_bits >= 0.0)) throw DataError(source + ": negative surprisal for '" + s.word + "'");
    if (s.entropy_bits < 0.0) throw DataError(source + ": negative entropy for '" + s.word + "'");
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TokenScore> read_token_scores_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_token_scores(in, path);
}

std::vector<TokenScore> score_words(const NgramModel& model, std::span<const WordRecord> words, ContextMode mode,
                                    const std::string& model_id) {
  std::vector<const WordRecord*> sorted;
  sorted.reserve(words.size());
  for (const auto& w : words) sorted.push_back(&w);
  std::sort(sorted.begin(), sorted.end(), [](const WordRecord* a, const WordRecord* b) {
    return std::tie(a->language, a->text_id, a->word_index) < std::tie(b->language, b->text_id, b->word_index);
  });
  std::vector<TokenScore> out;
  out.reserve(words.size());
  std::size_t begin = 0;
  while (begin < sorted.size()) {
    std::size_t end = begin;
    while (end < sorted.size() && sorted[end]->language == sorted[begin]->language &&
           sorted[end]->text_id == sorted[begin]->text_id) {
      ++end;
    }
    std::vector<std::string> text;
    for (std::size_t i = begin; i < end; ++i) text.push_back(sorted[i]->word);
    const auto scores = score_text(model, text, mode);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& w = *sorted[i];
      TokenScore s;
      s.language = w.language;
      s.text_id = w.text_id;
      s.word_index = w.word_index;
      s.word = w.word;
      s.n_subwords = 1;
      s.surprisal_bits = scores[i - begin].surprisal_bits;
      s.entropy_bits = scores[i - begin].entropy_bits;
      s.model_id = model_id;
      s.context_mode = mode;
      out.push_back(std::move(s));
    }
    begin = end;
  }
  return out;
}

std::string to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::surprisal: return "surprisal";
    case PredictorKind::entropy: return "entropy";
    case PredictorKind::frequency: return "frequency";
    case PredictorKind::length: return "length";
  }
  return "unknown";
}

PredictorKind parse_predictor(std::string_view name) {
  if (name == "surprisal") return PredictorKind::surprisal;
  if (name == "entropy") return PredictorKind::entropy;
  if (name == "frequency") return PredictorKind::frequency;
  if (name == "length") return PredictorKind::length;
  throw ValidationError("unknown predictor '" + std::string(name) + "'");
}

SpilloverPolicy parse_spillover_policy(std::string_view name) {
  if (name == "drop") return SpilloverPolicy::drop;
  if (name == "zero") return SpilloverPolicy::zero;
  throw ValidationError("unknown spillover policy '" + std::string(name) + "' (expected drop or zero)");
}

std::string column_name(PredictorKind kind, int lag) {
  return to_string(kind) + (lag == 0 ? "_t" : "_t" + std::to_string(lag));
}

bool Design::has_column(std::string_view name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

Eigen::Index Design::column(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ValidationError("design has no column '" + std::string(name) + "'");
  return static_cast<Eigen::Index>(it - columns.begin());
}

std::vector<std::string> Design::languages() const {
  std::set<std::string> langs;
  for (const auto& k : keys) langs.insert(k.language);
  return {langs.begin(), langs.end()};
}

Design Design::subset(std::span<const Eigen::Index> rows) const {
  Design out;
  out.columns = columns;
  out.metadata = metadata;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.keys.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
    out.y[static_cast<Eigen::Index>(i)] = y[rows[i]];
    out.keys.push_back(keys[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

namespace {

using WordKey = std::tuple<std::string, int, int>;

struct WordValues {
  double surprisal = 0.0;
  double entropy = 0.0;
  double frequency = 0.0;
  double length = 0.0;

  double get(PredictorKind kind) const {
    switch (kind) {
      case PredictorKind::surprisal: return surprisal;
      case PredictorKind::entropy: return entropy;
      case PredictorKind::frequency: return frequency;
      case PredictorKind::length: return length;
    }
    return 0.0;
  }
};

}  // namespace

Design build_design(std::span<const WordRecord> words, std::span<const TokenScore> scores,
                    const FrequencyTable& frequencies, const DesignOptions& options) {
  const bool need_scores =
      options.predictors.contains(PredictorKind::surprisal) || options.predictors.contains(PredictorKind::entropy);

  std::map<WordKey, const TokenScore*> score_index;
  std::set<std::string> model_ids;
  for (const auto& s : scores) {
    if (s.context_mode != options.context_mode) continue;
    if (!options.model_id.empty() && s.model_id != options.model_id) continue;
    model_ids.insert(s.model_id);
    const auto [it, inserted] = score_index.emplace(WordKey{s.language, s.text_id, s.word_index}, &s);
    if (!inserted && it->second->model_id != s.model_id) continue;  // ambiguous model, reported below
    if (!inserted) {
      throw DataError("duplicate score for " + s.language + " text " + std::to_string(s.text_id) + " word " +
                      std::to_string(s.word_index) + " (model " + s.model_id + ")");
    }
  }
  if (need_scores && options.model_id.empty() && model_ids.size() > 1) {
    throw ValidationError("scores contain several models; select one with model_id");
  }

  std::vector<const WordRecord*> sorted;
  sorted.reserve(words.size());
  for (const auto& w : words) sorted.push_back(&w);
  std::sort(sorted.begin(), sorted.end(), [](const WordRecord* a, const WordRecord* b) {
    return std::tie(a->language, a->text_id, a->word_index) < std::tie(b->language, b->text_id, b->word_index);
  });

  std::map<WordKey, WordValues> values;
  std::vector<std::string> missing;
  std::size_t n_missing = 0;
  for (const auto* w : sorted) {
    const WordKey key{w->language, w->text_id, w->word_index};
    WordValues v;
    v.length = static_cast<double>(w->length);
    v.frequency = log_frequency(frequencies, w->word);
    if (need_scores) {
      const auto found = score_index.find(key);
      if (found == score_index.end()) {
        if (missing.size() < 20) {
          missing.push_back(w->language + ":" + std::to_string(w->text_id) + ":" + std::to_string(w->word_index) +
                            " '" + w->word + "'");
        }
        ++n_missing;
        continue;
      }
      v.surprisal = found->second->surprisal_bits;
      v.entropy = found->second->entropy_bits;
      if (options.predictors.contains(PredictorKind::entropy) && std::isnan(v.entropy)) {
        throw DataError("no entropy value for " + std::get<0>(key) + ":" + std::to_string(std::get<1>(key)) + ":" +
                        std::to_string(std::get<2>(key)));
      }
    }
    values.emplace(key, v);
  }
  if (n_missing > 0) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw DataError(std::to_string(n_missing) + " word(s) have no score for model '" + options.model_id +
                    "' (" + to_string(options.context_mode) + " context):" + list +
                    (n_missing > missing.size() ? "\n  ..." : ""));
  }

  static constexpr PredictorKind kOrder[] = {PredictorKind::surprisal, PredictorKind::entropy,
                                             PredictorKind::frequency, PredictorKind::length};
  Design design;
  for (int lag = 0; lag < kRegressorWords; ++lag) {
    for (const auto kind : kOrder) {
      if (options.predictors.contains(kind)) design.columns.push_back(column_name(kind, lag));
    }
  }
  const auto n_cols = static_cast<Eigen::Index>(design.columns.size());

  std::vector<double> cells;
  std::vector<double> response;
  std::size_t begin = 0;
  while (begin < sorted.size()) {
    std::size_t end = begin;
    while (end < sorted.size() && sorted[end]->language == sorted[begin]->language &&
           sorted[end]->text_id == sorted[begin]->text_id) {
      ++end;
    }
    for (std::size_t i = begin; i < end; ++i) {
      if (options.exclude_text_edges && (i == begin || i + 1 == end)) continue;
      const auto* w = sorted[i];
      std::array<const WordValues*, kRegressorWords> lagged{};
      bool complete = true;
      for (int lag = 0; lag < kRegressorWords; ++lag) {
        const auto found = values.find(WordKey{w->language, w->text_id, w->word_index - lag});
        lagged[static_cast<std::size_t>(lag)] = found == values.end() ? nullptr : &found->second;
        if (!lagged[static_cast<std::size_t>(lag)]) complete = false;
      }
      if (!complete && options.spillover == SpilloverPolicy::drop) continue;
      const double rt = measure_value(w->measures, options.measure);
      if (!(rt >= 0.0)) throw DataError("negative response for " + w->language + " word " + w->word);
      for (int lag = 0; lag < kRegressorWords; ++lag) {
        for (const auto kind : kOrder) {
          if (!options.predictors.contains(kind)) continue;
          const auto* v = lagged[static_cast<std::size_t>(lag)];
          cells.push_back(v ? v->get(kind) : 0.0);
        }
      }
      response.push_back(rt);
      design.keys.push_back({w->language, w->text_id, w->word_index});
    }
    begin = end;
  }

  const auto n_rows = static_cast<Eigen::Index>(response.size());
  design.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      cells.data(), n_rows, n_cols);
  design.y = Eigen::Map<const Eigen::VectorXd>(response.data(), n_rows);
  design.metadata["measure"] = to_string(options.measure);
  design.metadata["context_mode"] = to_string(options.context_mode);
  design.metadata["spillover"] = options.spillover == SpilloverPolicy::drop ? "drop" : "zero";
  if (!options.model_id.empty()) {
    design.metadata["model_id"] = options.model_id;
  } else if (model_ids.size() == 1) {
    design.metadata["model_id"] = *model_ids.begin();
  }
  return design;
}

void write_design(std::ostream& out, const Design& design, const std::string& comment) {
  if (!design.metadata.empty()) {
    out << '#';
    for (const auto& [k, v] : design.metadata) out << ' ' << k << '=' << v;
    out << '\n';
  }
  if (!comment.empty()) out << "# " << comment << '\n';
  std::vector<std::string> header{"language", "text_id", "word_index", "response"};
  header.insert(header.end(), design.columns.begin(), design.columns.end());
  write_tsv_row(out, header);
  std::vector<std::string> fields;
  for (Eigen::Index r = 0; r < design.rows(); ++r) {
    const auto& key = design.keys[static_cast<std::size_t>(r)];
    fields = {key.language, std::to_string(key.text_id), std::to_string(key.word_index), format_double(design.y[r])};
    for (Eigen::Index c = 0; c < design.X.cols(); ++c) fields.push_back(format_double(design.X(r, c)));
    write_tsv_row(out, fields);
  }
}

Design read_design(std::istream& in, const std::string& source) {
  const auto table = read_tsv(in, source);
  const auto c_lang = table.column("language");
  const auto c_text = table.column("text_id");
  const auto c_index = table.column("word_index");
  const auto c_resp = table.column("response");
  Design design;
  design.metadata = table.metadata;
  std::vector<std::size_t> predictor_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == c_lang || c == c_text || c == c_index || c == c_resp) continue;
    design.columns.push_back(table.header[c]);
    predictor_cols.push_back(c);
  }
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  design.X.resize(n, static_cast<Eigen::Index>(predictor_cols.size()));
  design.y.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    design.keys.push_back({row[c_lang], static_cast<int>(parse_int(row[c_text], "text_id")),
                           static_cast<int>(parse_int(row[c_index], "word_index"))});
    design.y[r] = parse_double(row[c_resp], "response");
    for (std::size_t c = 0; c < predictor_cols.size(); ++c) {
      design.X(r, static_cast<Eigen::Index>(c)) = parse_double(row[predictor_cols[c]], table.header[predictor_cols[c]]);
    }
  }
  return design;
}

Design read_design_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_design(in, path);
}

Design concat_designs(std::span<const Design> designs) {
  Design out;
  if (designs.empty()) return out;
  out.columns = designs.front().columns;
  out.metadata = designs.front().metadata;
  Eigen::Index n = 0;
  for (const auto& d : designs) {
    if (d.columns != out.columns) throw ValidationError("cannot concatenate designs with different columns");
    n += d.rows();
  }
  out.X.resize(n, static_cast<Eigen::Index>(out.columns.size()));
  out.y.resize(n);
  Eigen::Index at = 0;
  for (const auto& d : designs) {
    out.X.middleRows(at, d.rows()) = d.X;
    out.y.segment(at, d.rows()) = d.y;
    out.keys.insert(out.keys.end(), d.keys.begin(), d.keys.end());
    at += d.rows();
  }
  return out;
}

}  // namespace rtpower
