#include "rtpower/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "rtpower/errors.hpp"
#include "rtpower/io.hpp"

namespace rtpower {

std::string NgramModel::pack(std::span<const TokenId> ids) {
  std::string key(ids.size() * sizeof(TokenId), '\0');
  if (!ids.empty()) std::memcpy(key.data(), ids.data(), key.size());
  return key;
}

namespace {

std::vector<TokenId> unpack(std::string_view key) {
  std::vector<TokenId> ids(key.size() / sizeof(TokenId));
  if (!ids.empty()) std::memcpy(ids.data(), key.data(), key.size());
  return ids;
}

bool is_special(std::string_view token) { return token == kBos || token == kEos; }

std::array<double, 3> estimate_discounts(const std::array<std::uint64_t, 4>& n) {
  const std::array<double, 3> fallback{0.75, 0.75, 0.75};
  if (n[0] == 0 || n[1] == 0 || n[2] == 0 || n[3] == 0) return fallback;
  const double n1 = static_cast<double>(n[0]);
  const double n2 = static_cast<double>(n[1]);
  const double n3 = static_cast<double>(n[2]);
  const double n4 = static_cast<double>(n[3]);
  const double y = n1 / (n1 + 2.0 * n2);
  const std::array<double, 3> d{1.0 - 2.0 * y * n2 / n1, 2.0 - 3.0 * y * n3 / n2, 3.0 - 4.0 * y * n4 / n3};
  for (int i = 0; i < 3; ++i) {
    if (!(d[i] > 0.0 && d[i] < i + 1.0)) return fallback;
  }
  return d;
}

}  // namespace

NgramModel NgramModel::train(std::span<const Sentence> corpus, int order, int min_count) {
  if (order < 1) throw ValidationError("n-gram order must be >= 1, got " + std::to_string(order));
  std::map<std::string, std::uint64_t> word_counts;
  std::size_t n_tokens = 0;
  for (const auto& sentence : corpus) {
    for (const auto& token : sentence) {
      if (is_special(token)) continue;
      ++word_counts[token];
      ++n_tokens;
    }
  }
  if (corpus.empty() || n_tokens == 0) throw ValidationError("cannot train an n-gram model on an empty corpus");

  NgramModel model;
  model.order_ = order;
  model.min_count_ = std::max(min_count, 1);
  model.vocabulary_ = {std::string(kEos), std::string(kUnk)};
  for (const auto& [word, count] : word_counts) {
    if (word == kUnk) continue;
    if (count >= static_cast<std::uint64_t>(model.min_count_)) model.vocabulary_.push_back(word);
  }
  for (TokenId i = 0; i < model.vocabulary_.size(); ++i) model.index_.emplace(model.vocabulary_[i], i);

  model.levels_.resize(static_cast<std::size_t>(order));
  const TokenId bos = model.bos_id();
  std::vector<TokenId> seq;
  for (const auto& sentence : corpus) {
    seq.assign(1, bos);
    for (const auto& token : sentence) {
      if (!is_special(token)) seq.push_back(model.id(token));
    }
    seq.push_back(kEosId);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      for (int n = 1; n <= order && static_cast<std::size_t>(n) <= i + 1; ++n) {
        const std::span<const TokenId> gram(seq.data() + i + 1 - n, static_cast<std::size_t>(n));
        ++model.levels_[n - 1].ngrams[pack(gram)].raw;
      }
    }
  }

  // Highest order and <s>-initial n-grams keep raw counts; the rest count
  // distinct left extensions.
  for (int n = 1; n <= order; ++n) {
    auto& level = model.levels_[n - 1];
    for (auto& [key, counts] : level.ngrams) {
      TokenId first;
      std::memcpy(&first, key.data(), sizeof first);
      counts.adjusted = (n == order || first == bos) ? counts.raw : 0;
    }
    if (n == order) continue;
    for (const auto& [key, counts] : model.levels_[n].ngrams) {
      const std::string suffix = key.substr(sizeof(TokenId));
      TokenId first;
      std::memcpy(&first, suffix.data(), sizeof first);
      if (first == bos) continue;
      ++level.ngrams[suffix].adjusted;
    }
  }

  for (auto& level : model.levels_) {
    std::array<std::uint64_t, 4> count_of_counts{};
    for (const auto& [key, counts] : level.ngrams) {
      if (counts.adjusted >= 1 && counts.adjusted <= 4) ++count_of_counts[counts.adjusted - 1];
    }
    level.discounts = estimate_discounts(count_of_counts);
  }
  model.build_contexts();
  return model;
}

void NgramModel::build_contexts() {
  for (auto& level : levels_) {
    level.contexts.clear();
    for (const auto& [key, counts] : level.ngrams) {
      if (counts.adjusted == 0) continue;
      const std::string history = key.substr(0, key.size() - sizeof(TokenId));
      TokenId last;
      std::memcpy(&last, key.data() + key.size() - sizeof(TokenId), sizeof last);
      level.contexts[history].successors.emplace_back(last, counts.adjusted);
    }
    for (auto& [history, stats] : level.contexts) {
      std::sort(stats.successors.begin(), stats.successors.end());
      std::uint64_t total = 0;
      for (const auto& [token, count] : stats.successors) {
        total += count;
        ++stats.n_by_count[std::min<std::uint64_t>(count, 3) - 1];
      }
      stats.total = static_cast<double>(total);
    }
  }
}

double NgramModel::discount(int level, std::uint64_t count) const {
  const auto& d = levels_[static_cast<std::size_t>(level - 1)].discounts;
  return std::min(d[std::min<std::uint64_t>(count, 3) - 1], static_cast<double>(count));
}

TokenId NgramModel::id(std::string_view token) const {
  if (token == kBos) return bos_id();
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

std::vector<TokenId> NgramModel::ids(std::span<const std::string> tokens) const { return to_ids(tokens); }

std::vector<TokenId> NgramModel::to_ids(std::span<const std::string> tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::span<const TokenId> NgramModel::trim_context(std::span<const TokenId> context) const {
  const auto bos = bos_id();
  std::size_t start = 0;
  for (std::size_t i = context.size(); i > 0; --i) {
    if (context[i - 1] == bos) {
      start = i - 1;
      break;
    }
  }
  const std::size_t max_len = static_cast<std::size_t>(order_ - 1);
  if (context.size() - start > max_len) start = context.size() - max_len;
  return context.subspan(start);
}

double NgramModel::probability(std::span<const TokenId> context, TokenId token) const {
  const auto ctx = trim_context(context);
  double p = 1.0 / static_cast<double>(vocabulary_.size());
  for (std::size_t n = 1; n <= ctx.size() + 1 && n <= static_cast<std::size_t>(order_); ++n) {
    const auto history = ctx.subspan(ctx.size() - (n - 1));
    const auto& level = levels_[n - 1];
    const auto found = level.contexts.find(pack(history));
    if (found == level.contexts.end()) continue;
    const auto& stats = found->second;
    const auto& d = level.discounts;
    const double gamma = (d[0] * static_cast<double>(stats.n_by_count[0]) +
                          d[1] * static_cast<double>(stats.n_by_count[1]) +
                          d[2] * static_cast<double>(stats.n_by_count[2])) / stats.total;
    double direct = 0.0;
    const auto it = std::lower_bound(stats.successors.begin(), stats.successors.end(),
                                     std::pair<TokenId, std::uint64_t>{token, 0});
    if (it != stats.successors.end() && it->first == token) {
      direct = std::max(static_cast<double>(it->second) - discount(static_cast<int>(n), it->second), 0.0) /
               stats.total;
    }
    p = direct + gamma * p;
  }
  return p;
}

Eigen::VectorXd NgramModel::next_distribution(std::span<const TokenId> context) const {
  const auto ctx = trim_context(context);
  const auto vocab = static_cast<Eigen::Index>(vocabulary_.size());
  Eigen::VectorXd p = Eigen::VectorXd::Constant(vocab, 1.0 / static_cast<double>(vocab));
  for (std::size_t n = 1; n <= ctx.size() + 1 && n <= static_cast<std::size_t>(order_); ++n) {
    const auto history = ctx.subspan(ctx.size() - (n - 1));
    const auto& level = levels_[n - 1];
    const auto found = level.contexts.find(pack(history));
    if (found == level.contexts.end()) continue;
    const auto& stats = found->second;
    const auto& d = level.discounts;
    const double gamma = (d[0] * static_cast<double>(stats.n_by_count[0]) +
                          d[1] * static_cast<double>(stats.n_by_count[1]) +
                          d[2] * static_cast<double>(stats.n_by_count[2])) / stats.total;
    p *= gamma;
    for (const auto& [token, count] : stats.successors) {
      p[token] += std::max(static_cast<double>(count) - discount(static_cast<int>(n), count), 0.0) / stats.total;
    }
  }
  return p;
}

Eigen::VectorXd NgramModel::next_distribution(std::span<const std::string> context) const {
  const auto ids = to_ids(context);
  return next_distribution(std::span<const TokenId>(ids));
}

double NgramModel::perplexity(std::span<const Sentence> heldout) const {
  double bits = 0.0;
  std::size_t n = 0;
  std::vector<TokenId> ctx;
  for (const auto& sentence : heldout) {
    ctx.assign(1, bos_id());
    auto score = [&](TokenId token) {
      bits -= std::log2(probability(ctx, token));
      ++n;
      ctx.push_back(token);
    };
    for (const auto& token : sentence) {
      if (!is_special(token)) score(id(token));
    }
    score(kEosId);
  }
  if (heldout.empty() || n == 0) throw ValidationError("perplexity needs a non-empty held-out set");
  return std::exp2(bits / static_cast<double>(n));
}

std::uint64_t NgramModel::raw_count(std::span<const TokenId> ngram) const {
  if (ngram.empty() || ngram.size() > levels_.size()) return 0;
  const auto& level = levels_[ngram.size() - 1];
  const auto it = level.ngrams.find(pack(ngram));
  return it == level.ngrams.end() ? 0 : it->second.raw;
}

std::uint64_t NgramModel::adjusted_count(std::span<const TokenId> ngram) const {
  if (ngram.empty() || ngram.size() > levels_.size()) return 0;
  const auto& level = levels_[ngram.size() - 1];
  const auto it = level.ngrams.find(pack(ngram));
  return it == level.ngrams.end() ? 0 : it->second.adjusted;
}

void NgramModel::save(std::ostream& out) const {
  out << "# rtpower n-gram model (interpolated modified Kneser-Ney)\n";
  out << "order\t" << order_ << '\n';
  out << "min_count\t" << min_count_ << '\n';
  for (TokenId i = 0; i < vocabulary_.size(); ++i) out << "vocab\t" << i << '\t' << vocabulary_[i] << '\n';
  for (int n = 1; n <= order_; ++n) {
    const auto& d = levels_[n - 1].discounts;
    out << "discounts\t" << n << '\t' << format_double(d[0]) << '\t' << format_double(d[1]) << '\t'
        << format_double(d[2]) << '\n';
  }
  const auto token_name = [&](TokenId t) -> const std::string& {
    static const std::string bos(kBos);
    return t == bos_id() ? bos : vocabulary_[t];
  };
  for (int n = 1; n <= order_; ++n) {
    const auto& level = levels_[n - 1];
    std::vector<std::pair<std::vector<TokenId>, NgramCounts>> rows;
    rows.reserve(level.ngrams.size());
    for (const auto& [key, counts] : level.ngrams) rows.emplace_back(unpack(key), counts);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [ids, counts] : rows) {
      out << "ngram\t" << n << '\t';
      for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? " " : "") << token_name(ids[i]);
      out << '\t' << counts.raw << '\t' << counts.adjusted << '\n';
    }
  }
}

NgramModel NgramModel::load(std::istream& in, const std::string& source) {
  NgramModel model;
  std::string line;
  std::size_t line_no = 0;
  bool have_order = false;
  auto fail = [&](const std::string& what) {
    throw DataError(source + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, '\t');
    if (f[0] == "order" && f.size() == 2) {
      model.order_ = static_cast<int>(parse_int(f[1], "order"));
      if (model.order_ < 1) fail("order must be >= 1");
      model.levels_.assign(static_cast<std::size_t>(model.order_), Level{});
      have_order = true;
    } else if (f[0] == "min_count" && f.size() == 2) {
      model.min_count_ = static_cast<int>(parse_int(f[1], "min_count"));
    } else if (f[0] == "vocab" && f.size() == 3) {
      const auto id = static_cast<TokenId>(parse_int(f[1], "vocab id"));
      if (id != model.vocabulary_.size()) fail("vocabulary ids must be dense and ordered");
      model.vocabulary_.push_back(f[2]);
      model.index_.emplace(f[2], id);
    } else if (f[0] == "discounts" && f.size() == 5) {
      if (!have_order) fail("discounts before order");
      const auto n = parse_int(f[1], "level");
      if (n < 1 || n > model.order_) fail("discount level out of range");
      auto& d = model.levels_[static_cast<std::size_t>(n - 1)].discounts;
      for (int i = 0; i < 3; ++i) d[i] = parse_double(f[2 + i], "discount");
    } else if (f[0] == "ngram" && f.size() == 5) {
      if (!have_order) fail("ngram before order");
      const auto n = parse_int(f[1], "level");
      if (n < 1 || n > model.order_) fail("ngram level out of range");
      const auto tokens = split(f[2], ' ');
      if (static_cast<long long>(tokens.size()) != n) fail("ngram length does not match level");
      std::vector<TokenId> ids;
      for (const auto& t : tokens) {
        if (t != kBos && !model.index_.contains(t)) fail("token '" + t + "' not in vocabulary");
        ids.push_back(model.id(t));
      }
      auto& counts = model.levels_[static_cast<std::size_t>(n - 1)].ngrams[pack(ids)];
      counts.raw = static_cast<std::uint64_t>(parse_int(f[3], "count"));
      counts.adjusted = static_cast<std::uint64_t>(parse_int(f[4], "continuation count"));
    } else {
      fail("unrecognized line");
    }
  }
  if (!have_order) throw DataError(source + ": missing order line");
  if (model.vocabulary_.size() < 2 || model.vocabulary_[kEosId] != kEos || model.vocabulary_[kUnkId] != kUnk) {
    throw DataError(source + ": vocabulary must start with </s> and <unk>");
  }
  model.build_contexts();
  return model;
}

bool ends_sentence(std::string_view word) {
  static constexpr std::string_view kFinal[] = {".", "!", "?", "…", "。", "！", "？", "؟", ";"};
  std::string_view w = word;
  // Closing quotes and brackets may follow the final mark.
  while (!w.empty() && (w.back() == '"' || w.back() == '\'' || w.back() == ')' || w.back() == ']')) {
    w.remove_suffix(1);
  }
  for (const auto mark : kFinal) {
    if (w.size() >= mark.size() && w.substr(w.size() - mark.size()) == mark) return true;
  }
  return false;
}

std::string to_string(ContextMode mode) { return mode == ContextMode::short_context ? "short" : "long"; }

ContextMode parse_context_mode(std::string_view name) {
  if (name == "short") return ContextMode::short_context;
  if (name == "long") return ContextMode::long_context;
  throw ValidationError("unknown context mode '" + std::string(name) + "' (expected short or long)");
}

std::vector<WordScore> score_text(const NgramModel& model, std::span<const std::string> words, ContextMode mode) {
  std::vector<WordScore> scores;
  scores.reserve(words.size());
  std::vector<TokenId> ctx{model.bos_id()};
  const auto keep = static_cast<std::size_t>(model.order());
  for (const auto& word : words) {
    const auto p = model.next_distribution(std::span<const TokenId>(ctx));
    const auto token = model.id(word);
    WordScore s;
    s.surprisal_bits = -std::log2(p[token]);
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p[i] > 0.0) h -= p[i] * std::log2(p[i]);
    }
    s.entropy_bits = h;
    scores.push_back(s);
    if (mode == ContextMode::short_context && ends_sentence(word)) {
      ctx.assign(1, model.bos_id());
    } else {
      ctx.push_back(token);
      if (ctx.size() > 2 * keep) ctx.erase(ctx.begin(), ctx.end() - static_cast<std::ptrdiff_t>(keep));
    }
  }
  return scores;
}

std::vector<Sentence> read_corpus(std::istream& in) {
  std::vector<Sentence> corpus;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = split_whitespace(line);
    if (!tokens.empty()) corpus.push_back(std::move(tokens));
  }
  return corpus;
}

std::vector<Sentence> read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_corpus(in);
}

}  // namespace rtpower
