#pragma once

// Small on-disk experiment: per language a Markov-chain corpus for the
// n-gram model and a set of texts whose fixations are driven by the model's
// own surprisal.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtpower/io.hpp"
#include "rtpower/ngram.hpp"
#include "rtpower/random.hpp"
#include "support/synthetic.hpp"

namespace rtpower::fixture {

namespace fs = std::filesystem;

struct LanguageFixture {
  std::string code;
  std::string family;
  fs::path fixations;
  fs::path corpus;
  fs::path heldout;
};

struct FixtureOptions {
  std::size_t corpus_sentences = 1500;
  std::size_t text_sentences = 90;  // per text
  int texts = 3;
  int participants = 5;
  int vocab = 150;
  double base_ms = 180.0;
  double ms_per_bit = 6.0;
  double noise_ms = 25.0;
  double skip_rate = 0.08;
};

inline void write_corpus(const fs::path& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path);
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
    out << '\n';
  }
}

// Pads each word type by a type-specific amount so that word lengths span
// enough distinct values for the length smooths.
inline std::vector<Sentence> vary_lengths(std::vector<Sentence> corpus) {
  for (auto& s : corpus) {
    for (auto& w : s) {
      const bool final = !w.empty() && w.back() == '.';
      if (final) w.pop_back();
      w += std::string(fnv1a(w) % 9, 'a');
      if (final) w += '.';
    }
  }
  return corpus;
}

inline LanguageFixture make_language(const fs::path& dir, const std::string& code, const std::string& family,
                                     std::uint64_t seed, const FixtureOptions& o = {}) {
  fs::create_directories(dir);
  LanguageFixture f{code, family, dir / (code + "_fixations.tsv"), dir / (code + "_corpus.txt"),
                    dir / (code + "_heldout.txt")};
  const std::string prefix = code + "w";
  const auto corpus = vary_lengths(synthetic::markov_corpus(o.corpus_sentences, o.vocab, seed, prefix));
  write_corpus(f.corpus, corpus);
  // Same chain (same seed), later draws: texts and held-out sentences.
  const auto extra = vary_lengths(
      synthetic::markov_corpus(o.corpus_sentences + o.text_sentences * o.texts + 200, o.vocab, seed, prefix));
  std::vector<Sentence> heldout(extra.end() - 200, extra.end());
  write_corpus(f.heldout, heldout);

  const auto model = NgramModel::train(corpus, 3);
  auto rng = make_rng(seed, 99);
  std::normal_distribution<double> noise(0.0, o.noise_ms);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::ofstream out(f.fixations);
  out << "participant\ttext_id\tword_index\tword\tpass\torder_in_pass\tduration_ms\n";
  for (int t = 0; t < o.texts; ++t) {
    std::vector<std::string> words;
    const auto first = extra.begin() + static_cast<std::ptrdiff_t>(o.corpus_sentences + o.text_sentences * t);
    for (auto it = first; it != first + static_cast<std::ptrdiff_t>(o.text_sentences); ++it) {
      words.insert(words.end(), it->begin(), it->end());
    }
    const auto scores = score_text(model, words, ContextMode::long_context);
    for (int p = 0; p < o.participants; ++p) {
      const std::string participant = code + "_p" + std::to_string(p);
      for (std::size_t i = 0; i < words.size(); ++i) {
        auto row = [&](int pass, int order, double ms) {
          out << participant << '\t' << t << '\t' << i << '\t' << words[i] << '\t' << pass << '\t' << order << '\t'
              << ms << '\n';
        };
        if (unit(rng) < o.skip_rate) {
          if (i == 0) row(0, 0, 0.0);
          continue;
        }
        const double gaze = std::max(60.0, o.base_ms + o.ms_per_bit * scores[i].surprisal_bits + noise(rng));
        if (unit(rng) < 0.3) {
          const double first_ms = std::round(gaze * 0.6);
          row(1, 1, first_ms);
          row(1, 2, gaze - first_ms);
        } else {
          row(1, 1, gaze);
        }
        if (unit(rng) < 0.1) row(2, 1, 120.0);
      }
    }
  }
  return f;
}

inline nlohmann::json config_json(const std::vector<LanguageFixture>& languages, const fs::path& output_dir) {
  nlohmann::json j;
  j["languages"] = nlohmann::json::array();
  for (const auto& l : languages) {
    j["languages"].push_back({{"code", l.code},
                              {"family", l.family},
                              {"fixations", l.fixations.string()},
                              {"lm_corpus", l.corpus.string()},
                              {"lm_heldout", l.heldout.string()}});
  }
  j["measures"] = {"gaze_duration"};
  j["k_folds"] = 5;
  j["n_perm"] = 999;
  j["seed"] = 11;
  j["ngram_order"] = 3;
  j["gam"] = false;
  j["output_dir"] = output_dir.string();
  return j;
}

// Fresh directory under the system temp dir.
inline fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rtpower_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace rtpower::fixture
