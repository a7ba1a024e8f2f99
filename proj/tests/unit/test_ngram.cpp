#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rtpower/errors.hpp"
#include "rtpower/ngram.hpp"
#include "rtpower/random.hpp"
#include "support/synthetic.hpp"

using namespace rtpower;

namespace {

std::vector<Sentence> corpus_of(std::initializer_list<std::string> lines) {
  std::vector<Sentence> out;
  for (const auto& line : lines) {
    std::istringstream in(line);
    Sentence s;
    std::string t;
    while (in >> t) s.push_back(t);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("training rejects an empty corpus and a zero order") {
  CHECK_THROWS_AS(NgramModel::train(std::vector<Sentence>{}, 3), ValidationError);
  CHECK_THROWS_AS(NgramModel::train(std::vector<Sentence>{Sentence{}}, 3), ValidationError);
  CHECK_THROWS_AS(NgramModel::train(corpus_of({"a b"}), 0), ValidationError);
}

TEST_CASE("bigram model prefers the observed continuation") {
  const auto model = NgramModel::train(corpus_of({"a b a b"}), 2);
  const std::vector<std::string> ctx{"a"};
  const auto p = model.next_distribution(std::span<const std::string>(ctx));
  CHECK(p[model.id("b")] > p[model.id("a")]);
}

TEST_CASE("vocabulary layout") {
  const auto model = NgramModel::train(corpus_of({"b a c", "a"}), 2);
  REQUIRE(model.vocab_size() == 5);
  CHECK(model.vocabulary()[0] == "</s>");
  CHECK(model.vocabulary()[1] == "<unk>");
  CHECK(model.vocabulary()[2] == "a");
  CHECK(model.id("zzz") == NgramModel::kUnkId);
  CHECK(model.bos_id() == 5);
}

TEST_CASE("unigram on a single repeated token follows the closed form") {
  // Counts: x = 5, </s> = 1, <unk> = 0, so N1 = 1 (</s>), N3+ = 1 (x); with
  // degenerate count-of-counts every discount is 0.75:
  //   p(x) = (5 - 0.75)/6 + gamma/3, gamma = (0.75 + 0.75)/6.
  const auto model = NgramModel::train(corpus_of({"x x x x x"}), 1);
  const std::vector<std::string> ctx;
  const auto p = model.next_distribution(std::span<const std::string>(ctx));
  const double gamma = 1.5 / 6.0;
  CHECK(p[model.id("x")] == doctest::Approx(4.25 / 6.0 + gamma / 3.0).epsilon(1e-12));
  CHECK(p[NgramModel::kEosId] == doctest::Approx(0.25 / 6.0 + gamma / 3.0).epsilon(1e-12));
  CHECK(p[NgramModel::kUnkId] == doctest::Approx(gamma / 3.0).epsilon(1e-12));
  CHECK(p[model.id("x")] == doctest::Approx(1.0 - p[NgramModel::kEosId] - p[NgramModel::kUnkId]));
}

TEST_CASE("order 1 ignores context") {
  const auto corpus = synthetic::markov_corpus(200, 30, 4);
  const auto model = NgramModel::train(corpus, 1);
  const std::vector<std::string> a{"w1", "w2"}, b{"w9"};
  const auto pa = model.next_distribution(std::span<const std::string>(a));
  const auto pb = model.next_distribution(std::span<const std::string>(b));
  CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("near-uniform corpus gives a near-uniform unigram") {
  std::vector<Sentence> corpus;
  for (int r = 0; r < 50; ++r) corpus.push_back({"a", "b", "c", "d"});
  const auto model = NgramModel::train(corpus, 1);
  const auto p = model.next_distribution(std::span<const TokenId>{});
  for (const auto* w : {"a", "b", "c", "d"}) CHECK(p[model.id(w)] == doctest::Approx(p[model.id("a")]));
}

TEST_CASE("distributions are normalized and strictly positive over 1000 contexts") {
  const auto corpus = synthetic::markov_corpus(800, 60, 9);
  const auto model = NgramModel::train(corpus, 4);
  auto rng = make_rng(5);
  double worst = 0.0;
  double min_p = 1.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<TokenId> ctx;
    if (uniform_index(rng, 3) == 0) ctx.push_back(model.bos_id());
    const auto len = uniform_index(rng, 5);
    for (std::uint64_t j = 0; j < len; ++j) {
      ctx.push_back(static_cast<TokenId>(uniform_index(rng, model.vocab_size())));
    }
    const auto p = model.next_distribution(std::span<const TokenId>(ctx));
    worst = std::max(worst, std::abs(p.sum() - 1.0));
    min_p = std::min(min_p, p.minCoeff());
  }
  CHECK(worst < 1e-6);
  CHECK(min_p > 0.0);
}

TEST_CASE("unseen top-order history reduces to the lower-order distribution") {
  const auto corpus = synthetic::markov_corpus(300, 40, 2);
  const auto model = NgramModel::train(corpus, 3);
  // Search for a bigram history that never occurs.
  TokenId a = 2, b = 2;
  bool found = false;
  for (a = 2; a < model.vocab_size() && !found; ++a) {
    for (b = 2; b < model.vocab_size(); ++b) {
      const std::vector<TokenId> h{a, b};
      if (model.raw_count(h) == 0) {
        found = true;
        break;
      }
    }
  }
  REQUIRE(found);
  --a;
  const std::vector<TokenId> full{a, b}, short_ctx{b};
  const auto p_full = model.next_distribution(std::span<const TokenId>(full));
  const auto p_short = model.next_distribution(std::span<const TokenId>(short_ctx));
  CHECK((p_full - p_short).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("interpolation matches an explicit recursion on a hand-counted corpus") {
  // Corpus "a b" / "a c" / "b c", bigram model.
  //   bigram counts (raw, top order): <s> a: 2, <s> b: 1, a b: 1, a c: 1, b c: 1,
  //   b </s>: 1, c </s>: 2
  //   unigram continuation counts: a: {<s>} = 1, b: {<s>, a} = 2,
  //   c: {a, b} = 2, </s>: {b, c} = 2
  // Every level has degenerate count-of-counts, so D = 0.75.
  const auto model = NgramModel::train(corpus_of({"a b", "a c", "b c"}), 2);
  const double V = 5.0;
  const double total1 = 7.0;
  const double gamma1 = 0.75 * 4.0 / total1;
  auto p1 = [&](double cont) { return std::max(cont - 0.75, 0.0) / total1 + gamma1 / V; };
  const double p1_a = p1(1), p1_b = p1(2), p1_c = p1(2), p1_eos = p1(2), p1_unk = p1(0);
  CHECK(p1_a + p1_b + p1_c + p1_eos + p1_unk == doctest::Approx(1.0));

  // History "a": successors b (1), c (1).
  const double gamma_a = 0.75 * 2.0 / 2.0;
  const std::vector<std::string> ctx{"a"};
  const auto p = model.next_distribution(std::span<const std::string>(ctx));
  CHECK(p[model.id("b")] == doctest::Approx(0.25 / 2.0 + gamma_a * p1_b).epsilon(1e-12));
  CHECK(p[model.id("c")] == doctest::Approx(0.25 / 2.0 + gamma_a * p1_c).epsilon(1e-12));
  CHECK(p[model.id("a")] == doctest::Approx(gamma_a * p1_a).epsilon(1e-12));
  CHECK(p[NgramModel::kEosId] == doctest::Approx(gamma_a * p1_eos).epsilon(1e-12));
  CHECK(p[NgramModel::kUnkId] == doctest::Approx(gamma_a * p1_unk).epsilon(1e-12));

  const std::vector<TokenId> a_id{model.id("a")};
  CHECK(model.adjusted_count(std::vector<TokenId>{model.id("b")}) == 2);
  CHECK(model.adjusted_count(a_id) == 1);
}

TEST_CASE("perplexity is 2 to the mean surprisal including </s>") {
  const auto model = NgramModel::train(corpus_of({"x y", "y x"}), 2);
  const std::vector<Sentence> heldout = corpus_of({"x y"});
  const std::vector<TokenId> bos{model.bos_id()};
  const std::vector<TokenId> bx{model.bos_id(), model.id("x")};
  const std::vector<TokenId> bxy{model.bos_id(), model.id("x"), model.id("y")};
  const double bits = -std::log2(model.probability(bos, model.id("x"))) -
                      std::log2(model.probability(bx, model.id("y"))) -
                      std::log2(model.probability(bxy, NgramModel::kEosId));
  CHECK(model.perplexity(heldout) == doctest::Approx(std::exp2(bits / 3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(model.perplexity(std::vector<Sentence>{}), ValidationError);
}

TEST_CASE("perplexity approaches 1 on a single repeated symbol") {
  std::vector<Sentence> corpus(1, Sentence(2000, "x"));
  const auto model = NgramModel::train(corpus, 1);
  CHECK(model.perplexity(corpus) < 1.01);
}

TEST_CASE("adding a sentence never lowers its unigram probabilities") {
  auto corpus = synthetic::markov_corpus(100, 25, 12);
  const auto before = NgramModel::train(corpus, 1);
  const Sentence added = corpus[3];
  corpus.push_back(added);
  const auto after = NgramModel::train(corpus, 1);
  for (const auto& w : added) {
    CHECK(after.probability({}, after.id(w)) >= before.probability({}, before.id(w)));
  }
}

TEST_CASE("min_count maps rare words to <unk>") {
  const auto model = NgramModel::train(corpus_of({"a a b", "a c"}), 2, 2);
  CHECK(model.vocab_size() == 3);
  CHECK(model.id("b") == NgramModel::kUnkId);
  CHECK(model.id("a") == 2);
}

TEST_CASE("save and load reproduce probabilities bit for bit") {
  const auto corpus = synthetic::markov_corpus(300, 40, 21);
  const auto model = NgramModel::train(corpus, 4);
  std::stringstream io;
  model.save(io);
  const auto loaded = NgramModel::load(io);
  CHECK(loaded.order() == 4);
  CHECK(loaded.vocabulary() == model.vocabulary());
  for (std::size_t i = 0; i < 30; ++i) {
    const auto& s = corpus[i];
    std::vector<std::string> ctx{"<s>"};
    for (const auto& w : s) {
      const auto a = model.next_distribution(std::span<const std::string>(ctx));
      const auto b = loaded.next_distribution(std::span<const std::string>(ctx));
      CHECK((a.array() == b.array()).all());
      ctx.push_back(w);
    }
  }
  std::istringstream broken("order\t2\nvocab\t0\t</s>\nngram\t1\tzz\t1\t1\n");
  CHECK_THROWS_AS(NgramModel::load(broken), DataError);
}

TEST_CASE("sentence boundaries and context modes") {
  CHECK(ends_sentence("end."));
  CHECK(ends_sentence("really?\""));
  CHECK(ends_sentence("終わり。"));
  CHECK_FALSE(ends_sentence("comma,"));
  CHECK(parse_context_mode("short") == ContextMode::short_context);
  CHECK_THROWS_AS(parse_context_mode("medium"), ValidationError);

  const auto corpus = synthetic::markov_corpus(400, 30, 8);
  const auto model = NgramModel::train(corpus, 3);
  // Short mode restarts after a sentence end, so the second sentence scores
  // as if it were alone.
  std::vector<std::string> text = corpus[0];
  text.insert(text.end(), corpus[1].begin(), corpus[1].end());
  const auto joint = score_text(model, text, ContextMode::short_context);
  const auto alone = score_text(model, corpus[1], ContextMode::short_context);
  for (std::size_t i = 0; i < alone.size(); ++i) {
    CHECK(joint[corpus[0].size() + i].surprisal_bits == doctest::Approx(alone[i].surprisal_bits));
    CHECK(joint[corpus[0].size() + i].entropy_bits == doctest::Approx(alone[i].entropy_bits));
  }
  const auto long_scores = score_text(model, text, ContextMode::long_context);
  CHECK(long_scores.size() == text.size());
  CHECK(long_scores[corpus[0].size()].surprisal_bits != doctest::Approx(alone[0].surprisal_bits));
}

TEST_CASE("perplexity on the 10k-token fixture matches the reference script") {
  // tests/oracles/kn_perplexity.py on tests/fixtures/lm_{train,heldout}.txt
  const auto train = read_corpus_file(RTPOWER_TEST_DATA_DIR "/lm_train.txt");
  const auto heldout = read_corpus_file(RTPOWER_TEST_DATA_DIR "/lm_heldout.txt");
  std::size_t tokens = 0;
  for (const auto& s : heldout) tokens += s.size() + 1;
  CHECK(tokens == 10000);
  const std::pair<int, double> expected[] = {{1, 84.4128272414}, {2, 16.9057350877}, {3, 18.0819237598},
                                             {5, 18.8594130677}};
  for (const auto& [order, ppl] : expected) {
    CAPTURE(order);
    const auto model = NgramModel::train(train, order);
    CHECK(model.perplexity(heldout) == doctest::Approx(ppl).epsilon(1e-9));
  }
}
