#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "ttn/corpus.hpp"
#include "ttn/error.hpp"
#include "ttn/rng.hpp"

using namespace ttn;
using namespace ttn::corpus;
using Tokens = std::vector<std::string>;

namespace {

RawDocument doc(std::string id, std::string text) { return {std::move(id), std::move(text), {}}; }

std::string join(const Tokens& t) {
  std::string s;
  for (const auto& w : t) s += w + " ";
  return s;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("").empty());
  CHECK(tokenize("The cats, sat!") == Tokens{"the", "cats", "sat"});
  // digits split tokens; every fragment is a single letter
  CHECK(tokenize("A1 b2c 42").empty());
  CHECK(tokenize("naïve café") == Tokens{"na", "ve", "caf"});
}

TEST_CASE("stem") {
  CHECK(stem("cats") == "cat");
  CHECK(stem("running") == "run");
  CHECK(stem("runs") == "run");
  CHECK(stem("sat") == "sat");
  CHECK(stem("classes") == "class");
  CHECK(stem("studies") == "study");
  CHECK(stem("boxes") == "box");
  CHECK(stem("stopped") == "stop");
  CHECK(stem("falling") == "fall");
  CHECK(stem("sing") == "sing");
  CHECK(stem("bus") == "bus");
  CHECK(stem("glass") == "glass");
  CHECK(stem("wing") == "wing");
}

TEST_CASE("normalize") {
  CHECK(normalize({"the", "cats", "sat"}, {"the"}) == Tokens{"cat", "sat"});
  CHECK(normalize({}, default_stopwords()).empty());
  CHECK(normalize({"running", "runs"}, {}) == Tokens{"run", "run"});
  // a stem that is itself a stopword is dropped
  CHECK(normalize({"hers"}, {"her"}).empty());
}

TEST_CASE("tokenize+normalize is idempotent on its own output") {
  Rng rng(5);
  const std::string letters = "abcdeginrst";
  const Tokens suffixes = {"", "s", "es", "ing", "ed", "ies", "sses", "ings", "eds"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    for (int w = 0; w < 12; ++w) {
      std::string word;
      const auto len = 1 + rng.below(7);
      for (std::size_t i = 0; i < len; ++i) word.push_back(letters[rng.below(letters.size())]);
      text += word + suffixes[rng.below(suffixes.size())] + (rng.bernoulli(0.3) ? ", " : " ");
    }
    const Preprocessor prep;
    const auto once = prep(text);
    CHECK(prep(join(once)) == once);
  }
}

TEST_CASE("build_vocabulary filters by document frequency") {
  const std::vector<RawDocument> docs = {doc("1", "aa bb"), doc("2", "aa cc"), doc("3", "aa dd"), doc("4", "bb cc")};
  const auto v = build_vocabulary(docs, 2, 0.5, Preprocessor{{}});
  CHECK(v.words() == Tokens{"bb", "cc"});
  CHECK(v.doc_freq() == std::vector<std::size_t>{2, 2});

  SUBCASE("single doc, no filter binds") {
    const auto one = build_vocabulary({doc("x", "zeta alpha zeta beta")}, 1, 1.0);
    CHECK(one.words() == Tokens{"alpha", "beta", "zeta"});
  }
  SUBCASE("default thresholds accepted") {
    std::vector<RawDocument> many;
    for (int i = 0; i < 100; ++i) many.push_back(doc(std::to_string(i), i % 4 == 0 ? "rare common" : "common other"));
    const auto pv = build_vocabulary(many, 20, 0.5);
    CHECK(pv.words() == Tokens{"rare"});
    CHECK(pv.min_df() == 20);
    CHECK(pv.max_df_ratio() == 0.5);
  }
  SUBCASE("nothing survives") {
    CHECK_THROWS_AS(build_vocabulary({doc("1", "aa")}, 2, 1.0), Error);
    try {
      build_vocabulary({doc("1", "aa")}, 2, 1.0);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyVocabulary);
    }
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(build_vocabulary({}, 1, 0.5), Error);
    CHECK_THROWS_AS(build_vocabulary(docs, 0, 0.5), Error);
    CHECK_THROWS_AS(build_vocabulary(docs, 1, 0.0), Error);
    CHECK_THROWS_AS(build_vocabulary(docs, 1, 1.5), Error);
  }
}

TEST_CASE("vocabulary bounds hold on random corpora and ordering is corpus-order independent") {
  Rng rng(17);
  const Tokens pool = {"apple", "bread", "cloud", "delta", "eagle", "frost", "grape", "house", "ivory", "jelly"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RawDocument> docs;
    const std::size_t m = 20 + rng.below(80);
    for (std::size_t d = 0; d < m; ++d) {
      std::string text;
      for (std::size_t i = 0; i < 5; ++i) text += pool[rng.below(1 + rng.below(pool.size()))] + " ";
      docs.push_back(doc("d" + std::to_string(d), text));
    }
    const std::size_t min_df = 1 + rng.below(5);
    const double ratio = 0.3 + 0.7 * rng.uniform();
    Vocabulary v;
    try {
      v = build_vocabulary(docs, min_df, ratio);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyVocabulary);
      continue;
    }
    const Preprocessor prep;
    for (std::size_t w = 0; w < v.size(); ++w) {
      std::size_t df = 0;
      for (const auto& d : docs) {
        const auto toks = prep(d.text);
        df += std::find(toks.begin(), toks.end(), v.word(w)) != toks.end();
      }
      CHECK(df == v.doc_freq()[w]);
      CHECK(df >= min_df);
      CHECK(static_cast<double>(df) <= ratio * static_cast<double>(m));
    }
    CHECK(std::is_sorted(v.words().begin(), v.words().end()));
    auto shuffled = docs;
    rng.shuffle(shuffled.begin(), shuffled.end());
    CHECK(build_vocabulary(shuffled, min_df, ratio) == v);
  }
}

TEST_CASE("doc_to_bow") {
  const Vocabulary v({"cat", "dog"}, {1, 1}, 1, 1.0, 1);
  const auto bow = doc_to_bow(doc("a", "cat cat dog"), v);
  CHECK(bow.counts == std::map<std::size_t, std::size_t>{{0, 2}, {1, 1}});
  CHECK(doc_to_bow(doc("b", "zebra"), v).counts.empty());
  CHECK(doc_to_bow(doc("c", ""), v).counts.empty());
  const std::string text = "The cats and the dogs chased other cats";
  CHECK(doc_to_bow(doc("d", text), v).total() <= Preprocessor{}(text).size());
}

TEST_CASE("corpus JSON lines") {
  const std::string jsonl =
      "{\"id\":\"a\",\"text\":\"hello world\",\"images\":[\"x.ppm\",\"y.ppm\"]}\n"
      "{\"id\":\"b\",\"text\":\"\",\"images\":[]}\n";
  const auto docs = parse_corpus(jsonl);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].image_paths.size() == 2);
  CHECK(parse_corpus(serialize_corpus(docs))[0].text == "hello world");
  CHECK_THROWS_AS(parse_corpus("{\"id\":\"a\",\"text\":\"\"}\n{\"id\":\"a\",\"text\":\"\"}\n"), Error);
  CHECK_THROWS_AS(parse_corpus("{\"id\":\"\",\"text\":\"\"}\n"), Error);
  CHECK_THROWS_AS(parse_corpus("{\"id\":\"a\",\"text\":\"\",\"images\":[\"\"]}\n"), Error);
  CHECK_THROWS_AS(parse_corpus("not json\n"), Error);
}

TEST_CASE("vocabulary JSON round trip") {
  const Vocabulary v({"cat", "dog"}, {3, 4}, 2, 0.5, 10);
  const auto back = Vocabulary::from_json(v.to_json());
  CHECK(back == v);
  CHECK(back.num_docs() == 10);
  CHECK(back.id("dog") == 1u);
  CHECK_FALSE(back.id("emu").has_value());
}
