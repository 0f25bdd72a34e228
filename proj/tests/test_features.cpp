#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "algotag/error.hpp"
#include "algotag/features.hpp"
#include "algotag/rng.hpp"

namespace algotag::features {
namespace {

TokenList T(std::initializer_list<const char*> tokens) { return TokenList(tokens.begin(), tokens.end()); }

TEST(Tokenizer, WordsDigitsAndSymbols) {
  EXPECT_EQ(tokenize("Vasya has 3 apples."), T({"vasya", "has", "3", "apples", "."}));
  EXPECT_EQ(tokenize("a≤10^5"), T({"a", "≤", "10", "^", "5"}));
  EXPECT_EQ(tokenize(""), TokenList{});
  EXPECT_EQ(tokenize(" \t\n "), TokenList{});
}

TEST(Tokenizer, RunsAndCase) {
  EXPECT_EQ(tokenize("abc123def"), T({"abc", "123", "def"}));
  EXPECT_EQ(tokenize("x_1 (y)"), T({"x", "_", "1", "(", "y", ")"}));
  EXPECT_EQ(tokenize("Ünïcode ÄB"), T({"ünïcode", "äb"}));
  EXPECT_EQ(tokenize("Петя и Вася"), T({"петя", "и", "вася"}));
  EXPECT_EQ(tokenize("ABC", {.lowercase = false}), T({"ABC"}));
  EXPECT_EQ(tokenize("1e9+7"), T({"1", "e", "9", "+", "7"}));
  EXPECT_EQ(tokenize("a b"), T({"a", "b"}));
}

TEST(Tokenizer, IdempotentOnJoinedOutput) {
  Rng rng(5);
  const std::string alphabet[] = {"Ab", "c", "12", "≤", ".", " ", "  ", "x9", "é", "^", "\n", "∑", "-"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    for (int i = 0; i < 20; ++i) text += alphabet[rng.below(std::size(alphabet))];
    const auto tokens = tokenize(text);
    std::string joined;
    for (const auto& t : tokens) joined += t + " ";
    EXPECT_EQ(tokenize(joined), tokens) << text;
    EXPECT_EQ(tokenize(text), tokens);
  }
}

TEST(Tokenizer, InvalidUtf8DoesNotCrash) {
  const std::string bad = "ab\xff\xfe" "cd\xe2\x82";
  const auto tokens = tokenize(bad);
  EXPECT_FALSE(tokens.empty());
  EXPECT_EQ(tokens.front(), "ab");
}

TEST(Vocabulary, MinCountAndReservedIds) {
  const std::vector<TokenList> docs = {T({"a", "a", "b"}), T({"a", "c"})};
  const auto vocab = Vocabulary::fit(docs, 2);
  EXPECT_EQ(vocab.tokens(), T({"a"}));
  EXPECT_EQ(vocab.lookup("a"), Vocabulary::kFirstTokenId);
  EXPECT_EQ(vocab.lookup("b"), Vocabulary::kUnkId);
  EXPECT_EQ(vocab.lookup("c"), Vocabulary::kUnkId);
  EXPECT_EQ(vocab.lookup("never-seen"), Vocabulary::kUnkId);
  EXPECT_EQ(vocab.size(), 3u);

  const auto all = Vocabulary::fit(docs, 1);
  EXPECT_EQ(all.tokens(), T({"a", "b", "c"}));
  for (const auto& t : all.tokens()) EXPECT_GE(all.lookup(t), Vocabulary::kFirstTokenId);
}

TEST(Vocabulary, OrderIsFrequencyThenLexicographic) {
  const std::vector<TokenList> docs = {T({"z", "z", "y", "y", "x", "x", "x"})};
  EXPECT_EQ(Vocabulary::fit(docs, 1).tokens(), T({"x", "y", "z"}));
}

TEST(Vocabulary, JsonRoundTrip) {
  const std::vector<TokenList> docs = {T({"a", "b", "a", "b", "c"})};
  const auto vocab = Vocabulary::fit(docs, 2);
  const auto back = Vocabulary::from_json(vocab.to_json());
  EXPECT_EQ(back.tokens(), vocab.tokens());
  EXPECT_EQ(back.fingerprint(), vocab.fingerprint());
  auto tampered = vocab.to_json();
  tampered["tokens"].push_back("extra");
  EXPECT_THROW(Vocabulary::from_json(tampered), InputFormatError);
}

TEST(Ngrams, Extraction) {
  EXPECT_EQ(extract_ngrams(T({"a", "b", "c"}), 2), T({"a", "b", "c", "a b", "b c"}));
  EXPECT_EQ(extract_ngrams(T({"a", "a"}), 2), T({"a", "a", "a a"}));
  EXPECT_TRUE(extract_ngrams({}, 2).empty());
}

TEST(Ngrams, VectorizeCounts) {
  const std::vector<TokenList> docs = {T({"a", "b", "c"}), T({"a", "a"})};
  const auto vocab = NgramVocabulary::fit(docs, {.max_order = 2, .min_count = 1, .max_features = 0});
  auto value = [&](const SparseVector& v, const std::string& gram) {
    const auto id = vocab.lookup(gram);
    if (!id) return -1.0;
    for (const auto& e : v.entries) {
      if (e.id == *id) return e.value;
    }
    return 0.0;
  };
  const auto v1 = vocab.vectorize(T({"a", "b", "c"}));
  EXPECT_EQ(v1.entries.size(), 5u);
  for (const char* g : {"a", "b", "c", "a b", "b c"}) EXPECT_EQ(value(v1, g), 1.0) << g;
  const auto v2 = vocab.vectorize(T({"a", "a"}));
  EXPECT_EQ(v2.entries.size(), 2u);
  EXPECT_EQ(value(v2, "a"), 2.0);
  EXPECT_EQ(value(v2, "a a"), 1.0);
  EXPECT_TRUE(vocab.vectorize({}).empty());
  for (std::size_t i = 1; i < v1.entries.size(); ++i) EXPECT_LT(v1.entries[i - 1].id, v1.entries[i].id);
}

TEST(Ngrams, MinCountAppliesToBigramsAndCapKeepsMostFrequent) {
  const std::vector<TokenList> docs = {T({"a", "b", "a", "b"}), T({"c", "a"})};
  const auto vocab = NgramVocabulary::fit(docs, {.max_order = 2, .min_count = 2, .max_features = 0});
  EXPECT_EQ(vocab.ngrams(), T({"a", "a b", "b"}));
  const auto capped = NgramVocabulary::fit(docs, {.max_order = 2, .min_count = 1, .max_features = 2});
  EXPECT_EQ(capped.ngrams(), T({"a", "a b"}));
  EXPECT_EQ(NgramVocabulary::from_json(capped.to_json()).ngrams(), capped.ngrams());
}

TEST(Tfidf, IdfFormulaAndNormalization) {
  // Feature 0 in both documents, feature 1 in one.
  const std::vector<SparseVector> docs = {{{{0, 1.0}, {1, 2.0}}}, {{{0, 3.0}}}};
  const auto model = TfidfModel::fit(docs, 2);
  EXPECT_DOUBLE_EQ(model.idf()[0], 1.0);
  EXPECT_DOUBLE_EQ(model.idf()[1], std::log(3.0 / 2.0) + 1.0);

  const auto single = model.transform(SparseVector{{{1, 7.0}}});
  ASSERT_EQ(single.entries.size(), 1u);
  EXPECT_DOUBLE_EQ(single.entries[0].value, 1.0);
  EXPECT_TRUE(model.transform(SparseVector{}).empty());

  for (const auto& v : model.transform(docs)) EXPECT_NEAR(std::sqrt(v.squared_norm()), 1.0, 1e-9);
  const auto back = TfidfModel::from_json(model.to_json());
  EXPECT_EQ(back.idf(), model.idf());
}

TEST(Tfidf, RandomDocumentsHaveUnitNorm) {
  Rng rng(9);
  std::vector<SparseVector> docs(30);
  for (auto& d : docs) {
    for (std::uint32_t id = 0; id < 12; ++id) {
      if (rng.below(3) == 0) d.entries.push_back({id, 1.0 + static_cast<double>(rng.below(4))});
    }
  }
  const auto model = TfidfModel::fit(docs, 12);
  for (const auto& v : model.transform(docs)) {
    if (!v.empty()) EXPECT_NEAR(std::sqrt(v.squared_norm()), 1.0, 1e-9);
  }
}

TEST(SparseVector, DotProduct) {
  const SparseVector a{{{0, 1.0}, {3, 2.0}, {5, -1.0}}};
  const SparseVector b{{{3, 4.0}, {4, 9.0}, {5, 2.0}}};
  EXPECT_DOUBLE_EQ(a.dot(b), 6.0);
  EXPECT_DOUBLE_EQ(a.dot(a), a.squared_norm());
  EXPECT_EQ(a.extent(), 6u);
}

TEST(Sequences, PaddingAndTruncation) {
  const auto vocab = Vocabulary::fit(std::vector<TokenList>{T({"a", "a", "b", "b"})}, 2);
  auto seq = encode_sequence(T({"a", "b", "zz"}), vocab, 10);
  EXPECT_EQ(seq.length, 3u);
  EXPECT_EQ(seq.ids, (std::vector<std::int32_t>{2, 3, 0, 1, 1}));

  seq = encode_sequence(T({"q", "r"}), vocab, 10);
  EXPECT_EQ(seq.ids, (std::vector<std::int32_t>{0, 0, 1, 1, 1}));

  const TokenList long_doc(9, "a");
  seq = encode_sequence(long_doc, vocab, 6);
  EXPECT_EQ(seq.length, 6u);
  EXPECT_EQ(seq.ids.size(), 6u);

  EXPECT_THROW(encode_sequence(long_doc, vocab, 4), ParameterError);
}

TEST(Embeddings, FileRowsAndRandomRows) {
  const auto vocab = Vocabulary::from_tokens(T({"cat", "dog"}), 1);
  const auto m = load_embeddings_text("cat 0.1 0.2\nbird 1 1\n", vocab, 3);
  ASSERT_EQ(m.dim, 2u);
  ASSERT_EQ(m.rows, 4u);
  EXPECT_EQ(m.row(2)[0], 0.1);
  EXPECT_EQ(m.row(2)[1], 0.2);
  EXPECT_EQ(m.provenance[2], RowSource::kPretrained);
  EXPECT_EQ(m.provenance[3], RowSource::kRandomInit);
  for (double v : m.row(3)) {
    EXPECT_GE(v, -0.25);
    EXPECT_LE(v, 0.25);
  }
  for (double v : m.row(Vocabulary::kPadId)) EXPECT_EQ(v, 0.0);

  const auto again = load_embeddings_text("cat 0.1 0.2\nbird 1 1\n", vocab, 3);
  EXPECT_EQ(again.values, m.values);
}

TEST(Embeddings, Errors) {
  const auto vocab = Vocabulary::from_tokens(T({"cat"}), 1);
  try {
    load_embeddings_text("cat 0.1 0.2\ndog 0.1 0.2 0.3\n", vocab, 0);
    FAIL();
  } catch (const InputFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  try {
    load_embeddings_text("cat 0.1 0.2\ndog 0.1 x\n", vocab, 0);
    FAIL();
  } catch (const InputFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(load_embeddings_text("", vocab, 0), InputFormatError);
  EXPECT_THROW(load_embeddings("/nonexistent/vectors.txt", vocab, 0), InputFormatError);
}

}  // namespace
}  // namespace algotag::features
