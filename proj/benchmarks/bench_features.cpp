#include <benchmark/benchmark.h>

#include "algotag/artifact.hpp"
#include "algotag/features.hpp"
#include "support/synthetic.hpp"

namespace {

using namespace algotag;

std::vector<features::TokenList> corpus_docs(std::size_t items) {
  const auto ds = testing::synthetic_multiclass({.items = items, .classes = 5, .filler_words = 120});
  return tokenize_items(ds, {}, corpus::TextPart::kFull);
}

void BM_Tokenize(benchmark::State& state) {
  const auto ds = testing::synthetic_multiclass({.items = 64, .classes = 5, .filler_words = 120});
  std::size_t bytes = 0;
  for (const auto& item : ds.items) bytes += item.problem.statement.size();
  for (auto _ : state) {
    for (const auto& item : ds.items) benchmark::DoNotOptimize(features::tokenize(item.problem.statement));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes));
}
BENCHMARK(BM_Tokenize);

void BM_TokenizeUnicode(benchmark::State& state) {
  const std::string text =
      "Дано число n (1 ≤ n ≤ 10^5). Найдите ÜBER-максимум: a_i + b_j, где i ≠ j. Вывести ответ.";
  for (auto _ : state) benchmark::DoNotOptimize(features::tokenize(text));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_TokenizeUnicode);

void BM_NgramFit(benchmark::State& state) {
  const auto docs = corpus_docs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(features::NgramVocabulary::fit(docs, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NgramFit)->Arg(100)->Arg(1000);

void BM_Vectorize(benchmark::State& state) {
  const auto docs = corpus_docs(500);
  const auto vocab = features::NgramVocabulary::fit(docs, {});
  for (auto _ : state) {
    for (const auto& d : docs) benchmark::DoNotOptimize(vocab.vectorize(d));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(docs.size()));
}
BENCHMARK(BM_Vectorize);

void BM_Tfidf(benchmark::State& state) {
  const auto docs = corpus_docs(500);
  const auto vocab = features::NgramVocabulary::fit(docs, {});
  std::vector<features::SparseVector> counts;
  for (const auto& d : docs) counts.push_back(vocab.vectorize(d));
  for (auto _ : state) {
    const auto model = features::TfidfModel::fit(counts, vocab.size());
    benchmark::DoNotOptimize(model.transform(counts));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(docs.size()));
}
BENCHMARK(BM_Tfidf);

void BM_EncodeSequence(benchmark::State& state) {
  const auto docs = corpus_docs(500);
  const auto vocab = features::Vocabulary::fit(docs, 2);
  for (auto _ : state) {
    for (const auto& d : docs) benchmark::DoNotOptimize(features::encode_sequence(d, vocab, 512, 5));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(docs.size()));
}
BENCHMARK(BM_EncodeSequence);

}  // namespace

BENCHMARK_MAIN();
