#include <benchmark/benchmark.h>

#include <set>

#include "algotag/artifact.hpp"
#include "algotag/linear_models.hpp"
#include "algotag/metrics.hpp"
#include "algotag/neural.hpp"
#include "support/synthetic.hpp"

namespace {

using namespace algotag;

struct Batch {
  std::vector<features::TokenSequence> seqs;
  nn::Tensor targets;
};

Batch cnn_batch(std::size_t size, std::size_t length, std::size_t vocab, std::size_t classes) {
  Rng rng(3);
  Batch b;
  b.targets = nn::Tensor({size, classes});
  for (std::size_t i = 0; i < size; ++i) {
    features::TokenSequence s;
    for (std::size_t t = 0; t < length; ++t) s.ids.push_back(static_cast<std::int32_t>(2 + rng.below(vocab - 2)));
    s.length = length;
    b.seqs.push_back(std::move(s));
    b.targets.at(i, i % classes) = 1.0;
  }
  return b;
}

// Arguments: filters per width, sequence length. Batch 32, d = 128.
void BM_CnnForward(benchmark::State& state) {
  const auto filters = static_cast<std::size_t>(state.range(0));
  const auto length = static_cast<std::size_t>(state.range(1));
  const auto model = nn::CnnModel::create({.vocab_size = 5000, .filters_per_width = filters, .n_classes = 5}, 1);
  const auto batch = cnn_batch(32, length, 5000, 5);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(batch.seqs, false, nullptr, nullptr));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_CnnForward)->Args({128, 128})->Args({512, 128})->Args({512, 512})->Unit(benchmark::kMillisecond);

void BM_CnnTrainStep(benchmark::State& state) {
  const auto filters = static_cast<std::size_t>(state.range(0));
  const auto length = static_cast<std::size_t>(state.range(1));
  const auto model = nn::CnnModel::create({.vocab_size = 5000, .filters_per_width = filters, .n_classes = 5}, 1);
  const auto batch = cnn_batch(32, length, 5000, 5);
  Rng dropout(7);
  for (auto _ : state) {
    nn::CnnTape tape;
    const auto acts = model.forward(batch.seqs, true, &dropout, &tape);
    const auto loss = nn::compute_loss(nn::LossKind::kCrossEntropySoftmax, acts, batch.targets);
    auto grads = model.params().zeros_like();
    model.backward(tape, loss.grad, grads);
    benchmark::DoNotOptimize(grads);
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_CnnTrainStep)->Args({128, 128})->Args({512, 128})->Args({512, 512})->Unit(benchmark::kMillisecond);

std::vector<features::SparseVector> bags(std::size_t items, std::size_t dim, std::size_t nnz) {
  Rng rng(5);
  std::vector<features::SparseVector> out(items);
  for (auto& v : out) {
    std::set<std::uint32_t> ids;
    while (ids.size() < nnz) ids.insert(static_cast<std::uint32_t>(rng.below(dim)));
    for (auto id : ids) v.entries.push_back({id, 1.0 + static_cast<double>(rng.below(3))});
  }
  return out;
}

void BM_MlpForward(benchmark::State& state) {
  const auto model = nn::MlpModel::create({.input_dim = 10000, .hidden = {512}, .n_classes = 10}, 1);
  const auto x = bags(64, 10000, 150);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x, nullptr));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_MlpForward)->Unit(benchmark::kMicrosecond);

void BM_MnbTrainPredict(benchmark::State& state) {
  const auto x = bags(1000, 20000, 150);
  std::vector<linear::ClassId> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<linear::ClassId>(i % 10);
  for (auto _ : state) {
    const auto m = linear::train_mnb(x, y, 10, 20000, 1.0);
    for (const auto& d : x) benchmark::DoNotOptimize(linear::predict_mnb_scores(m, d));
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_MnbTrainPredict)->Unit(benchmark::kMillisecond);

void BM_SvmTrain(benchmark::State& state) {
  const auto x = bags(1000, 20000, 150);
  std::vector<std::int8_t> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 2 ? 1 : -1;
  for (auto _ : state) benchmark::DoNotOptimize(linear::train_binary_svm(x, y, 20000, {}));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_SvmTrain)->Unit(benchmark::kMillisecond);

void BM_MultilabelMetrics(benchmark::State& state) {
  Rng rng(9);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<datasets::LabelSet> truth(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (metrics::ClassId k = 0; k < 20; ++k) {
      if (rng.below(8) == 0) truth[i].push_back(k);
      if (rng.below(8) == 0) pred[i].push_back(k);
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::score_multilabel(truth, pred, 20));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_MultilabelMetrics)->Arg(4000);

void BM_MulticlassMetrics(benchmark::State& state) {
  Rng rng(9);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<metrics::ClassId> truth(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = static_cast<metrics::ClassId>(rng.below(10));
    pred[i] = static_cast<metrics::ClassId>(rng.below(10));
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::score_multiclass(truth, pred, 10));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_MulticlassMetrics)->Arg(4000);

}  // namespace

BENCHMARK_MAIN();
