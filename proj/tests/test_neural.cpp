#include <gtest/gtest.h>

#include <cmath>

#include "algotag/error.hpp"
#include "algotag/neural.hpp"

namespace algotag::nn {
namespace {

using features::SparseVector;
using features::TokenSequence;

Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  Tensor t({rows, cols});
  t.values = std::move(values);
  return t;
}

TEST(Activations, Basics) {
  EXPECT_EQ(relu(-1.0), 0.0);
  EXPECT_EQ(relu(2.5), 2.5);
  EXPECT_EQ(relu_grad(0.0), 0.0);
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_GT(sigmoid(-800.0), -1e-300);
  EXPECT_EQ(sigmoid(800.0), 1.0);
  const auto p = softmax(std::vector<double>{1000.0, 1000.0 + std::log(3.0)});
  EXPECT_NEAR(p[0], 0.25, 1e-12);
  EXPECT_NEAR(p[1], 0.75, 1e-12);
}

TEST(Losses, HandValues) {
  const auto a = matrix(1, 2, {0.0, std::log(3.0)});
  const auto y = matrix(1, 2, {0.0, 1.0});
  const auto ce = compute_loss(LossKind::kCrossEntropySoftmax, a, y);
  EXPECT_NEAR(ce.value, -std::log(0.75), 1e-12);
  EXPECT_NEAR(ce.grad[0], 0.25, 1e-12);
  EXPECT_NEAR(ce.grad[1], -0.25, 1e-12);

  const auto z = matrix(2, 1, {0.0, 0.0});
  const auto t = matrix(2, 1, {1.0, 0.0});
  const auto bce = compute_loss(LossKind::kBceSigmoid, z, t);
  EXPECT_NEAR(bce.value, std::log(2.0), 1e-12);
  EXPECT_NEAR(bce.grad[0], -0.25, 1e-12);
  EXPECT_NEAR(bce.grad[1], 0.25, 1e-12);
  const auto mse = compute_loss(LossKind::kMseSigmoid, z, t);
  EXPECT_NEAR(mse.value, 0.25, 1e-12);
  EXPECT_NEAR(mse.grad[0], 2 * -0.5 * 0.25 / 2, 1e-12);

  const auto big = compute_loss(LossKind::kBceSigmoid, matrix(1, 1, {-800.0}), matrix(1, 1, {1.0}));
  EXPECT_NEAR(big.value, 800.0, 1e-9);
  EXPECT_EQ(parse_loss(to_string(LossKind::kMseSigmoid)), LossKind::kMseSigmoid);
  EXPECT_THROW(parse_loss("hinge"), ParameterError);
  EXPECT_THROW(compute_loss(LossKind::kBceSigmoid, z, y), ParameterError);
}

TEST(Losses, GradientMatchesFiniteDifference) {
  Rng rng(2);
  for (auto kind : {LossKind::kCrossEntropySoftmax, LossKind::kBceSigmoid, LossKind::kMseSigmoid}) {
    Tensor a({3, 4}), y({3, 4});
    for (auto& v : a.values) v = rng.uniform(-3, 3);
    for (std::size_t i = 0; i < 3; ++i) y.at(i, rng.below(4)) = 1.0;
    const auto r = compute_loss(kind, a, y);
    for (std::size_t j = 0; j < a.size(); ++j) {
      auto plus = a, minus = a;
      plus[j] += 1e-6;
      minus[j] -= 1e-6;
      const double numeric =
          (compute_loss(kind, plus, y).value - compute_loss(kind, minus, y).value) / 2e-6;
      EXPECT_NEAR(r.grad[j], numeric, 1e-7) << to_string(kind);
    }
  }
}

TEST(Adam, FirstStepsByHand) {
  Tensor w({1});
  w[0] = 1.0;
  Tensor g({1});
  g[0] = 0.5;
  std::vector<Tensor*> params = {&w};
  std::vector<const Tensor*> cparams = {&w};
  std::vector<const Tensor*> grads = {&g};
  AdamState state({.learning_rate = 0.1}, cparams);
  adam_step(state, params, grads);
  // m = 0.05, v = 0.00025; bias-corrected 0.5 and 0.25.
  EXPECT_NEAR(w[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  g[0] = -1.0;
  adam_step(state, params, grads);
  const double m = 0.9 * 0.05 + 0.1 * -1.0;
  const double v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double m_hat = m / (1 - 0.81);
  const double v_hat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(w[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8) - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-14);
  EXPECT_EQ(state.step, 2u);
}

TEST(Xavier, Bounds) {
  const auto t = xavier_init({6, 4}, 3);
  const double bound = std::sqrt(6.0 / 10.0);
  for (double v : t.values) EXPECT_LE(std::abs(v), bound);
  const auto conv = xavier_init({8, 3, 5}, 3);
  EXPECT_EQ(conv.size(), 120u);
  const double conv_bound = std::sqrt(6.0 / (15.0 + 24.0));
  double largest = 0;
  for (double v : conv.values) largest = std::max(largest, std::abs(v));
  EXPECT_LE(largest, conv_bound);
  EXPECT_GT(largest, 0.5 * conv_bound);
  EXPECT_EQ(xavier_init({6, 4}, 3), t);
  EXPECT_THROW(xavier_init({6}, 3), ParameterError);
}

CnnModel hand_cnn() {
  CnnConfig config;
  config.vocab_size = 5;
  config.embedding_dim = 1;
  config.filters_per_width = 1;
  config.widths = {2};
  config.n_classes = 1;
  config.dropout = 0.0;
  auto model = CnnModel::create(config, 1);
  auto& p = model.params();
  p.embedding.values = {0.0, 0.0, 1.0, 2.0, -1.0};
  p.conv_weight[0].values = {1.0, 0.5};
  p.conv_bias[0].values = {-0.25};
  p.fc_weight.values = {2.0};
  p.fc_bias.values = {0.5};
  return model;
}

TEST(Cnn, HandComputedForward) {
  const auto model = hand_cnn();
  // Windows (1, 2) -> 2 and (2, -1) -> 1.5; peak 2 - 0.25 = 1.75.
  const std::vector<TokenSequence> batch = {{{2, 3, 4}, 3}, {{4, 4}, 2}, {{3, 1}, 1}};
  CnnTape tape;
  const auto out = model.forward(batch, false, nullptr, &tape);
  EXPECT_DOUBLE_EQ(out[0], 2.0 * 1.75 + 0.5);
  EXPECT_EQ(tape.items[0].argmax[0][0], 0u);
  // (-1, -1) -> -1.5 - 0.25, rectified to zero.
  EXPECT_DOUBLE_EQ(out[1], 0.5);
  // A short sequence is convolved over its padding up to the widest filter.
  EXPECT_DOUBLE_EQ(out[2], 2.0 * (2.0 - 0.25) + 0.5);
}

TEST(Cnn, HandComputedBackward) {
  const auto model = hand_cnn();
  const std::vector<TokenSequence> batch = {{{2, 3, 4}, 3}};
  CnnTape tape;
  model.forward(batch, false, nullptr, &tape);
  auto grads = model.params().zeros_like();
  model.backward(tape, matrix(1, 1, {1.0}), grads);
  EXPECT_DOUBLE_EQ(grads.fc_weight[0], 1.75);
  EXPECT_DOUBLE_EQ(grads.fc_bias[0], 1.0);
  EXPECT_DOUBLE_EQ(grads.conv_bias[0][0], 2.0);
  EXPECT_DOUBLE_EQ(grads.conv_weight[0][0], 2.0 * 1.0);
  EXPECT_DOUBLE_EQ(grads.conv_weight[0][1], 2.0 * 2.0);
  EXPECT_DOUBLE_EQ(grads.embedding[2], 2.0 * 1.0);
  EXPECT_DOUBLE_EQ(grads.embedding[3], 2.0 * 0.5);
  EXPECT_DOUBLE_EQ(grads.embedding[4], 0.0);
}

TEST(Cnn, TrailingPaddingBeyondLengthIsIgnored) {
  CnnConfig config;
  config.vocab_size = 12;
  config.embedding_dim = 4;
  config.filters_per_width = 3;
  config.n_classes = 3;
  const auto model = CnnModel::create(config, 7);
  const std::vector<TokenSequence> a = {{{2, 3, 4, 5, 6, 7}, 6}};
  const std::vector<TokenSequence> b = {{{2, 3, 4, 5, 6, 7, 1, 1, 1, 1}, 6}};
  EXPECT_EQ(model.forward(a, false, nullptr, nullptr), model.forward(b, false, nullptr, nullptr));
  const std::vector<TokenSequence> too_short = {{{2, 3}, 2}};
  EXPECT_THROW(model.forward(too_short, false, nullptr, nullptr), ParameterError);
  const std::vector<TokenSequence> bad_id = {{{2, 3, 40, 1, 1}, 3}};
  EXPECT_THROW(model.forward(bad_id, false, nullptr, nullptr), ParameterError);
}

TEST(Cnn, PadRowStartsAtZeroAndPretrainedRowsAreUsed) {
  CnnConfig config;
  config.vocab_size = 6;
  config.embedding_dim = 2;
  config.filters_per_width = 2;
  config.n_classes = 2;
  auto model = CnnModel::create(config, 3);
  EXPECT_EQ(model.params().embedding.at(1, 0), 0.0);
  EXPECT_EQ(model.params().embedding.at(1, 1), 0.0);

  features::EmbeddingMatrix m;
  m.rows = 6;
  m.dim = 2;
  m.values = {0.1, 0.2, 9, 9, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  m.provenance.assign(6, features::RowSource::kPretrained);
  const auto pre = CnnModel::create(config, 3, &m);
  EXPECT_EQ(pre.params().embedding.at(2, 1), 0.4);
  EXPECT_EQ(pre.params().embedding.at(1, 0), 0.0);
  m.dim = 3;
  EXPECT_THROW(CnnModel::create(config, 3, &m), ParameterError);
}

TEST(Cnn, JsonRoundTripIsBitExact) {
  CnnConfig config;
  config.vocab_size = 20;
  config.embedding_dim = 5;
  config.filters_per_width = 4;
  config.n_classes = 3;
  config.trainable_embeddings = false;
  const auto model = CnnModel::create(config, 11);
  const auto back = CnnModel::from_json(Json::parse(model.to_json().dump()));
  EXPECT_EQ(back.config().trainable_embeddings, false);
  const auto a = model.params().all();
  const auto b = back.params().all();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  auto broken = model.to_json();
  broken["config"]["embedding_dim"] = 6;
  EXPECT_THROW(CnnModel::from_json(broken), InputFormatError);
}

TEST(Cnn, DropoutOnlyInTraining) {
  CnnConfig config;
  config.vocab_size = 12;
  config.embedding_dim = 4;
  config.filters_per_width = 6;
  config.n_classes = 2;
  config.dropout = 0.5;
  const auto model = CnnModel::create(config, 4);
  const std::vector<TokenSequence> batch = {{{2, 3, 4, 5, 6, 7}, 6}};
  EXPECT_EQ(model.forward(batch, false, nullptr, nullptr), model.forward(batch, false, nullptr, nullptr));
  EXPECT_THROW(model.forward(batch, true, nullptr, nullptr), ParameterError);
  Rng rng(1);
  CnnTape tape;
  model.forward(batch, true, &rng, &tape);
  ASSERT_EQ(tape.items[0].mask.size(), 18u);
  for (double m : tape.items[0].mask) EXPECT_TRUE(m == 0.0 || m == 2.0);
}

struct GradCase {
  NetKind kind;
  LossKind loss;
  bool trainable;
};

class GradCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradCheck, AnalyticMatchesNumeric) {
  const auto c = GetParam();
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = grad_check({.kind = c.kind, .loss = c.loss, .trainable_embeddings = c.trainable}, seed);
    EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed;
    EXPECT_GT(r.parameters_checked, 10u);
    EXPECT_EQ(r.frozen_gradient_max, 0.0);
  }
}

INSTANTIATE_TEST_SUITE_P(
    Nets, GradCheck,
    ::testing::Values(GradCase{NetKind::kCnn, LossKind::kCrossEntropySoftmax, true},
                      GradCase{NetKind::kCnn, LossKind::kBceSigmoid, true},
                      GradCase{NetKind::kCnn, LossKind::kMseSigmoid, true},
                      GradCase{NetKind::kCnn, LossKind::kCrossEntropySoftmax, false},
                      GradCase{NetKind::kMlp, LossKind::kCrossEntropySoftmax, true},
                      GradCase{NetKind::kMlp, LossKind::kMseSigmoid, true},
                      GradCase{NetKind::kMlp, LossKind::kBceSigmoid, true}));

TEST(GradCheck, FrozenEmbeddingsAreNotChecked) {
  const auto trainable = grad_check({.trainable_embeddings = true}, 5);
  const auto frozen = grad_check({.trainable_embeddings = false}, 5);
  EXPECT_LT(frozen.parameters_checked, trainable.parameters_checked);
}

TEST(Training, CnnLearnsMarkerTokens) {
  CnnConfig config;
  config.vocab_size = 10;
  config.embedding_dim = 6;
  config.filters_per_width = 4;
  config.n_classes = 2;
  config.dropout = 0.2;
  auto model = CnnModel::create(config, 9);
  std::vector<TokenSequence> inputs;
  Tensor targets({40, 2});
  Rng rng(3);
  for (std::size_t i = 0; i < 40; ++i) {
    TokenSequence s;
    for (int t = 0; t < 8; ++t) s.ids.push_back(4 + static_cast<std::int32_t>(rng.below(6)));
    s.ids[rng.below(8)] = i % 2 == 0 ? 2 : 3;
    s.length = 8;
    inputs.push_back(s);
    targets.at(i, i % 2) = 1.0;
  }
  const auto trace = train_cnn(model, inputs, targets,
                               {.epochs = 30, .batch_size = 8, .adam = {.learning_rate = 0.01}, .seed = 1});
  ASSERT_EQ(trace.epoch_loss.size(), 30u);
  EXPECT_LT(trace.epoch_loss.back(), 0.5 * trace.epoch_loss.front());
  const auto out = predict_cnn(model, inputs, 7);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_GT(out.at(i, i % 2), out.at(i, 1 - i % 2)) << i;

  auto again = CnnModel::create(config, 9);
  const auto trace2 = train_cnn(again, inputs, targets,
                                {.epochs = 30, .batch_size = 8, .adam = {.learning_rate = 0.01}, .seed = 1});
  EXPECT_EQ(trace.epoch_loss, trace2.epoch_loss);
}

TEST(Training, FrozenEmbeddingsStayFixed) {
  CnnConfig config;
  config.vocab_size = 8;
  config.embedding_dim = 3;
  config.filters_per_width = 2;
  config.n_classes = 2;
  config.trainable_embeddings = false;
  auto model = CnnModel::create(config, 2);
  const auto before = model.params().embedding;
  const std::vector<TokenSequence> inputs = {{{2, 3, 4, 5, 6}, 5}, {{7, 6, 5, 4, 3}, 5}};
  const auto targets = matrix(2, 2, {1, 0, 0, 1});
  train_cnn(model, inputs, targets, {.epochs = 3, .batch_size = 2});
  EXPECT_EQ(model.params().embedding, before);
}

TEST(Training, MlpLearnsAndPredictsInChunks) {
  auto model = MlpModel::create({.input_dim = 6, .hidden = {8}, .n_classes = 3}, 5);
  std::vector<SparseVector> inputs;
  Tensor targets({30, 3});
  for (std::uint32_t i = 0; i < 30; ++i) {
    inputs.push_back(SparseVector{{{i % 3, 1.0}, {3 + (i % 3), 0.5}}});
    targets.at(i, i % 3) = 1.0;
  }
  const auto trace = train_mlp(model, inputs, targets,
                               {.epochs = 40, .batch_size = 5, .adam = {.learning_rate = 0.02}, .seed = 2});
  EXPECT_LT(trace.epoch_loss.back(), 0.2);
  const auto all = predict_mlp(model, inputs, 64);
  const auto chunked = predict_mlp(model, inputs, 4);
  EXPECT_EQ(all, chunked);
  const auto back = MlpModel::from_json(Json::parse(model.to_json().dump()));
  EXPECT_EQ(predict_mlp(back, inputs), all);
}

TEST(Training, NonFiniteLossRaisesDivergence) {
  auto model = MlpModel::create({.input_dim = 4, .hidden = {6, 6}, .n_classes = 2}, 5);
  std::vector<SparseVector> inputs;
  Tensor targets({8, 2});
  for (std::uint32_t i = 0; i < 8; ++i) {
    inputs.push_back(SparseVector{{{i % 4, 3.0}}});
    targets.at(i, i % 2) = 1.0;
  }
  try {
    train_mlp(model, inputs, targets, {.epochs = 10, .batch_size = 2, .adam = {.learning_rate = 1e300}});
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_LT(e.epoch(), 10u);
    EXPECT_EQ(e.exit_code(), 4);
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

}  // namespace
}  // namespace algotag::nn
