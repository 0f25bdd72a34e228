#include <gtest/gtest.h>

#include <cmath>

#include "algotag/error.hpp"
#include "algotag/linear_models.hpp"
#include "algotag/rng.hpp"

namespace algotag::linear {
namespace {

SparseVector sv(std::initializer_list<features::SparseEntry> entries) { return SparseVector{entries}; }

TEST(Decode, ArgmaxAndMultilabel) {
  const std::vector<double> tied = {0.2, 0.7, 0.7};
  EXPECT_EQ(argmax(tied), 1u);
  EXPECT_EQ(decode_multiclass(tied), 1u);
  EXPECT_EQ(decode_multilabel(std::vector<double>{-1.0, 0.5, 0.0, 2.0}), (LabelSet{1, 3}));
  EXPECT_EQ(decode_multilabel(std::vector<double>{-3.0, -0.5, -2.0}), (LabelSet{1}));
  EXPECT_EQ(decode_multilabel(std::vector<double>{0.0, 0.0}), (LabelSet{0}));
  EXPECT_THROW(argmax(std::vector<double>{}), ParameterError);
}

TEST(NaiveBayes, HandComputedTables) {
  const std::vector<SparseVector> docs = {sv({{0, 3}, {1, 1}}), sv({{1, 2}})};
  const std::vector<ClassId> labels = {0, 1};
  const auto m = train_mnb(docs, labels, 2, 2, 1.0);
  EXPECT_NEAR(std::exp(m.log_prior[0]), 0.5, 1e-15);
  EXPECT_NEAR(std::exp(m.class_row(0)[0]), 4.0 / 6.0, 1e-15);
  EXPECT_NEAR(std::exp(m.class_row(0)[1]), 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(std::exp(m.class_row(1)[0]), 1.0 / 4.0, 1e-15);
  EXPECT_NEAR(std::exp(m.class_row(1)[1]), 3.0 / 4.0, 1e-15);

  // Posterior of "t0 t1": class 0 gets 0.5 * 2/3 * 1/3, class 1 gets 0.5 * 1/4 * 3/4.
  const auto scores = predict_mnb_scores(m, sv({{0, 1}, {1, 1}}));
  const double p0 = 0.5 * (2.0 / 3.0) * (1.0 / 3.0);
  const double p1 = 0.5 * 0.25 * 0.75;
  EXPECT_NEAR(scores[0] - scores[1], std::log(p0 / p1), 1e-12);
  EXPECT_EQ(argmax(scores), 0u);

  const auto half = train_mnb(docs, labels, 2, 2, 0.5);
  EXPECT_NEAR(std::exp(half.class_row(1)[0]), 0.5 / 3.0, 1e-15);
  EXPECT_THROW(train_mnb(docs, labels, 2, 2, 0.0), ParameterError);
  EXPECT_THROW(train_mnb(docs, labels, 3, 2, 1.0), ParameterError);
  EXPECT_THROW(predict_mnb_scores(m, sv({{5, 1}})), ParameterError);
}

TEST(NaiveBayes, WorkedExample) {
  // d1 = "x x y" -> A, d2 = "y z" -> B over the vocabulary {x, y, z}.
  const std::vector<features::TokenList> docs = {{"x", "x", "y"}, {"y", "z"}};
  const auto vocab = features::NgramVocabulary::fit(docs, {.max_order = 1, .min_count = 1});
  std::vector<SparseVector> x;
  for (const auto& d : docs) x.push_back(vocab.vectorize(d));
  const std::vector<ClassId> labels = {0, 1};
  const auto m = train_mnb(x, labels, 2, vocab.size(), 1.0);
  const auto id = *vocab.lookup("x");
  EXPECT_EQ(m.likelihood(0, id), 0.5);
  EXPECT_EQ(m.likelihood(1, id), 0.2);
  EXPECT_NEAR(std::exp(m.class_row(0)[id]), 0.5, 1e-15);
  const auto back = NaiveBayesModel::from_json(Json::parse(m.to_json().dump()));
  EXPECT_EQ(back.likelihood(1, id), 0.2);
}

TEST(NaiveBayes, RandomAgainstProductFormula) {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t classes = 2 + rng.below(3);
    const std::size_t features = 2 + rng.below(6);
    std::vector<SparseVector> docs;
    std::vector<ClassId> labels;
    for (std::size_t i = 0; i < 20; ++i) {
      SparseVector d;
      for (std::uint32_t f = 0; f < features; ++f) {
        if (rng.below(2) == 0) d.entries.push_back({f, 1.0 + static_cast<double>(rng.below(3))});
      }
      docs.push_back(d);
      labels.push_back(static_cast<ClassId>(i % classes));
    }
    const double alpha = 0.25 + rng.uniform();
    const auto m = train_mnb(docs, labels, classes, features, alpha);
    const auto& probe = docs[rng.below(docs.size())];

    std::vector<double> posterior(classes);
    for (ClassId c = 0; c < classes; ++c) {
      std::vector<double> counts(features, 0.0);
      double docs_in_class = 0;
      for (std::size_t i = 0; i < docs.size(); ++i) {
        if (labels[i] != c) continue;
        docs_in_class += 1;
        for (const auto& e : docs[i].entries) counts[e.id] += e.value;
      }
      double total = 0;
      for (double v : counts) total += v;
      double p = docs_in_class / static_cast<double>(docs.size());
      for (const auto& e : probe.entries) {
        p *= std::pow((counts[e.id] + alpha) / (total + alpha * static_cast<double>(features)), e.value);
      }
      posterior[c] = p;
    }
    const auto scores = predict_mnb_scores(m, probe);
    for (ClassId c = 1; c < classes; ++c) {
      EXPECT_NEAR(scores[c] - scores[0], std::log(posterior[c] / posterior[0]), 1e-9);
    }
  }
}

TEST(NaiveBayes, MultilabelMarginsAndJson) {
  const std::vector<SparseVector> docs = {sv({{0, 2}}), sv({{1, 2}}), sv({{0, 1}, {1, 1}}), sv({{2, 1}})};
  const std::vector<LabelSet> labels = {{0}, {1}, {0, 1}, {}};
  const auto m = train_mnb_multilabel(docs, labels, 2, 3, 1.0);
  ASSERT_EQ(m.per_label.size(), 2u);
  const auto margins = m.margins(sv({{0, 3}}));
  const auto direct = predict_mnb_scores(m.per_label[0], sv({{0, 3}}));
  EXPECT_DOUBLE_EQ(margins[0], direct[1] - direct[0]);
  EXPECT_EQ(m.predict(sv({{0, 3}})), (LabelSet{0}));
  EXPECT_EQ(m.predict(sv({{1, 3}})), (LabelSet{1}));

  const auto back = MultilabelNaiveBayes::from_json(Json::parse(m.to_json().dump()));
  EXPECT_EQ(back.margins(sv({{2, 1}})), m.margins(sv({{2, 1}})));
  const std::vector<LabelSet> all = {{0}, {0}, {0}, {0}};
  EXPECT_THROW(train_mnb_multilabel(docs, all, 1, 3, 1.0), ParameterError);
}

// Separable blobs on two features plus a noise feature.
struct Blobs {
  std::vector<SparseVector> x;
  std::vector<std::int8_t> y;
};

Blobs blobs(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Blobs b;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    b.x.push_back(sv({{0, (pos ? 2.0 : 0.2) + 0.3 * rng.uniform()},
                      {1, (pos ? 0.2 : 2.0) + 0.3 * rng.uniform()},
                      {2, rng.uniform()}}));
    b.y.push_back(pos ? 1 : -1);
  }
  return b;
}

// Full-batch projected subgradient descent with iterate averaging.
double oracle_min_objective(const Blobs& b, double reg) {
  std::vector<double> w(4, 0.0), avg(4, 0.0);
  const std::size_t steps = 20000;
  for (std::size_t t = 1; t <= steps; ++t) {
    std::vector<double> g = {reg * w[0], reg * w[1], reg * w[2], reg * w[3]};
    for (std::size_t i = 0; i < b.x.size(); ++i) {
      double f = w[3];
      for (const auto& e : b.x[i].entries) f += w[e.id] * e.value;
      if (b.y[i] * f < 1.0) {
        for (const auto& e : b.x[i].entries) g[e.id] -= b.y[i] * e.value / static_cast<double>(b.x.size());
        g[3] -= b.y[i] / static_cast<double>(b.x.size());
      }
    }
    const double eta = 1.0 / (reg * static_cast<double>(t));
    for (int j = 0; j < 4; ++j) w[j] -= eta * g[j];
    for (int j = 0; j < 4; ++j) avg[j] += (w[j] - avg[j]) / static_cast<double>(t);
  }
  BinaryLinearModel m{{avg[0], avg[1], avg[2]}, avg[3]};
  return svm_objective(m, b.x, b.y, reg);
}

TEST(Svm, SeparatesAndApproachesTheOptimum) {
  const auto b = blobs(3, 40);
  const double reg = 0.01;
  const auto m = train_binary_svm(b.x, b.y, 3, {.reg = reg, .epochs = 200, .seed = 4});
  for (std::size_t i = 0; i < b.x.size(); ++i) EXPECT_GT(b.y[i] * m.decision_value(b.x[i]), 0.0);
  const double objective = svm_objective(m, b.x, b.y, reg);
  const double best = oracle_min_objective(b, reg);
  EXPECT_LT(objective, 1.0);
  EXPECT_LT(objective, best + 0.05) << "oracle " << best;
  double norm2 = m.bias * m.bias;
  for (double w : m.weights) norm2 += w * w;
  EXPECT_LE(std::sqrt(norm2), 1.0 / std::sqrt(reg) + 1e-9);
}

TEST(Svm, DeterministicPerSeed) {
  const auto b = blobs(5, 30);
  const SvmOptions o{.reg = 0.1, .epochs = 5, .seed = 9};
  const auto a = train_binary_svm(b.x, b.y, 3, o);
  const auto c = train_binary_svm(b.x, b.y, 3, o);
  EXPECT_EQ(a.weights, c.weights);
  EXPECT_EQ(a.bias, c.bias);
  EXPECT_THROW(train_binary_svm(b.x, b.y, 3, {.reg = 0.0}), ParameterError);
  EXPECT_THROW(train_binary_svm(b.x, b.y, 2, o), ParameterError);
}

TEST(Svm, OneVersusRest) {
  std::vector<SparseVector> x;
  std::vector<LabelSet> y;
  for (std::uint32_t i = 0; i < 30; ++i) {
    const std::uint32_t c = i % 3;
    x.push_back(sv({{c, 1.0}, {3, 0.5}}));
    y.push_back({c});
  }
  const auto clf = train_linear_ovr(x, y, 3, 4, OvrMode::kMulticlass, {.reg = 0.01, .epochs = 30, .seed = 1});
  for (std::uint32_t c = 0; c < 3; ++c) EXPECT_EQ(decode_linear(clf, sv({{c, 1.0}})), (LabelSet{c}));
  const auto back = LinearClassifier::from_json(Json::parse(clf.to_json().dump()));
  EXPECT_EQ(back.decision_values(x[4]), clf.decision_values(x[4]));

  auto bad = y;
  bad[0] = {0, 1};
  EXPECT_THROW(train_linear_ovr(x, bad, 3, 4, OvrMode::kMulticlass, {}), ParameterError);
  const auto ml = train_linear_ovr(x, bad, 3, 4, OvrMode::kMultilabel, {.reg = 0.01, .epochs = 30, .seed = 1});
  EXPECT_EQ(ml.mode, OvrMode::kMultilabel);
  EXPECT_THROW(train_linear_ovr(x, y, 4, 4, OvrMode::kMulticlass, {}), ParameterError);
}

}  // namespace
}  // namespace algotag::linear
