#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "algotag/datasets.hpp"
#include "algotag/features.hpp"
#include "algotag/serialization.hpp"

namespace algotag::linear {

using ClassId = std::uint32_t;
using datasets::LabelSet;
using features::SparseVector;

// Index of the largest value; ties go to the lowest index.
ClassId argmax(std::span<const double> values);

// Multiclass one-vs-rest decode: argmax.
ClassId decode_multiclass(std::span<const double> decision_values);
// Multilabel decode: every class with a positive value, or the argmax class
// alone when none is positive.
LabelSet decode_multilabel(std::span<const double> decision_values);

// ---------------------------------------------------------------------------
// Multinomial naive Bayes

struct NaiveBayesModel {
  double alpha = 1.0;
  std::size_t n_features = 0;
  std::vector<double> log_prior;       // per class
  std::vector<double> log_likelihood;  // n_classes x n_features, row-major
  std::vector<double> counts;          // summed feature values, same layout
  std::vector<double> totals;          // per class

  std::size_t n_classes() const noexcept { return log_prior.size(); }
  std::span<const double> class_row(ClassId c) const {
    return {log_likelihood.data() + static_cast<std::size_t>(c) * n_features, n_features};
  }
  // P(t | c) evaluated directly from the counts.
  double likelihood(ClassId c, std::size_t t) const;

  Json to_json() const;
  static NaiveBayesModel from_json(const Json& json);
};

// log P(c) = ln(N_c / N); log P(t | c) = ln((count_ct + alpha) / (sum_t count_ct + alpha * V)).
NaiveBayesModel train_mnb(std::span<const SparseVector> documents, std::span<const ClassId> labels,
                          std::size_t n_classes, std::size_t n_features, double alpha = 1.0);

// Per-class log-posterior up to a shared constant.
std::vector<double> predict_mnb_scores(const NaiveBayesModel& model, const SparseVector& document);

// One binary model per label (class 0 = absent, class 1 = present).
struct MultilabelNaiveBayes {
  std::vector<NaiveBayesModel> per_label;

  // Log-odds of presence for each label.
  std::vector<double> margins(const SparseVector& document) const;
  LabelSet predict(const SparseVector& document) const;

  Json to_json() const;
  static MultilabelNaiveBayes from_json(const Json& json);
};

MultilabelNaiveBayes train_mnb_multilabel(std::span<const SparseVector> documents,
                                          std::span<const LabelSet> labels, std::size_t n_labels,
                                          std::size_t n_features, double alpha = 1.0);

// ---------------------------------------------------------------------------
// Linear SVM

enum class OvrMode { kMulticlass, kMultilabel };

struct SvmOptions {
  double reg = 1e-3;  // lambda in lambda/2 |w|^2 + mean hinge
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
};

struct BinaryLinearModel {
  std::vector<double> weights;
  double bias = 0.0;

  double decision_value(const SparseVector& x) const;
};

// Stochastic subgradient descent on the L2-regularized hinge loss with step
// 1/(lambda t) and projection onto the ball of radius 1/sqrt(lambda). The bias
// is an extra constant feature and is regularized with the weights. `targets`
// holds +1 / -1.
BinaryLinearModel train_binary_svm(std::span<const SparseVector> documents,
                                   std::span<const std::int8_t> targets, std::size_t n_features,
                                   const SvmOptions& options);

// Mean hinge loss plus the regularizer, for diagnostics and tests.
double svm_objective(const BinaryLinearModel& model, std::span<const SparseVector> documents,
                     std::span<const std::int8_t> targets, double reg);

struct LinearClassifier {
  OvrMode mode = OvrMode::kMulticlass;
  double reg = 0.0;
  std::size_t n_features = 0;
  std::vector<BinaryLinearModel> per_class;

  std::size_t n_classes() const noexcept { return per_class.size(); }
  std::vector<double> decision_values(const SparseVector& x) const;

  Json to_json() const;
  static LinearClassifier from_json(const Json& json);
};

// Each class trains against all others with the same seed, so the classes
// see an identical sample order.
LinearClassifier train_linear_ovr(std::span<const SparseVector> documents,
                                  std::span<const LabelSet> labels, std::size_t n_classes,
                                  std::size_t n_features, OvrMode mode, const SvmOptions& options);

// Multiclass mode returns a single-element set.
LabelSet decode_linear(const LinearClassifier& classifier, const SparseVector& x);

}  // namespace algotag::linear
