#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "algotag/datasets.hpp"
#include "algotag/serialization.hpp"

namespace algotag::metrics {

using ClassId = std::uint32_t;
using datasets::LabelSet;

// Multiclass metrics. Inputs must be non-empty and of equal length.
double accuracy(std::span<const ClassId> truth, std::span<const ClassId> pred);
// Pooled TP/FP/FN over classes; equals accuracy for single-label data.
double f1_micro(std::span<const ClassId> truth, std::span<const ClassId> pred);
// A class with no support and no predictions scores F1 = 0.
std::vector<double> per_class_f1(std::span<const ClassId> truth, std::span<const ClassId> pred,
                                 std::size_t n_classes);
// weighted = false: uniform mean over all n_classes.
// weighted = true: mean weighted by true-class support.
double f1_macro(std::span<const ClassId> truth, std::span<const ClassId> pred, std::size_t n_classes,
                bool weighted);

// Multilabel metrics over label sets drawn from a catalog of n_labels.
double f1_micro_multilabel(std::span<const LabelSet> truth, std::span<const LabelSet> pred);
double f1_macro_multilabel(std::span<const LabelSet> truth, std::span<const LabelSet> pred,
                           std::size_t n_labels);
// Sum of symmetric differences over N * n_labels.
double hamming_loss(std::span<const LabelSet> truth, std::span<const LabelSet> pred,
                    std::size_t n_labels);

// Rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> counts;

  std::size_t at(std::size_t row, std::size_t col) const { return counts[row * n + col]; }
  std::size_t total() const;
  std::size_t trace() const;
  std::vector<double> row_normalized() const;
  Json to_json(const std::vector<std::string>& names) const;
  // Tab-separated text: header row of class names, then one row per true class.
  std::string to_text(const std::vector<std::string>& names, bool normalized) const;
};

ConfusionMatrix confusion_matrix(std::span<const ClassId> truth, std::span<const ClassId> pred,
                                 std::size_t n_classes);

// Scores restricted to a set of catalog labels. Empty optionals mean no item
// fell inside the category.
struct CategoryScore {
  std::size_t items = 0;
  std::optional<double> micro_f1;
  std::optional<double> macro_f1;
  std::optional<double> weighted_macro_f1;  // multiclass only

  Json to_json() const;
};

// Items whose true class is in the category; macro averages run over the
// category's classes.
CategoryScore category_scores(std::span<const ClassId> truth, std::span<const ClassId> pred,
                              const std::set<ClassId>& category);
// Every set is intersected with the category and items with an empty restricted
// truth are dropped.
CategoryScore category_scores(std::span<const LabelSet> truth, std::span<const LabelSet> pred,
                              const std::set<ClassId>& category);

// Metric values for one evaluation unit (a fold or a pooled run).
struct MetricValues {
  std::size_t n_items = 0;
  std::map<std::string, double> values;

  bool operator==(const MetricValues&) const = default;
};

MetricValues score_multiclass(std::span<const ClassId> truth, std::span<const ClassId> pred,
                              std::size_t n_classes);
MetricValues score_multilabel(std::span<const LabelSet> truth, std::span<const LabelSet> pred,
                              std::size_t n_labels);

struct MetricsReport {
  datasets::Kind kind = datasets::Kind::kMulticlass;
  std::vector<MetricValues> folds;
  // Metrics over the concatenated out-of-fold predictions.
  MetricValues pooled;

  // Unweighted mean of each metric across folds.
  std::map<std::string, double> mean() const;

  bool operator==(const MetricsReport&) const = default;

  Json to_json() const;
  static MetricsReport from_json(const Json& json);
};

}  // namespace algotag::metrics
