#include "algotag/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "algotag/error.hpp"

namespace algotag::metrics {
namespace {

template <typename T>
void check_pair(std::span<const T> truth, std::span<const T> pred, bool allow_empty) {
  if (truth.size() != pred.size()) {
    throw ParameterError("truth has " + std::to_string(truth.size()) + " items but predictions have " +
                         std::to_string(pred.size()));
  }
  if (!allow_empty && truth.empty()) throw ParameterError("cannot score an empty prediction list");
}

double f1_from_counts(double tp, double fp, double fn) {
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

struct Counts {
  std::vector<double> tp, fp, fn, support;
  explicit Counts(std::size_t n) : tp(n, 0), fp(n, 0), fn(n, 0), support(n, 0) {}
};

Counts multiclass_counts(std::span<const ClassId> truth, std::span<const ClassId> pred, std::size_t n) {
  Counts c(n);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n || pred[i] >= n) throw ParameterError("class id outside the catalog");
    c.support[truth[i]] += 1;
    if (truth[i] == pred[i]) {
      c.tp[truth[i]] += 1;
    } else {
      c.fn[truth[i]] += 1;
      c.fp[pred[i]] += 1;
    }
  }
  return c;
}

Counts multilabel_counts(std::span<const LabelSet> truth, std::span<const LabelSet> pred, std::size_t n) {
  Counts c(n);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& t = truth[i];
    const auto& p = pred[i];
    for (auto label : t) {
      if (label >= n) throw ParameterError("label outside the catalog");
      c.support[label] += 1;
      if (std::binary_search(p.begin(), p.end(), label)) {
        c.tp[label] += 1;
      } else {
        c.fn[label] += 1;
      }
    }
    for (auto label : p) {
      if (label >= n) throw ParameterError("label outside the catalog");
      if (!std::binary_search(t.begin(), t.end(), label)) c.fp[label] += 1;
    }
  }
  return c;
}

double mean_f1(const Counts& c, const std::vector<ClassId>& classes, bool weighted) {
  double sum = 0.0;
  double weight = 0.0;
  for (auto k : classes) {
    const double f1 = f1_from_counts(c.tp[k], c.fp[k], c.fn[k]);
    const double w = weighted ? c.support[k] : 1.0;
    sum += w * f1;
    weight += w;
  }
  return weight == 0.0 ? 0.0 : sum / weight;
}

std::vector<ClassId> all_classes(std::size_t n) {
  std::vector<ClassId> classes(n);
  for (std::size_t i = 0; i < n; ++i) classes[i] = static_cast<ClassId>(i);
  return classes;
}

std::size_t max_class(std::span<const ClassId> a, std::span<const ClassId> b) {
  ClassId m = 0;
  for (auto v : a) m = std::max(m, v);
  for (auto v : b) m = std::max(m, v);
  return static_cast<std::size_t>(m) + 1;
}

}  // namespace

double accuracy(std::span<const ClassId> truth, std::span<const ClassId> pred) {
  check_pair(truth, pred, false);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double f1_micro(std::span<const ClassId> truth, std::span<const ClassId> pred) {
  check_pair(truth, pred, false);
  const auto c = multiclass_counts(truth, pred, max_class(truth, pred));
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < c.tp.size(); ++k) {
    tp += c.tp[k];
    fp += c.fp[k];
    fn += c.fn[k];
  }
  return f1_from_counts(tp, fp, fn);
}

std::vector<double> per_class_f1(std::span<const ClassId> truth, std::span<const ClassId> pred,
                                 std::size_t n_classes) {
  check_pair(truth, pred, false);
  const auto c = multiclass_counts(truth, pred, n_classes);
  std::vector<double> f1(n_classes);
  for (std::size_t k = 0; k < n_classes; ++k) f1[k] = f1_from_counts(c.tp[k], c.fp[k], c.fn[k]);
  return f1;
}

double f1_macro(std::span<const ClassId> truth, std::span<const ClassId> pred, std::size_t n_classes,
                bool weighted) {
  check_pair(truth, pred, false);
  return mean_f1(multiclass_counts(truth, pred, n_classes), all_classes(n_classes), weighted);
}

double f1_micro_multilabel(std::span<const LabelSet> truth, std::span<const LabelSet> pred) {
  check_pair(truth, pred, true);
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (auto label : truth[i]) {
      if (std::binary_search(pred[i].begin(), pred[i].end(), label)) {
        tp += 1;
      } else {
        fn += 1;
      }
    }
    for (auto label : pred[i]) {
      if (!std::binary_search(truth[i].begin(), truth[i].end(), label)) fp += 1;
    }
  }
  return f1_from_counts(tp, fp, fn);
}

double f1_macro_multilabel(std::span<const LabelSet> truth, std::span<const LabelSet> pred,
                           std::size_t n_labels) {
  check_pair(truth, pred, true);
  if (n_labels == 0) throw ParameterError("label catalog is empty");
  return mean_f1(multilabel_counts(truth, pred, n_labels), all_classes(n_labels), false);
}

double hamming_loss(std::span<const LabelSet> truth, std::span<const LabelSet> pred,
                    std::size_t n_labels) {
  check_pair(truth, pred, false);
  if (n_labels == 0) throw ParameterError("label catalog is empty");
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    LabelSet diff;
    std::set_symmetric_difference(truth[i].begin(), truth[i].end(), pred[i].begin(), pred[i].end(),
                                  std::back_inserter(diff));
    mismatches += diff.size();
  }
  return static_cast<double>(mismatches) /
         (static_cast<double>(truth.size()) * static_cast<double>(n_labels));
}

// ---------------------------------------------------------------------------

std::size_t ConfusionMatrix::total() const {
  std::size_t sum = 0;
  for (auto v : counts) sum += v;
  return sum;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t sum = 0;
  for (std::size_t i = 0; i < n; ++i) sum += at(i, i);
  return sum;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t row_total = 0;
    for (std::size_t c = 0; c < n; ++c) row_total += at(r, c);
    if (row_total == 0) continue;
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = static_cast<double>(at(r, c)) / static_cast<double>(row_total);
    }
  }
  return out;
}

Json ConfusionMatrix::to_json(const std::vector<std::string>& names) const {
  Json rows = Json::array();
  for (std::size_t r = 0; r < n; ++r) {
    rows.push_back(std::vector<std::size_t>(counts.begin() + static_cast<std::ptrdiff_t>(r * n),
                                            counts.begin() + static_cast<std::ptrdiff_t>((r + 1) * n)));
  }
  return {{"classes", names}, {"counts", rows}};
}

std::string ConfusionMatrix::to_text(const std::vector<std::string>& names, bool normalized) const {
  std::ostringstream out;
  out << "true\\pred";
  for (const auto& name : names) out << '\t' << name;
  out << '\n';
  const auto norm = row_normalized();
  for (std::size_t r = 0; r < n; ++r) {
    out << names[r];
    for (std::size_t c = 0; c < n; ++c) {
      out << '\t';
      if (normalized) {
        out << std::fixed << std::setprecision(4) << norm[r * n + c];
      } else {
        out << at(r, c);
      }
    }
    out << '\n';
  }
  return out.str();
}

ConfusionMatrix confusion_matrix(std::span<const ClassId> truth, std::span<const ClassId> pred,
                                 std::size_t n_classes) {
  check_pair(truth, pred, true);
  ConfusionMatrix m;
  m.n = n_classes;
  m.counts.assign(n_classes * n_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes || pred[i] >= n_classes) throw ParameterError("class id outside the catalog");
    ++m.counts[truth[i] * n_classes + pred[i]];
  }
  return m;
}

// ---------------------------------------------------------------------------

Json CategoryScore::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"items", items},
          {"f1_micro", opt(micro_f1)},
          {"f1_macro", opt(macro_f1)},
          {"f1_weighted_macro", opt(weighted_macro_f1)}};
}

CategoryScore category_scores(std::span<const ClassId> truth, std::span<const ClassId> pred,
                              const std::set<ClassId>& category) {
  check_pair(truth, pred, true);
  if (category.empty()) throw ParameterError("category is empty");
  std::vector<ClassId> t, p;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (category.contains(truth[i])) {
      t.push_back(truth[i]);
      p.push_back(pred[i]);
    }
  }
  CategoryScore score;
  score.items = t.size();
  if (t.empty()) return score;
  const std::size_t n = std::max(max_class(t, p), static_cast<std::size_t>(*category.rbegin()) + 1);
  const auto counts = multiclass_counts(t, p, n);
  const std::vector<ClassId> classes(category.begin(), category.end());
  score.micro_f1 = accuracy(t, p);
  score.macro_f1 = mean_f1(counts, classes, false);
  score.weighted_macro_f1 = mean_f1(counts, classes, true);
  return score;
}

CategoryScore category_scores(std::span<const LabelSet> truth, std::span<const LabelSet> pred,
                              const std::set<ClassId>& category) {
  check_pair(truth, pred, true);
  if (category.empty()) throw ParameterError("category is empty");
  auto restrict = [&](const LabelSet& s) {
    LabelSet out;
    for (auto label : s) {
      if (category.contains(label)) out.push_back(label);
    }
    return out;
  };
  std::vector<LabelSet> t, p;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto rt = restrict(truth[i]);
    if (rt.empty()) continue;
    t.push_back(std::move(rt));
    p.push_back(restrict(pred[i]));
  }
  CategoryScore score;
  score.items = t.size();
  if (t.empty()) return score;
  const std::size_t n = static_cast<std::size_t>(*category.rbegin()) + 1;
  const std::vector<ClassId> classes(category.begin(), category.end());
  score.micro_f1 = f1_micro_multilabel(t, p);
  score.macro_f1 = mean_f1(multilabel_counts(t, p, n), classes, false);
  return score;
}

// ---------------------------------------------------------------------------

MetricValues score_multiclass(std::span<const ClassId> truth, std::span<const ClassId> pred,
                              std::size_t n_classes) {
  MetricValues v;
  v.n_items = truth.size();
  v.values["accuracy"] = accuracy(truth, pred);
  v.values["f1_macro"] = f1_macro(truth, pred, n_classes, false);
  v.values["f1_weighted_macro"] = f1_macro(truth, pred, n_classes, true);
  return v;
}

MetricValues score_multilabel(std::span<const LabelSet> truth, std::span<const LabelSet> pred,
                              std::size_t n_labels) {
  MetricValues v;
  v.n_items = truth.size();
  v.values["hamming_loss"] = hamming_loss(truth, pred, n_labels);
  v.values["f1_micro"] = f1_micro_multilabel(truth, pred);
  v.values["f1_macro"] = f1_macro_multilabel(truth, pred, n_labels);
  return v;
}

std::map<std::string, double> MetricsReport::mean() const {
  std::map<std::string, double> out;
  if (folds.empty()) return out;
  for (const auto& fold : folds) {
    for (const auto& [name, value] : fold.values) out[name] += value;
  }
  for (auto& [name, value] : out) value /= static_cast<double>(folds.size());
  return out;
}

namespace {

Json values_to_json(const MetricValues& v) {
  Json values = Json::object();
  for (const auto& [name, value] : v.values) values[name] = value;
  return {{"n_items", v.n_items}, {"values", values}};
}

MetricValues values_from_json(const Json& json) {
  MetricValues v;
  v.n_items = json.at("n_items").get<std::size_t>();
  for (const auto& [name, value] : json.at("values").items()) v.values[name] = value.get<double>();
  return v;
}

}  // namespace

Json MetricsReport::to_json() const {
  Json fold_json = Json::array();
  for (const auto& fold : folds) fold_json.push_back(values_to_json(fold));
  Json mean_json = Json::object();
  for (const auto& [name, value] : mean()) mean_json[name] = value;
  return {{"kind", datasets::to_string(kind)},
          {"folds", fold_json},
          {"mean", mean_json},
          {"pooled", values_to_json(pooled)}};
}

MetricsReport MetricsReport::from_json(const Json& json) {
  MetricsReport report;
  report.kind = datasets::parse_kind(json.at("kind").get<std::string>());
  for (const auto& fold : json.at("folds")) report.folds.push_back(values_from_json(fold));
  report.pooled = values_from_json(json.at("pooled"));
  return report;
}

}  // namespace algotag::metrics
