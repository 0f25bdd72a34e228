#include "algotag/linear_models.hpp"

#include <algorithm>
#include <cmath>

#include "algotag/error.hpp"
#include "algotag/rng.hpp"

namespace algotag::linear {
namespace {

void check_dimension(const SparseVector& x, std::size_t n_features) {
  if (x.extent() > n_features) {
    throw ParameterError("feature id " + std::to_string(x.extent() - 1) + " outside a model with " +
                         std::to_string(n_features) + " features");
  }
}

}  // namespace

ClassId argmax(std::span<const double> values) {
  if (values.empty()) throw ParameterError("argmax of an empty score vector");
  ClassId best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<ClassId>(i);
  }
  return best;
}

ClassId decode_multiclass(std::span<const double> decision_values) { return argmax(decision_values); }

LabelSet decode_multilabel(std::span<const double> decision_values) {
  LabelSet out;
  for (std::size_t i = 0; i < decision_values.size(); ++i) {
    if (decision_values[i] > 0.0) out.push_back(static_cast<ClassId>(i));
  }
  if (out.empty()) out.push_back(argmax(decision_values));
  return out;
}

// ---------------------------------------------------------------------------
// Naive Bayes

NaiveBayesModel train_mnb(std::span<const SparseVector> documents, std::span<const ClassId> labels,
                          std::size_t n_classes, std::size_t n_features, double alpha) {
  if (!(alpha > 0.0)) throw ParameterError("smoothing alpha must be positive");
  if (documents.size() != labels.size()) throw ParameterError("documents and labels differ in length");
  if (n_classes == 0) throw ParameterError("naive Bayes needs at least one class");

  std::vector<double> class_docs(n_classes, 0.0);
  std::vector<double> counts(n_classes * n_features, 0.0);
  std::vector<double> totals(n_classes, 0.0);
  for (std::size_t i = 0; i < documents.size(); ++i) {
    const ClassId c = labels[i];
    if (c >= n_classes) throw ParameterError("class id outside the catalog");
    check_dimension(documents[i], n_features);
    class_docs[c] += 1.0;
    for (const auto& e : documents[i].entries) {
      counts[c * n_features + e.id] += e.value;
      totals[c] += e.value;
    }
  }
  NaiveBayesModel model;
  model.alpha = alpha;
  model.n_features = n_features;
  model.log_prior.resize(n_classes);
  model.log_likelihood.resize(n_classes * n_features);
  model.counts = counts;
  model.totals = totals;
  const double n = static_cast<double>(documents.size());
  const double v = static_cast<double>(n_features);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (class_docs[c] == 0.0) throw ParameterError("class " + std::to_string(c) + " has no training documents");
    model.log_prior[c] = std::log(class_docs[c] / n);
    const double denom = std::log(totals[c] + alpha * v);
    for (std::size_t t = 0; t < n_features; ++t) {
      model.log_likelihood[c * n_features + t] = std::log(counts[c * n_features + t] + alpha) - denom;
    }
  }
  return model;
}

double NaiveBayesModel::likelihood(ClassId c, std::size_t t) const {
  const std::size_t i = static_cast<std::size_t>(c) * n_features + t;
  return (counts.at(i) + alpha) / (totals.at(c) + alpha * static_cast<double>(n_features));
}

std::vector<double> predict_mnb_scores(const NaiveBayesModel& model, const SparseVector& document) {
  check_dimension(document, model.n_features);
  std::vector<double> scores = model.log_prior;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    const auto row = model.class_row(static_cast<ClassId>(c));
    for (const auto& e : document.entries) scores[c] += e.value * row[e.id];
  }
  return scores;
}

Json NaiveBayesModel::to_json() const {
  return {{"alpha", alpha},
          {"n_features", n_features},
          {"log_prior", encode_doubles(log_prior)},
          {"log_likelihood", encode_doubles(log_likelihood)},
          {"counts", encode_doubles(counts)},
          {"totals", encode_doubles(totals)}};
}

NaiveBayesModel NaiveBayesModel::from_json(const Json& json) {
  NaiveBayesModel m;
  m.alpha = json.at("alpha").get<double>();
  m.n_features = json.at("n_features").get<std::size_t>();
  m.log_prior = decode_doubles(json.at("log_prior").get<std::string>());
  m.log_likelihood = decode_doubles(json.at("log_likelihood").get<std::string>());
  m.counts = decode_doubles(json.at("counts").get<std::string>());
  m.totals = decode_doubles(json.at("totals").get<std::string>());
  if (m.log_likelihood.size() != m.log_prior.size() * m.n_features || m.counts.size() != m.log_likelihood.size() ||
      m.totals.size() != m.log_prior.size()) {
    throw InputFormatError("naive Bayes likelihood table has the wrong size");
  }
  return m;
}

std::vector<double> MultilabelNaiveBayes::margins(const SparseVector& document) const {
  std::vector<double> out;
  out.reserve(per_label.size());
  for (const auto& model : per_label) {
    const auto scores = predict_mnb_scores(model, document);
    out.push_back(scores[1] - scores[0]);
  }
  return out;
}

LabelSet MultilabelNaiveBayes::predict(const SparseVector& document) const {
  return decode_multilabel(margins(document));
}

Json MultilabelNaiveBayes::to_json() const {
  Json models = Json::array();
  for (const auto& m : per_label) models.push_back(m.to_json());
  return {{"per_label", models}};
}

MultilabelNaiveBayes MultilabelNaiveBayes::from_json(const Json& json) {
  MultilabelNaiveBayes out;
  for (const auto& m : json.at("per_label")) out.per_label.push_back(NaiveBayesModel::from_json(m));
  return out;
}

MultilabelNaiveBayes train_mnb_multilabel(std::span<const SparseVector> documents,
                                          std::span<const LabelSet> labels, std::size_t n_labels,
                                          std::size_t n_features, double alpha) {
  if (documents.size() != labels.size()) throw ParameterError("documents and labels differ in length");
  MultilabelNaiveBayes out;
  std::vector<ClassId> binary(documents.size());
  for (std::size_t label = 0; label < n_labels; ++label) {
    std::size_t positives = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      binary[i] = std::binary_search(labels[i].begin(), labels[i].end(), static_cast<ClassId>(label)) ? 1 : 0;
      positives += binary[i];
    }
    if (positives == 0 || positives == documents.size()) {
      throw ParameterError("label " + std::to_string(label) +
                           (positives == 0 ? " has no positive" : " has no negative") + " training documents");
    }
    out.per_label.push_back(train_mnb(documents, binary, 2, n_features, alpha));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear SVM

double BinaryLinearModel::decision_value(const SparseVector& x) const {
  double sum = bias;
  for (const auto& e : x.entries) sum += weights[e.id] * e.value;
  return sum;
}

BinaryLinearModel train_binary_svm(std::span<const SparseVector> documents,
                                   std::span<const std::int8_t> targets, std::size_t n_features,
                                   const SvmOptions& options) {
  if (!(options.reg > 0.0)) throw ParameterError("regularization strength must be positive");
  if (options.epochs == 0) throw ParameterError("epoch count must be positive");
  if (documents.size() != targets.size()) throw ParameterError("documents and targets differ in length");
  if (documents.empty()) throw ParameterError("cannot train on an empty set");
  for (const auto& doc : documents) check_dimension(doc, n_features);

  const double lambda = options.reg;
  const double radius = 1.0 / std::sqrt(lambda);
  // w = scale * v, with the bias stored as v[n_features].
  std::vector<double> v(n_features + 1, 0.0);
  double scale = 1.0;
  double v_norm2 = 0.0;
  std::vector<double> x_norm2(documents.size());
  for (std::size_t i = 0; i < documents.size(); ++i) x_norm2[i] = documents[i].squared_norm() + 1.0;

  Rng rng(options.seed);
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto order = rng.permutation(documents.size());
    for (const auto i : order) {
      ++t;
      const auto& x = documents[i];
      const double y = targets[i] > 0 ? 1.0 : -1.0;
      double vx = v[n_features];
      for (const auto& e : x.entries) vx += v[e.id] * e.value;
      const double margin = y * scale * vx;
      const double eta = 1.0 / (lambda * static_cast<double>(t));

      if (t == 1) {
        std::fill(v.begin(), v.end(), 0.0);
        scale = 1.0;
        v_norm2 = 0.0;
        vx = 0.0;
      } else {
        scale *= 1.0 - 1.0 / static_cast<double>(t);
      }
      if (margin < 1.0) {
        const double a = eta * y / scale;
        for (const auto& e : x.entries) v[e.id] += a * e.value;
        v[n_features] += a;
        v_norm2 += 2.0 * a * vx + a * a * x_norm2[i];
      }
      const double norm = scale * std::sqrt(std::max(v_norm2, 0.0));
      if (norm > radius) scale *= radius / norm;
      if (scale < 1e-9) {
        for (auto& value : v) value *= scale;
        v_norm2 *= scale * scale;
        scale = 1.0;
      }
    }
  }
  BinaryLinearModel model;
  model.weights.resize(n_features);
  for (std::size_t j = 0; j < n_features; ++j) model.weights[j] = scale * v[j];
  model.bias = scale * v[n_features];
  return model;
}

double svm_objective(const BinaryLinearModel& model, std::span<const SparseVector> documents,
                     std::span<const std::int8_t> targets, double reg) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < documents.size(); ++i) {
    const double y = targets[i] > 0 ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - y * model.decision_value(documents[i]));
  }
  double norm2 = model.bias * model.bias;
  for (auto w : model.weights) norm2 += w * w;
  return 0.5 * reg * norm2 + hinge / static_cast<double>(documents.size());
}

std::vector<double> LinearClassifier::decision_values(const SparseVector& x) const {
  check_dimension(x, n_features);
  std::vector<double> out;
  out.reserve(per_class.size());
  for (const auto& model : per_class) out.push_back(model.decision_value(x));
  return out;
}

LinearClassifier train_linear_ovr(std::span<const SparseVector> documents,
                                  std::span<const LabelSet> labels, std::size_t n_classes,
                                  std::size_t n_features, OvrMode mode, const SvmOptions& options) {
  if (documents.size() != labels.size()) throw ParameterError("documents and labels differ in length");
  LinearClassifier classifier;
  classifier.mode = mode;
  classifier.reg = options.reg;
  classifier.n_features = n_features;
  std::vector<std::int8_t> targets(documents.size());
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t positives = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (mode == OvrMode::kMulticlass && labels[i].size() != 1) {
        throw ParameterError("multiclass training item " + std::to_string(i) + " does not have exactly one label");
      }
      const bool positive = std::binary_search(labels[i].begin(), labels[i].end(), static_cast<ClassId>(c));
      targets[i] = positive ? 1 : -1;
      positives += positive;
    }
    if (positives == 0) throw ParameterError("class " + std::to_string(c) + " has no positive training examples");
    if (positives == documents.size()) {
      throw ParameterError("class " + std::to_string(c) + " has no negative training examples");
    }
    classifier.per_class.push_back(train_binary_svm(documents, targets, n_features, options));
  }
  return classifier;
}

LabelSet decode_linear(const LinearClassifier& classifier, const SparseVector& x) {
  const auto values = classifier.decision_values(x);
  if (classifier.mode == OvrMode::kMulticlass) return {decode_multiclass(values)};
  return decode_multilabel(values);
}

Json LinearClassifier::to_json() const {
  std::vector<double> weights;
  std::vector<double> biases;
  weights.reserve(per_class.size() * n_features);
  for (const auto& m : per_class) {
    weights.insert(weights.end(), m.weights.begin(), m.weights.end());
    biases.push_back(m.bias);
  }
  return {{"mode", mode == OvrMode::kMulticlass ? "multiclass_ovr" : "multilabel_ovr"},
          {"reg", reg},
          {"n_features", n_features},
          {"n_classes", per_class.size()},
          {"weights", encode_doubles(weights)},
          {"bias", encode_doubles(biases)}};
}

LinearClassifier LinearClassifier::from_json(const Json& json) {
  LinearClassifier c;
  const auto mode = json.at("mode").get<std::string>();
  if (mode == "multiclass_ovr") {
    c.mode = OvrMode::kMulticlass;
  } else if (mode == "multilabel_ovr") {
    c.mode = OvrMode::kMultilabel;
  } else {
    throw InputFormatError("unknown linear classifier mode '" + mode + "'");
  }
  c.reg = json.at("reg").get<double>();
  c.n_features = json.at("n_features").get<std::size_t>();
  const auto n_classes = json.at("n_classes").get<std::size_t>();
  const auto weights = decode_doubles(json.at("weights").get<std::string>());
  const auto biases = decode_doubles(json.at("bias").get<std::string>());
  if (weights.size() != n_classes * c.n_features || biases.size() != n_classes) {
    throw InputFormatError("linear classifier weights have the wrong size");
  }
  for (std::size_t k = 0; k < n_classes; ++k) {
    BinaryLinearModel m;
    m.weights.assign(weights.begin() + static_cast<std::ptrdiff_t>(k * c.n_features),
                     weights.begin() + static_cast<std::ptrdiff_t>((k + 1) * c.n_features));
    m.bias = biases[k];
    c.per_class.push_back(std::move(m));
  }
  return c;
}

}  // namespace algotag::linear
