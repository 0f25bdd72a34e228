#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "algotag/corpus.hpp"
#include "algotag/datasets.hpp"
#include "algotag/ensemble.hpp"
#include "algotag/features.hpp"
#include "algotag/linear_models.hpp"
#include "algotag/neural.hpp"

namespace algotag {

enum class Family { kMnb, kSvm, kMlp, kCnn, kCnnEnsemble };

std::string_view to_string(Family family);
Family parse_family(std::string_view name);

// Everything needed to train one classifier on a dataset: family,
// hyperparameters and feature pipeline settings.
struct ModelSpec {
  Family family = Family::kCnn;
  features::TokenizerOptions tokenizer;
  corpus::TextPart part = corpus::TextPart::kFull;

  // Bag-of-n-gram families (mnb, svm, mlp).
  features::NgramOptions ngrams;
  bool tfidf = false;
  double alpha = 1.0;
  linear::SvmOptions svm;
  std::vector<std::size_t> mlp_hidden = {512};
  // Applied to the MLP input when `ngrams.max_features` is 0.
  std::size_t mlp_max_features = 10000;

  // Sequence families (cnn, cnn-ensemble).
  std::size_t vocab_min_count = 2;
  std::size_t max_len = 512;
  std::size_t embedding_dim = 128;
  std::size_t filters_per_width = 512;
  std::vector<std::size_t> widths = {3, 4, 5};
  double dropout = 0.5;
  bool trainable_embeddings = true;
  std::optional<std::filesystem::path> embeddings;
  std::size_t ensemble_members = 5;
  std::optional<ensemble::Scheme> scheme;  // default follows the dataset kind

  // Neural training.
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::optional<nn::LossKind> loss;  // default follows family and kind

  nn::LossKind loss_for(datasets::Kind kind) const;
  ensemble::Scheme scheme_for(datasets::Kind kind) const;

  Json to_json() const;
  static ModelSpec from_json(const Json& json);
  static ModelSpec defaults(Family family);
};

// A trained classifier with its fitted feature pipeline.
class ModelArtifact {
 public:
  static constexpr int kFormatVersion = 1;

  ModelArtifact() = default;

  // Fits the feature pipeline and the model on `documents` only. Tokens must
  // come from the spec's tokenizer over the spec's text part.
  // `embedding_text` optionally supplies the contents of `spec.embeddings`.
  static ModelArtifact fit(const ModelSpec& spec, datasets::Kind kind, const datasets::TagCatalog& catalog,
                           std::span<const features::TokenList> documents, std::span<const datasets::LabelSet> labels,
                           std::uint64_t seed, const std::string* embedding_text = nullptr);
  static ModelArtifact fit(const ModelSpec& spec, const datasets::LabeledDataset& dataset, std::uint64_t seed);

  Family family() const noexcept { return spec_.family; }
  datasets::Kind kind() const noexcept { return kind_; }
  const datasets::TagCatalog& catalog() const noexcept { return catalog_; }
  const ModelSpec& spec() const noexcept { return spec_; }

  features::TokenList tokens(const corpus::Problem& problem) const;
  // Multiclass predictions are single-element sets.
  std::vector<datasets::LabelSet> predict_tokens(std::span<const features::TokenList> documents) const;
  std::vector<datasets::LabelSet> predict(std::span<const corpus::Problem> problems) const;
  std::vector<std::string> predict_tags(const corpus::Problem& problem) const;

  const features::Vocabulary* vocabulary() const { return vocab_ ? &*vocab_ : nullptr; }
  const features::NgramVocabulary* ngram_vocabulary() const { return ngrams_ ? &*ngrams_ : nullptr; }
  const features::TfidfModel* tfidf() const { return tfidf_ ? &*tfidf_ : nullptr; }
  // Model parameters alone, without the feature pipeline.
  Json weights_json() const;

  Json to_json() const;
  static ModelArtifact from_json(const Json& json);

  // Ensembles are written as a manifest plus one artifact file per member,
  // named <stem>.member<i>.json next to it.
  void save(const std::filesystem::path& path) const;
  static ModelArtifact load(const std::filesystem::path& path);

 private:
  using Payload = std::variant<std::monostate, linear::NaiveBayesModel, linear::MultilabelNaiveBayes,
                               linear::LinearClassifier, nn::MlpModel, nn::CnnModel, ensemble::CnnEnsemble>;

  std::vector<features::SparseVector> bag_features(std::span<const features::TokenList> documents) const;
  std::vector<features::TokenSequence> sequences(std::span<const features::TokenList> documents) const;
  Json pipeline_json() const;
  void read_pipeline(const Json& json);

  ModelSpec spec_;
  datasets::Kind kind_ = datasets::Kind::kMulticlass;
  datasets::TagCatalog catalog_;
  std::optional<features::Vocabulary> vocab_;
  std::optional<features::NgramVocabulary> ngrams_;
  std::optional<features::TfidfModel> tfidf_;
  Payload payload_;
};

// Tokens of each item's selected text part.
std::vector<features::TokenList> tokenize_items(const datasets::LabeledDataset& dataset,
                                                const features::TokenizerOptions& options,
                                                corpus::TextPart part);

// One-hot (multiclass) or 0/1 (multilabel) target rows.
nn::Tensor target_matrix(std::span<const datasets::LabelSet> labels, std::size_t n_classes);

}  // namespace algotag
