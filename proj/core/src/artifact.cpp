#include "algotag/artifact.hpp"

#include <algorithm>

#include "algotag/error.hpp"

namespace algotag {
namespace {

constexpr std::string_view kFormat = "algotag-model";

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

std::vector<linear::ClassId> single_labels(std::span<const datasets::LabelSet> labels) {
  std::vector<linear::ClassId> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    if (l.size() != 1) throw ParameterError("multiclass training needs exactly one label per item");
    out.push_back(l.front());
  }
  return out;
}

std::vector<datasets::LabelSet> decode_rows(const nn::Tensor& activations, datasets::Kind kind) {
  const std::size_t classes = activations.shape[1];
  std::vector<datasets::LabelSet> out(activations.shape[0]);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::span<const double> row(activations.values.data() + i * classes, classes);
    out[i] = kind == datasets::Kind::kMulticlass ? datasets::LabelSet{linear::decode_multiclass(row)}
                                                 : linear::decode_multilabel(row);
  }
  return out;
}

std::filesystem::path member_path(const std::filesystem::path& manifest, std::size_t index) {
  auto name = manifest.stem().string() + ".member" + std::to_string(index) + ".json";
  return manifest.parent_path() / name;
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::kMnb: return "mnb";
    case Family::kSvm: return "svm";
    case Family::kMlp: return "mlp";
    case Family::kCnn: return "cnn";
    case Family::kCnnEnsemble: return "cnn-ensemble";
  }
  return "cnn";
}

Family parse_family(std::string_view name) {
  for (auto f : {Family::kMnb, Family::kSvm, Family::kMlp, Family::kCnn, Family::kCnnEnsemble}) {
    if (to_string(f) == name) return f;
  }
  throw ParameterError("unknown model family '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// ModelSpec

nn::LossKind ModelSpec::loss_for(datasets::Kind kind) const {
  if (loss) return *loss;
  if (kind == datasets::Kind::kMulticlass) return nn::LossKind::kCrossEntropySoftmax;
  return family == Family::kMlp ? nn::LossKind::kMseSigmoid : nn::LossKind::kBceSigmoid;
}

ensemble::Scheme ModelSpec::scheme_for(datasets::Kind kind) const {
  if (scheme) return *scheme;
  return kind == datasets::Kind::kMulticlass ? ensemble::Scheme::kMajorityVote : ensemble::Scheme::kSumActivation;
}

Json ModelSpec::to_json() const {
  Json j = {{"family", to_string(family)},
            {"lowercase", tokenizer.lowercase},
            {"part", corpus::to_string(part)},
            {"ngram_max_order", ngrams.max_order},
            {"ngram_min_count", ngrams.min_count},
            {"ngram_max_features", ngrams.max_features},
            {"tfidf", tfidf},
            {"alpha", alpha},
            {"svm_reg", svm.reg},
            {"svm_epochs", svm.epochs},
            {"mlp_hidden", mlp_hidden},
            {"mlp_max_features", mlp_max_features},
            {"vocab_min_count", vocab_min_count},
            {"max_len", max_len},
            {"embedding_dim", embedding_dim},
            {"filters_per_width", filters_per_width},
            {"widths", widths},
            {"dropout", dropout},
            {"trainable_embeddings", trainable_embeddings},
            {"ensemble_members", ensemble_members},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate}};
  j["embeddings"] = embeddings ? Json(embeddings->string()) : Json(nullptr);
  j["scheme"] = scheme ? Json(ensemble::to_string(*scheme)) : Json(nullptr);
  j["loss"] = loss ? Json(nn::to_string(*loss)) : Json(nullptr);
  return j;
}

ModelSpec ModelSpec::from_json(const Json& json) {
  ModelSpec s;
  s.family = parse_family(json.at("family").get<std::string>());
  auto read = [&](const char* key, auto& field) {
    if (json.contains(key)) field = json.at(key).get<std::decay_t<decltype(field)>>();
  };
  read("lowercase", s.tokenizer.lowercase);
  if (json.contains("part")) s.part = corpus::parse_text_part(json.at("part").get<std::string>());
  read("ngram_max_order", s.ngrams.max_order);
  read("ngram_min_count", s.ngrams.min_count);
  read("ngram_max_features", s.ngrams.max_features);
  read("tfidf", s.tfidf);
  read("alpha", s.alpha);
  read("svm_reg", s.svm.reg);
  read("svm_epochs", s.svm.epochs);
  read("mlp_hidden", s.mlp_hidden);
  read("mlp_max_features", s.mlp_max_features);
  read("vocab_min_count", s.vocab_min_count);
  read("max_len", s.max_len);
  read("embedding_dim", s.embedding_dim);
  read("filters_per_width", s.filters_per_width);
  read("widths", s.widths);
  read("dropout", s.dropout);
  read("trainable_embeddings", s.trainable_embeddings);
  read("ensemble_members", s.ensemble_members);
  read("epochs", s.epochs);
  read("batch_size", s.batch_size);
  read("learning_rate", s.learning_rate);
  if (json.contains("embeddings") && !json.at("embeddings").is_null()) {
    s.embeddings = json.at("embeddings").get<std::string>();
  }
  if (json.contains("scheme") && !json.at("scheme").is_null()) {
    s.scheme = ensemble::parse_scheme(json.at("scheme").get<std::string>());
  }
  if (json.contains("loss") && !json.at("loss").is_null()) s.loss = nn::parse_loss(json.at("loss").get<std::string>());
  return s;
}

ModelSpec ModelSpec::defaults(Family family) {
  ModelSpec s;
  s.family = family;
  return s;
}

// ---------------------------------------------------------------------------
// Fitting

std::vector<features::TokenList> tokenize_items(const datasets::LabeledDataset& dataset,
                                                const features::TokenizerOptions& options,
                                                corpus::TextPart part) {
  std::vector<features::TokenList> out;
  out.reserve(dataset.size());
  for (const auto& item : dataset.items) out.push_back(features::tokenize(corpus::select_text(item.problem, part).text, options));
  return out;
}

nn::Tensor target_matrix(std::span<const datasets::LabelSet> labels, std::size_t n_classes) {
  nn::Tensor t({labels.size(), n_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (auto c : labels[i]) {
      if (c >= n_classes) throw ParameterError("label " + std::to_string(c) + " outside the catalog");
      t.at(i, c) = 1.0;
    }
  }
  return t;
}

ModelArtifact ModelArtifact::fit(const ModelSpec& spec, datasets::Kind kind, const datasets::TagCatalog& catalog,
                                 std::span<const features::TokenList> documents,
                                 std::span<const datasets::LabelSet> labels, std::uint64_t seed,
                                 const std::string* embedding_text) {
  if (documents.size() != labels.size()) throw ParameterError("documents and labels differ in count");
  if (documents.empty()) throw ParameterError("cannot fit a model on no documents");
  const std::size_t n_classes = catalog.size();
  ModelArtifact m;
  m.spec_ = spec;
  m.kind_ = kind;
  m.catalog_ = catalog;

  const bool bag = spec.family == Family::kMnb || spec.family == Family::kSvm || spec.family == Family::kMlp;
  if (bag) {
    auto ngram_options = spec.ngrams;
    if (spec.family == Family::kMlp && ngram_options.max_features == 0) ngram_options.max_features = spec.mlp_max_features;
    m.ngrams_ = features::NgramVocabulary::fit(documents, ngram_options);
    std::vector<features::SparseVector> counts;
    counts.reserve(documents.size());
    for (const auto& d : documents) counts.push_back(m.ngrams_->vectorize(d));
    if (spec.tfidf) m.tfidf_ = features::TfidfModel::fit(counts, m.ngrams_->size());
    const auto x = m.tfidf_ ? m.tfidf_->transform(counts) : counts;
    const std::size_t dim = std::max<std::size_t>(m.ngrams_->size(), 1);

    if (spec.family == Family::kMnb) {
      if (kind == datasets::Kind::kMulticlass) {
        m.payload_ = linear::train_mnb(x, single_labels(labels), n_classes, dim, spec.alpha);
      } else {
        m.payload_ = linear::train_mnb_multilabel(x, labels, n_classes, dim, spec.alpha);
      }
    } else if (spec.family == Family::kSvm) {
      auto options = spec.svm;
      options.seed = seed;
      const auto mode = kind == datasets::Kind::kMulticlass ? linear::OvrMode::kMulticlass : linear::OvrMode::kMultilabel;
      m.payload_ = linear::train_linear_ovr(x, labels, n_classes, dim, mode, options);
    } else {
      nn::MlpConfig config;
      config.input_dim = dim;
      config.hidden = spec.mlp_hidden;
      config.n_classes = n_classes;
      auto model = nn::MlpModel::create(config, derive_seed(seed, 1));
      nn::TrainOptions options;
      options.epochs = spec.epochs;
      options.batch_size = spec.batch_size;
      options.adam.learning_rate = spec.learning_rate;
      options.loss = spec.loss_for(kind);
      options.seed = derive_seed(seed, 2);
      nn::train_mlp(model, x, target_matrix(labels, n_classes), options);
      m.payload_ = std::move(model);
    }
    return m;
  }

  m.vocab_ = features::Vocabulary::fit(documents, spec.vocab_min_count);
  const auto seqs = m.sequences(documents);
  nn::CnnConfig config;
  config.vocab_size = m.vocab_->size();
  config.embedding_dim = spec.embedding_dim;
  config.filters_per_width = spec.filters_per_width;
  config.widths = spec.widths;
  config.n_classes = n_classes;
  config.dropout = spec.dropout;
  config.trainable_embeddings = spec.trainable_embeddings;
  std::optional<features::EmbeddingMatrix> pretrained;
  if (spec.embeddings) {
    pretrained = embedding_text ? features::load_embeddings_text(*embedding_text, *m.vocab_, derive_seed(seed, 3))
                                : features::load_embeddings(*spec.embeddings, *m.vocab_, derive_seed(seed, 3));
    config.embedding_dim = pretrained->dim;
  }
  nn::TrainOptions options;
  options.epochs = spec.epochs;
  options.batch_size = spec.batch_size;
  options.adam.learning_rate = spec.learning_rate;
  options.loss = spec.loss_for(kind);
  const auto targets = target_matrix(labels, n_classes);
  const features::EmbeddingMatrix* init = pretrained ? &*pretrained : nullptr;
  if (spec.family == Family::kCnn) {
    auto model = nn::CnnModel::create(config, derive_seed(seed, 1), init);
    options.seed = derive_seed(seed, 2);
    nn::train_cnn(model, seqs, targets, options);
    m.payload_ = std::move(model);
  } else {
    ensemble::EnsembleOptions eo;
    eo.members = spec.ensemble_members;
    eo.scheme = spec.scheme_for(kind);
    eo.base_seed = seed;
    m.payload_ = ensemble::CnnEnsemble::train(config, seqs, targets, options, eo, init);
  }
  return m;
}

ModelArtifact ModelArtifact::fit(const ModelSpec& spec, const datasets::LabeledDataset& dataset, std::uint64_t seed) {
  const auto docs = tokenize_items(dataset, spec.tokenizer, spec.part);
  std::vector<datasets::LabelSet> labels;
  for (const auto& item : dataset.items) labels.push_back(item.labels);
  return fit(spec, dataset.kind, dataset.catalog, docs, labels, seed);
}

// ---------------------------------------------------------------------------
// Prediction

std::vector<features::SparseVector> ModelArtifact::bag_features(std::span<const features::TokenList> documents) const {
  std::vector<features::SparseVector> out;
  out.reserve(documents.size());
  for (const auto& d : documents) {
    auto v = ngrams_->vectorize(d);
    out.push_back(tfidf_ ? tfidf_->transform(v) : std::move(v));
  }
  return out;
}

std::vector<features::TokenSequence> ModelArtifact::sequences(std::span<const features::TokenList> documents) const {
  const std::size_t widest = *std::max_element(spec_.widths.begin(), spec_.widths.end());
  std::vector<features::TokenSequence> out;
  out.reserve(documents.size());
  for (const auto& d : documents) out.push_back(features::encode_sequence(d, *vocab_, std::max(spec_.max_len, widest), widest));
  return out;
}

features::TokenList ModelArtifact::tokens(const corpus::Problem& problem) const {
  return features::tokenize(corpus::select_text(problem, spec_.part).text, spec_.tokenizer);
}

std::vector<datasets::LabelSet> ModelArtifact::predict_tokens(std::span<const features::TokenList> documents) const {
  const bool multiclass = kind_ == datasets::Kind::kMulticlass;
  return std::visit(
      Overloaded{
          [](const std::monostate&) -> std::vector<datasets::LabelSet> {
            throw ParameterError("model artifact holds no trained model");
          },
          [&](const linear::NaiveBayesModel& nb) {
            std::vector<datasets::LabelSet> out;
            for (const auto& x : bag_features(documents)) {
              out.push_back({linear::decode_multiclass(linear::predict_mnb_scores(nb, x))});
            }
            return out;
          },
          [&](const linear::MultilabelNaiveBayes& nb) {
            std::vector<datasets::LabelSet> out;
            for (const auto& x : bag_features(documents)) out.push_back(nb.predict(x));
            return out;
          },
          [&](const linear::LinearClassifier& svm) {
            std::vector<datasets::LabelSet> out;
            for (const auto& x : bag_features(documents)) out.push_back(linear::decode_linear(svm, x));
            return out;
          },
          [&](const nn::MlpModel& mlp) { return decode_rows(nn::predict_mlp(mlp, bag_features(documents)), kind_); },
          [&](const nn::CnnModel& cnn) { return decode_rows(nn::predict_cnn(cnn, sequences(documents)), kind_); },
          [&](const ensemble::CnnEnsemble& ens) {
            const auto seqs = sequences(documents);
            std::vector<datasets::LabelSet> out;
            if (multiclass) {
              for (auto c : ens.predict_multiclass(seqs)) out.push_back({c});
            } else {
              out = ens.predict_multilabel(seqs);
            }
            return out;
          }},
      payload_);
}

std::vector<datasets::LabelSet> ModelArtifact::predict(std::span<const corpus::Problem> problems) const {
  std::vector<features::TokenList> docs;
  docs.reserve(problems.size());
  for (const auto& p : problems) docs.push_back(tokens(p));
  return predict_tokens(docs);
}

std::vector<std::string> ModelArtifact::predict_tags(const corpus::Problem& problem) const {
  const auto labels = predict(std::span<const corpus::Problem>(&problem, 1)).front();
  std::vector<std::string> out;
  for (auto c : labels) out.push_back(catalog_.name(c));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

Json ModelArtifact::weights_json() const {
  return std::visit(Overloaded{[](const std::monostate&) { return Json(nullptr); },
                               [](const ensemble::CnnEnsemble& e) {
                                 Json members = Json::array();
                                 for (const auto& m : e.members()) members.push_back(m.to_json());
                                 return Json{{"scheme", ensemble::to_string(e.scheme())}, {"members", members}};
                               },
                               [](const auto& model) { return model.to_json(); }},
                    payload_);
}

Json ModelArtifact::pipeline_json() const {
  Json j = Json::object();
  if (vocab_) j["vocabulary"] = vocab_->to_json();
  if (ngrams_) j["ngrams"] = ngrams_->to_json();
  if (tfidf_) j["tfidf"] = tfidf_->to_json();
  return j;
}

void ModelArtifact::read_pipeline(const Json& json) {
  if (json.contains("vocabulary")) vocab_ = features::Vocabulary::from_json(json.at("vocabulary"));
  if (json.contains("ngrams")) ngrams_ = features::NgramVocabulary::from_json(json.at("ngrams"));
  if (json.contains("tfidf")) tfidf_ = features::TfidfModel::from_json(json.at("tfidf"));
}

Json ModelArtifact::to_json() const {
  Json j = {{"format", kFormat},
            {"version", kFormatVersion},
            {"family", to_string(spec_.family)},
            {"kind", datasets::to_string(kind_)},
            {"catalog", catalog_.tags()},
            {"spec", spec_.to_json()},
            {"pipeline", pipeline_json()},
            {"model", weights_json()}};
  if (vocab_) j["feature_fingerprint"] = vocab_->fingerprint();
  if (ngrams_) j["feature_fingerprint"] = ngrams_->fingerprint();
  return j;
}

ModelArtifact ModelArtifact::from_json(const Json& json) {
  try {
    if (json.at("format") != kFormat) throw InputFormatError("not a model artifact");
    if (json.at("version").get<int>() != kFormatVersion) {
      throw InputFormatError("unsupported model artifact version " + json.at("version").dump());
    }
    ModelArtifact m;
    m.spec_ = ModelSpec::from_json(json.at("spec"));
    if (parse_family(json.at("family").get<std::string>()) != m.spec_.family) {
      throw InputFormatError("artifact family disagrees with its spec");
    }
    m.kind_ = datasets::parse_kind(json.at("kind").get<std::string>());
    m.catalog_ = datasets::TagCatalog(json.at("catalog").get<std::vector<std::string>>());
    m.read_pipeline(json.at("pipeline"));
    const Json& model = json.at("model");
    const bool multiclass = m.kind_ == datasets::Kind::kMulticlass;
    switch (m.spec_.family) {
      case Family::kMnb:
        if (multiclass) {
          m.payload_ = linear::NaiveBayesModel::from_json(model);
        } else {
          m.payload_ = linear::MultilabelNaiveBayes::from_json(model);
        }
        break;
      case Family::kSvm: m.payload_ = linear::LinearClassifier::from_json(model); break;
      case Family::kMlp: m.payload_ = nn::MlpModel::from_json(model); break;
      case Family::kCnn: m.payload_ = nn::CnnModel::from_json(model); break;
      case Family::kCnnEnsemble: {
        std::vector<nn::CnnModel> members;
        for (const auto& member : model.at("members")) members.push_back(nn::CnnModel::from_json(member));
        m.payload_ = ensemble::CnnEnsemble(ensemble::parse_scheme(model.at("scheme").get<std::string>()), std::move(members));
        break;
      }
    }
    const bool bag = m.spec_.family == Family::kMnb || m.spec_.family == Family::kSvm || m.spec_.family == Family::kMlp;
    if (bag ? !m.ngrams_ : !m.vocab_) throw InputFormatError("artifact is missing its feature pipeline");
    return m;
  } catch (const Json::exception& e) {
    throw InputFormatError(std::string("malformed model artifact: ") + e.what());
  }
}

void ModelArtifact::save(const std::filesystem::path& path) const {
  const auto* ens = std::get_if<ensemble::CnnEnsemble>(&payload_);
  if (!ens) {
    write_file_atomic(path, to_json().dump(1) + "\n");
    return;
  }
  Json files = Json::array();
  for (std::size_t i = 0; i < ens->members().size(); ++i) {
    ModelArtifact member;
    member.spec_ = spec_;
    member.spec_.family = Family::kCnn;
    member.kind_ = kind_;
    member.catalog_ = catalog_;
    member.vocab_ = vocab_;
    member.payload_ = ens->members()[i];
    const auto file = member_path(path, i);
    write_file_atomic(file, member.to_json().dump(1) + "\n");
    files.push_back(file.filename().string());
  }
  Json manifest = {{"format", kFormat},
                   {"version", kFormatVersion},
                   {"family", to_string(Family::kCnnEnsemble)},
                   {"kind", datasets::to_string(kind_)},
                   {"catalog", catalog_.tags()},
                   {"spec", spec_.to_json()},
                   {"scheme", ensemble::to_string(ens->scheme())},
                   {"members", files}};
  write_file_atomic(path, manifest.dump(1) + "\n");
}

ModelArtifact ModelArtifact::load(const std::filesystem::path& path) {
  const Json json = read_json_file(path);
  if (!json.is_object() || !json.contains("family")) {
    throw InputFormatError("not a model artifact: " + path.string());
  }
  if (json.at("family") != to_string(Family::kCnnEnsemble) || json.contains("model")) return from_json(json);

  ModelArtifact m;
  try {
    m.spec_ = ModelSpec::from_json(json.at("spec"));
    m.kind_ = datasets::parse_kind(json.at("kind").get<std::string>());
    m.catalog_ = datasets::TagCatalog(json.at("catalog").get<std::vector<std::string>>());
    std::vector<nn::CnnModel> members;
    for (const auto& name : json.at("members")) {
      const auto file = path.parent_path() / name.get<std::string>();
      ModelArtifact member = load(file);
      if (!member.vocab_ || member.family() != Family::kCnn || !(member.catalog_ == m.catalog_)) {
        throw InputFormatError("ensemble member " + file.string() + " is not a compatible CNN artifact");
      }
      if (m.vocab_ && m.vocab_->fingerprint() != member.vocab_->fingerprint()) {
        throw InputFormatError("ensemble member " + file.string() + " uses a different vocabulary");
      }
      if (!m.vocab_) m.vocab_ = member.vocab_;
      members.push_back(std::get<nn::CnnModel>(member.payload_));
    }
    m.payload_ = ensemble::CnnEnsemble(ensemble::parse_scheme(json.at("scheme").get<std::string>()), std::move(members));
  } catch (const Json::exception& e) {
    throw InputFormatError("malformed ensemble manifest " + path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace algotag
