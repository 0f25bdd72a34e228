#include "algotag/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include "algotag/error.hpp"
#include "algotag/rng.hpp"

namespace algotag::features {
namespace {

// Orders (key, count) pairs by decreasing count, then by key.
template <typename Map>
std::vector<std::pair<std::string, std::size_t>> ranked(const Map& counts, std::size_t min_count) {
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [key, count] : counts) {
    if (count >= min_count) kept.emplace_back(key, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return kept;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::fit(std::span<const TokenList> documents, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : documents) {
    for (const auto& token : doc) ++counts[token];
  }
  std::vector<std::string> tokens;
  for (auto& [token, count] : ranked(counts, std::max<std::size_t>(min_count, 1))) {
    tokens.push_back(std::move(token));
  }
  return from_tokens(std::move(tokens), min_count);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, std::size_t min_count) {
  Vocabulary vocab;
  vocab.min_count_ = min_count;
  vocab.tokens_ = std::move(tokens);
  vocab.index_.reserve(vocab.tokens_.size());
  for (std::size_t i = 0; i < vocab.tokens_.size(); ++i) {
    const auto id = static_cast<std::int32_t>(i) + kFirstTokenId;
    if (!vocab.index_.emplace(vocab.tokens_[i], id).second) {
      throw InputFormatError("duplicate vocabulary token '" + vocab.tokens_[i] + "'");
    }
  }
  return vocab;
}

std::int32_t Vocabulary::lookup(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

std::string Vocabulary::fingerprint() const { return algotag::fingerprint(tokens_); }

Json Vocabulary::to_json() const {
  return {{"min_count", min_count_}, {"tokens", tokens_}, {"fingerprint", fingerprint()}};
}

Vocabulary Vocabulary::from_json(const Json& json) {
  auto vocab = from_tokens(json.at("tokens").get<std::vector<std::string>>(),
                           json.at("min_count").get<std::size_t>());
  if (json.contains("fingerprint") && json.at("fingerprint").get<std::string>() != vocab.fingerprint()) {
    throw InputFormatError("vocabulary fingerprint mismatch");
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// SparseVector

double SparseVector::dot(const SparseVector& other) const {
  double sum = 0.0;
  auto a = entries.begin();
  auto b = other.entries.begin();
  while (a != entries.end() && b != other.entries.end()) {
    if (a->id < b->id) {
      ++a;
    } else if (b->id < a->id) {
      ++b;
    } else {
      sum += a->value * b->value;
      ++a;
      ++b;
    }
  }
  return sum;
}

double SparseVector::squared_norm() const {
  double sum = 0.0;
  for (const auto& e : entries) sum += e.value * e.value;
  return sum;
}

// ---------------------------------------------------------------------------
// N-grams

std::vector<std::string> extract_ngrams(const TokenList& tokens, int max_order) {
  std::vector<std::string> grams;
  for (int order = 1; order <= max_order; ++order) {
    const auto n = static_cast<std::size_t>(order);
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string key = tokens[i];
      for (std::size_t j = 1; j < n; ++j) {
        key += ' ';
        key += tokens[i + j];
      }
      grams.push_back(std::move(key));
    }
  }
  return grams;
}

NgramVocabulary NgramVocabulary::fit(std::span<const TokenList> documents, const NgramOptions& options) {
  if (options.max_order < 1) throw ParameterError("n-gram order must be at least 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : documents) {
    for (auto& gram : extract_ngrams(doc, options.max_order)) ++counts[std::move(gram)];
  }
  auto kept = ranked(counts, std::max<std::size_t>(options.min_count, 1));
  if (options.max_features > 0 && kept.size() > options.max_features) kept.resize(options.max_features);

  NgramVocabulary vocab;
  vocab.options_ = options;
  vocab.ngrams_.reserve(kept.size());
  for (auto& [gram, count] : kept) vocab.ngrams_.push_back(std::move(gram));
  for (std::size_t i = 0; i < vocab.ngrams_.size(); ++i) {
    vocab.index_.emplace(vocab.ngrams_[i], static_cast<std::uint32_t>(i));
  }
  return vocab;
}

std::optional<std::uint32_t> NgramVocabulary::lookup(const std::string& ngram) const {
  const auto it = index_.find(ngram);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string NgramVocabulary::fingerprint() const { return algotag::fingerprint(ngrams_); }

SparseVector NgramVocabulary::vectorize(const TokenList& tokens) const {
  std::map<std::uint32_t, double> counts;
  for (const auto& gram : extract_ngrams(tokens, options_.max_order)) {
    if (const auto id = lookup(gram)) counts[*id] += 1.0;
  }
  SparseVector v;
  v.entries.reserve(counts.size());
  for (const auto& [id, count] : counts) v.entries.push_back({id, count});
  return v;
}

Json NgramVocabulary::to_json() const {
  return {{"max_order", options_.max_order},
          {"min_count", options_.min_count},
          {"max_features", options_.max_features},
          {"ngrams", ngrams_},
          {"fingerprint", fingerprint()}};
}

NgramVocabulary NgramVocabulary::from_json(const Json& json) {
  NgramVocabulary vocab;
  vocab.options_.max_order = json.at("max_order").get<int>();
  vocab.options_.min_count = json.at("min_count").get<std::size_t>();
  vocab.options_.max_features = json.at("max_features").get<std::size_t>();
  vocab.ngrams_ = json.at("ngrams").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < vocab.ngrams_.size(); ++i) {
    if (!vocab.index_.emplace(vocab.ngrams_[i], static_cast<std::uint32_t>(i)).second) {
      throw InputFormatError("duplicate n-gram '" + vocab.ngrams_[i] + "'");
    }
  }
  if (json.contains("fingerprint") && json.at("fingerprint").get<std::string>() != vocab.fingerprint()) {
    throw InputFormatError("n-gram vocabulary fingerprint mismatch");
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// TF-IDF

TfidfModel TfidfModel::fit(std::span<const SparseVector> documents, std::size_t dimension) {
  std::vector<std::size_t> df(dimension, 0);
  for (const auto& doc : documents) {
    for (const auto& e : doc.entries) {
      if (e.id >= dimension) throw ParameterError("feature id outside the fitted dimension");
      ++df[e.id];
    }
  }
  TfidfModel model;
  model.documents_ = documents.size();
  model.idf_.resize(dimension);
  const double n = static_cast<double>(documents.size());
  for (std::size_t t = 0; t < dimension; ++t) {
    model.idf_[t] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[t]))) + 1.0;
  }
  return model;
}

SparseVector TfidfModel::transform(const SparseVector& counts) const {
  SparseVector out;
  out.entries.reserve(counts.entries.size());
  double norm = 0.0;
  for (const auto& e : counts.entries) {
    if (e.id >= idf_.size()) throw ParameterError("feature id outside the fitted dimension");
    const double value = e.value * idf_[e.id];
    if (value != 0.0) {
      out.entries.push_back({e.id, value});
      norm += value * value;
    }
  }
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& e : out.entries) e.value /= norm;
  }
  return out;
}

std::vector<SparseVector> TfidfModel::transform(std::span<const SparseVector> documents) const {
  std::vector<SparseVector> out;
  out.reserve(documents.size());
  for (const auto& doc : documents) out.push_back(transform(doc));
  return out;
}

Json TfidfModel::to_json() const {
  return {{"documents", documents_}, {"idf", encode_doubles(idf_)}};
}

TfidfModel TfidfModel::from_json(const Json& json) {
  TfidfModel model;
  model.documents_ = json.at("documents").get<std::size_t>();
  model.idf_ = decode_doubles(json.at("idf").get<std::string>());
  return model;
}

// ---------------------------------------------------------------------------
// Sequences

TokenSequence encode_sequence(const TokenList& tokens, const Vocabulary& vocab, std::size_t max_len,
                              std::size_t min_len) {
  if (max_len < min_len) {
    throw ParameterError("max_len " + std::to_string(max_len) + " is below the widest filter " +
                         std::to_string(min_len));
  }
  TokenSequence seq;
  seq.length = std::min(tokens.size(), max_len);
  seq.ids.reserve(std::max(seq.length, min_len));
  for (std::size_t i = 0; i < seq.length; ++i) seq.ids.push_back(vocab.lookup(tokens[i]));
  while (seq.ids.size() < min_len) seq.ids.push_back(Vocabulary::kPadId);
  return seq;
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingMatrix load_embeddings_text(std::string_view text, const Vocabulary& vocab,
                                     std::uint64_t seed) {
  std::unordered_map<std::string, std::vector<double>> found;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::size_t start = 0;
  std::vector<double> values;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;

    std::vector<std::string_view> fields;
    for (std::size_t pos = 0; pos < line.size();) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
      if (pos >= line.size()) break;
      std::size_t stop = pos;
      while (stop < line.size() && line[stop] != ' ' && line[stop] != '\t' && line[stop] != '\r') ++stop;
      fields.push_back(line.substr(pos, stop - pos));
      pos = stop;
    }
    if (fields.empty()) continue;
    if (fields.size() < 2) {
      throw InputFormatError("embedding line " + std::to_string(line_no) + " has no vector values");
    }
    const std::size_t line_dim = fields.size() - 1;
    if (dim == 0) {
      dim = line_dim;
    } else if (line_dim != dim) {
      throw InputFormatError("embedding line " + std::to_string(line_no) + " has " +
                             std::to_string(line_dim) + " values, expected " + std::to_string(dim));
    }
    values.assign(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      const auto field = fields[i + 1];
      const auto result = std::from_chars(field.data(), field.data() + field.size(), values[i]);
      if (result.ec != std::errc{} || result.ptr != field.data() + field.size() ||
          !std::isfinite(values[i])) {
        throw InputFormatError("unreadable number '" + std::string(field) + "' on embedding line " +
                               std::to_string(line_no));
      }
    }
    std::string word(fields[0]);
    if (vocab.contains(word) && !found.contains(word)) found.emplace(std::move(word), values);
  }
  if (dim == 0) throw InputFormatError("embedding file contains no vectors");

  EmbeddingMatrix matrix;
  matrix.rows = vocab.size();
  matrix.dim = dim;
  matrix.values.assign(matrix.rows * dim, 0.0);
  matrix.provenance.assign(matrix.rows, RowSource::kRandomInit);
  Rng rng(seed);
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    auto row = matrix.row(r);
    if (r == static_cast<std::size_t>(Vocabulary::kPadId)) continue;
    if (r >= static_cast<std::size_t>(Vocabulary::kFirstTokenId)) {
      const auto it = found.find(vocab.tokens()[r - Vocabulary::kFirstTokenId]);
      if (it != found.end()) {
        std::copy(it->second.begin(), it->second.end(), row.begin());
        matrix.provenance[r] = RowSource::kPretrained;
        continue;
      }
    }
    for (auto& v : row) v = rng.uniform(-0.25, 0.25);
  }
  return matrix;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                std::uint64_t seed) {
  return load_embeddings_text(read_file(path), vocab, seed);
}

}  // namespace algotag::features
