#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "algotag/serialization.hpp"

namespace algotag::features {

using TokenList = std::vector<std::string>;

struct TokenizerOptions {
  bool lowercase = true;
};

// Rule-based tokenizer: whitespace separates, and each maximal run of letters,
// each maximal run of ASCII digits, and every other single character is a token.
// Case folding covers Latin, Greek and Cyrillic.
class Tokenizer {
 public:
  Tokenizer() = default;
  explicit Tokenizer(TokenizerOptions options) : options_(options) {}

  TokenList operator()(std::string_view text) const;

  const TokenizerOptions& options() const noexcept { return options_; }

 private:
  TokenizerOptions options_;
};

TokenList tokenize(std::string_view text, const TokenizerOptions& options = {});

// Token vocabulary for sequence models. Ids 0 and 1 are reserved for the
// unknown-word and padding tokens; real tokens start at 2.
class Vocabulary {
 public:
  static constexpr std::int32_t kUnkId = 0;
  static constexpr std::int32_t kPadId = 1;
  static constexpr std::int32_t kFirstTokenId = 2;

  Vocabulary() = default;

  // Keeps tokens whose corpus frequency is at least `min_count`. Ids are
  // assigned by decreasing frequency, ties by byte order.
  static Vocabulary fit(std::span<const TokenList> documents, std::size_t min_count = 2);

  // Rebuilds a vocabulary from its serialized token list (id = position + 2).
  static Vocabulary from_tokens(std::vector<std::string> tokens, std::size_t min_count);

  std::int32_t lookup(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.contains(token); }

  std::size_t size() const noexcept { return tokens_.size() + kFirstTokenId; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t min_count() const noexcept { return min_count_; }
  std::string fingerprint() const;

  Json to_json() const;
  static Vocabulary from_json(const Json& json);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::size_t min_count_ = 2;
};

struct SparseEntry {
  std::uint32_t id;
  double value;

  bool operator==(const SparseEntry&) const = default;
};

// Feature ids are strictly increasing and no stored value is zero.
struct SparseVector {
  std::vector<SparseEntry> entries;

  bool empty() const noexcept { return entries.empty(); }
  double dot(const SparseVector& other) const;
  double squared_norm() const;
  // Largest id + 1, or 0 when empty.
  std::size_t extent() const noexcept { return entries.empty() ? 0 : entries.back().id + 1; }

  bool operator==(const SparseVector&) const = default;
};

struct NgramOptions {
  int max_order = 2;
  std::size_t min_count = 2;
  // 0 keeps every n-gram that passes min_count.
  std::size_t max_features = 0;
};

// Unigram/bigram feature space. N-grams are keyed by their tokens joined with a
// single space; out-of-vocabulary n-grams are dropped when vectorizing.
class NgramVocabulary {
 public:
  NgramVocabulary() = default;

  static NgramVocabulary fit(std::span<const TokenList> documents, const NgramOptions& options = {});

  std::optional<std::uint32_t> lookup(const std::string& ngram) const;
  std::size_t size() const noexcept { return ngrams_.size(); }
  const std::vector<std::string>& ngrams() const noexcept { return ngrams_; }
  const NgramOptions& options() const noexcept { return options_; }
  std::string fingerprint() const;

  // Raw counts of in-vocabulary n-grams.
  SparseVector vectorize(const TokenList& tokens) const;

  Json to_json() const;
  static NgramVocabulary from_json(const Json& json);

 private:
  std::vector<std::string> ngrams_;
  std::unordered_map<std::string, std::uint32_t> index_;
  NgramOptions options_;
};

// Enumerates the n-grams of orders 1..max_order.
std::vector<std::string> extract_ngrams(const TokenList& tokens, int max_order);

// Smoothed idf, ln((1 + N) / (1 + df)) + 1, with per-document L2 normalization.
class TfidfModel {
 public:
  TfidfModel() = default;

  static TfidfModel fit(std::span<const SparseVector> documents, std::size_t dimension);

  SparseVector transform(const SparseVector& counts) const;
  std::vector<SparseVector> transform(std::span<const SparseVector> documents) const;

  const std::vector<double>& idf() const noexcept { return idf_; }
  std::size_t document_count() const noexcept { return documents_; }

  Json to_json() const;
  static TfidfModel from_json(const Json& json);

 private:
  std::vector<double> idf_;
  std::size_t documents_ = 0;
};

struct TokenSequence {
  std::vector<std::int32_t> ids;
  // Token count before padding (after truncation).
  std::size_t length = 0;
};

// Maps tokens to ids, truncates to `max_len` and pads with kPadId up to
// `min_len` (the widest convolution filter).
TokenSequence encode_sequence(const TokenList& tokens, const Vocabulary& vocab, std::size_t max_len,
                              std::size_t min_len = 5);

enum class RowSource : std::uint8_t { kRandomInit = 0, kPretrained = 1 };

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // row-major rows x dim
  std::vector<RowSource> provenance;

  std::span<double> row(std::size_t r) { return {values.data() + r * dim, dim}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * dim, dim}; }
};

// Reads `word v1 ... vd` lines. Vocabulary words found in the file take the
// file vectors; the rest are drawn from U(-0.25, 0.25). The padding row is zero.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                std::uint64_t seed);
EmbeddingMatrix load_embeddings_text(std::string_view text, const Vocabulary& vocab,
                                     std::uint64_t seed);

}  // namespace algotag::features
