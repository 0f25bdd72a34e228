#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "algotag/corpus.hpp"
#include "algotag/features.hpp"
#include "algotag/serialization.hpp"

namespace algotag::datasets {

enum class Kind { kMulticlass, kMultilabel };

std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view name);

// Sorted, duplicate-free catalog indices.
using LabelSet = std::vector<std::uint32_t>;

// Ordered list of tag names. Catalogs built from a corpus are ranked by
// decreasing frequency with ties broken lexicographically.
class TagCatalog {
 public:
  TagCatalog() = default;
  explicit TagCatalog(std::vector<std::string> tags);

  // Every tag present in `problems`, ranked.
  static TagCatalog by_frequency(const std::vector<corpus::Problem>& problems);

  TagCatalog top(std::size_t k) const;

  std::size_t size() const noexcept { return tags_.size(); }
  const std::vector<std::string>& tags() const noexcept { return tags_; }
  const std::string& name(std::uint32_t index) const { return tags_.at(index); }
  std::optional<std::uint32_t> index_of(const std::string& tag) const;

  bool operator==(const TagCatalog& other) const { return tags_ == other.tags_; }

 private:
  std::vector<std::string> tags_;
  std::map<std::string, std::uint32_t> index_;
};

std::map<std::string, std::size_t> tag_frequencies(const std::vector<corpus::Problem>& problems);

struct Item {
  // `problem.tags` always mirrors `labels` by name.
  corpus::Problem problem;
  LabelSet labels;

  const std::string& id() const noexcept { return problem.id; }
};

struct LabeledDataset {
  Kind kind = Kind::kMultilabel;
  TagCatalog catalog;
  std::vector<Item> items;
  // Builder steps that produced this dataset, in order.
  Json recipe = Json::array();

  std::size_t size() const noexcept { return items.size(); }

  // Throws InputFormatError on any broken invariant.
  void validate() const;
};

// Tags treated as non-algorithmic by filter_raw.
struct NonAlgorithmicTags {
  std::set<std::string> names = {"*special", "*special problem"};
  // Tags starting with '*' are platform markers (special problems, ratings).
  bool star_prefixed = true;

  bool contains(const std::string& tag) const;
};

// Strips non-algorithmic tags, then drops problems left without tags and
// problems whose statement, input or output section is missing.
std::vector<corpus::Problem> filter_raw(const std::vector<corpus::Problem>& problems,
                                        const NonAlgorithmicTags& non_algorithmic = {});

// Top-k tags by frequency; tags outside the catalog are removed and problems
// left without tags are dropped.
LabeledDataset build_multilabel(const std::vector<corpus::Problem>& problems, std::size_t k);

// Single-tag items of `pool` whose tag is among the first k catalog entries.
LabeledDataset build_multiclass(const LabeledDataset& pool, std::size_t k);

// Convenience: single-tag problems of the top-`pool_k` multilabel build,
// restricted to the top-k tags.
LabeledDataset build_multiclass(const std::vector<corpus::Problem>& problems, std::size_t k,
                                std::size_t pool_k = 20);

// Exactly `per_class` items for each of the k most common classes of a
// multiclass dataset, sampled without replacement.
LabeledDataset build_balanced(const LabeledDataset& dataset, std::size_t k, std::size_t per_class,
                              std::uint64_t seed);

struct DatasetStats {
  std::size_t size = 0;
  std::size_t vocab_size = 0;
  std::size_t n_classes = 0;
  double avg_words = 0.0;
  double label_cardinality = 0.0;
  double label_density = 0.0;
  std::size_t label_subsets = 0;
  // Fraction of items carrying each tag, in catalog order.
  std::vector<std::pair<std::string, double>> class_histogram;

  Json to_json() const;
};

DatasetStats dataset_stats(const LabeledDataset& dataset, const features::Tokenizer& tokenizer);

struct FoldPlan {
  std::size_t k = 0;
  // assignment[i] is the test fold of dataset item i.
  std::vector<std::size_t> assignment;

  std::vector<std::size_t> test_indices(std::size_t fold) const;
  std::vector<std::size_t> train_indices(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

// Multiclass plans are stratified: each class is dealt round-robin over the
// folds, continuing where the previous class stopped, so both per-class and
// total fold sizes differ by at most one.
FoldPlan kfold_split(const LabeledDataset& dataset, std::size_t k, std::uint64_t seed);

// Permutes label sets across items; the multiset of label sets is unchanged.
LabeledDataset shuffle_labels(const LabeledDataset& dataset, std::uint64_t seed);

// round(size * percent / 100) items taken as a prefix of one seeded
// permutation, so smaller fractions nest inside larger ones. Item order is
// preserved.
LabeledDataset subsample_fraction(const LabeledDataset& dataset, double percent, std::uint64_t seed);

// Same as subsample_fraction but returns the kept item indices.
std::vector<std::size_t> subsample_indices(std::size_t size, double percent, std::uint64_t seed);

LabeledDataset select(const LabeledDataset& dataset, const std::vector<std::size_t>& indices);

// Dataset directory: problems.jsonl (corpus format, tags = labels) and
// manifest.json (kind, catalog order, recipe).
void save_dataset(const std::filesystem::path& dir, const LabeledDataset& dataset);
LabeledDataset load_dataset(const std::filesystem::path& dir);

}  // namespace algotag::datasets
