#include "algotag/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "algotag/error.hpp"
#include "algotag/rng.hpp"

namespace algotag::datasets {
namespace {

constexpr int kManifestVersion = 1;

std::vector<std::string> ranked_tags(const std::map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::string, std::size_t>> pairs(counts.begin(), counts.end());
  // std::map iterates keys in order, so a stable sort on count keeps ties
  // lexicographic.
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tags;
  tags.reserve(pairs.size());
  for (auto& [tag, count] : pairs) tags.push_back(tag);
  return tags;
}

Item make_item(const corpus::Problem& problem, LabelSet labels, const TagCatalog& catalog) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  Item item{problem, std::move(labels)};
  item.problem.tags.clear();
  for (auto label : item.labels) item.problem.tags.insert(catalog.name(label));
  return item;
}

void check_top_k(std::size_t k, std::size_t available) {
  if (k == 0) throw ParameterError("top-k must be positive");
  if (k > available) {
    throw ParameterError("top-k " + std::to_string(k) + " exceeds the " + std::to_string(available) +
                         " distinct tags available");
  }
}

}  // namespace

std::string_view to_string(Kind kind) {
  return kind == Kind::kMulticlass ? "multiclass" : "multilabel";
}

Kind parse_kind(std::string_view name) {
  if (name == "multiclass") return Kind::kMulticlass;
  if (name == "multilabel") return Kind::kMultilabel;
  throw ParameterError("unknown dataset kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// TagCatalog

TagCatalog::TagCatalog(std::vector<std::string> tags) : tags_(std::move(tags)) {
  for (std::size_t i = 0; i < tags_.size(); ++i) {
    if (!index_.emplace(tags_[i], static_cast<std::uint32_t>(i)).second) {
      throw ParameterError("duplicate tag '" + tags_[i] + "' in catalog");
    }
  }
}

TagCatalog TagCatalog::by_frequency(const std::vector<corpus::Problem>& problems) {
  return TagCatalog(ranked_tags(tag_frequencies(problems)));
}

TagCatalog TagCatalog::top(std::size_t k) const {
  check_top_k(k, tags_.size());
  return TagCatalog(std::vector<std::string>(tags_.begin(), tags_.begin() + static_cast<std::ptrdiff_t>(k)));
}

std::optional<std::uint32_t> TagCatalog::index_of(const std::string& tag) const {
  const auto it = index_.find(tag);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::map<std::string, std::size_t> tag_frequencies(const std::vector<corpus::Problem>& problems) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : problems) {
    for (const auto& tag : p.tags) ++counts[tag];
  }
  return counts;
}

// ---------------------------------------------------------------------------
// LabeledDataset

void LabeledDataset::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& item : items) {
    if (!ids.insert(item.id()).second) throw InputFormatError("duplicate id " + item.id());
    if (item.labels.empty()) throw InputFormatError("item " + item.id() + " has no labels");
    if (kind == Kind::kMulticlass && item.labels.size() != 1) {
      throw InputFormatError("multiclass item " + item.id() + " has " +
                             std::to_string(item.labels.size()) + " labels");
    }
    if (!std::is_sorted(item.labels.begin(), item.labels.end()) ||
        std::adjacent_find(item.labels.begin(), item.labels.end()) != item.labels.end()) {
      throw InputFormatError("item " + item.id() + " has an unsorted label set");
    }
    for (auto label : item.labels) {
      if (label >= catalog.size()) {
        throw InputFormatError("item " + item.id() + " has a label outside the catalog");
      }
    }
  }
}

bool NonAlgorithmicTags::contains(const std::string& tag) const {
  if (star_prefixed && !tag.empty() && tag.front() == '*') return true;
  return names.contains(tag);
}

std::vector<corpus::Problem> filter_raw(const std::vector<corpus::Problem>& problems,
                                        const NonAlgorithmicTags& non_algorithmic) {
  auto blank = [](const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
  };
  std::vector<corpus::Problem> kept;
  for (const auto& p : problems) {
    if (blank(p.statement) || blank(p.input_spec) || blank(p.output_spec)) continue;
    corpus::Problem copy = p;
    std::erase_if(copy.tags, [&](const std::string& t) { return non_algorithmic.contains(t); });
    if (copy.tags.empty()) continue;
    kept.push_back(std::move(copy));
  }
  return kept;
}

LabeledDataset build_multilabel(const std::vector<corpus::Problem>& problems, std::size_t k) {
  const TagCatalog all = TagCatalog::by_frequency(problems);
  check_top_k(k, all.size());
  LabeledDataset ds;
  ds.kind = Kind::kMultilabel;
  ds.catalog = all.top(k);
  for (const auto& p : problems) {
    LabelSet labels;
    for (const auto& tag : p.tags) {
      if (auto index = ds.catalog.index_of(tag)) labels.push_back(*index);
    }
    if (labels.empty()) continue;
    ds.items.push_back(make_item(p, std::move(labels), ds.catalog));
  }
  ds.recipe.push_back({{"step", "build_multilabel"}, {"top_k", k}});
  ds.validate();
  return ds;
}

LabeledDataset build_multiclass(const LabeledDataset& pool, std::size_t k) {
  check_top_k(k, pool.catalog.size());
  LabeledDataset ds;
  ds.kind = Kind::kMulticlass;
  ds.catalog = pool.catalog.top(k);
  for (const auto& item : pool.items) {
    if (item.labels.size() != 1 || item.labels.front() >= k) continue;
    // The top-k prefix keeps catalog indices unchanged.
    ds.items.push_back(make_item(item.problem, item.labels, ds.catalog));
  }
  ds.recipe = pool.recipe;
  ds.recipe.push_back({{"step", "build_multiclass"}, {"top_k", k}});
  ds.validate();
  return ds;
}

LabeledDataset build_multiclass(const std::vector<corpus::Problem>& problems, std::size_t k,
                                std::size_t pool_k) {
  return build_multiclass(build_multilabel(problems, pool_k), k);
}

LabeledDataset build_balanced(const LabeledDataset& dataset, std::size_t k, std::size_t per_class,
                              std::uint64_t seed) {
  if (dataset.kind != Kind::kMulticlass) throw ParameterError("balanced datasets need a multiclass source");
  if (per_class == 0) throw ParameterError("per-class count must be positive");

  std::vector<std::vector<std::size_t>> members(dataset.catalog.size());
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    members[dataset.items[i].labels.front()].push_back(i);
  }
  std::vector<std::uint32_t> classes;
  for (std::uint32_t c = 0; c < dataset.catalog.size(); ++c) {
    if (!members[c].empty()) classes.push_back(c);
  }
  check_top_k(k, classes.size());
  std::stable_sort(classes.begin(), classes.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (members[a].size() != members[b].size()) return members[a].size() > members[b].size();
    return dataset.catalog.name(a) < dataset.catalog.name(b);
  });
  classes.resize(k);

  std::vector<std::string> names;
  for (auto c : classes) {
    if (members[c].size() < per_class) {
      throw ParameterError("class '" + dataset.catalog.name(c) + "' has only " +
                           std::to_string(members[c].size()) + " items, " +
                           std::to_string(per_class) + " requested");
    }
    names.push_back(dataset.catalog.name(c));
  }

  LabeledDataset ds;
  ds.kind = Kind::kMulticlass;
  ds.catalog = TagCatalog(names);
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::uint32_t>> chosen;  // (source index, new label)
  for (std::uint32_t rank = 0; rank < classes.size(); ++rank) {
    const auto& pool = members[classes[rank]];
    const auto order = rng.permutation(pool.size());
    for (std::size_t j = 0; j < per_class; ++j) chosen.emplace_back(pool[order[j]], rank);
  }
  std::sort(chosen.begin(), chosen.end());
  for (const auto& [index, label] : chosen) {
    ds.items.push_back(make_item(dataset.items[index].problem, {label}, ds.catalog));
  }
  ds.recipe = dataset.recipe;
  ds.recipe.push_back({{"step", "build_balanced"}, {"top_k", k}, {"per_class", per_class}, {"seed", seed}});
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Statistics

Json DatasetStats::to_json() const {
  Json histogram = Json::array();
  for (const auto& [tag, fraction] : class_histogram) histogram.push_back({{"tag", tag}, {"fraction", fraction}});
  return {{"size", size},
          {"vocab_size", vocab_size},
          {"n_classes", n_classes},
          {"avg_words", avg_words},
          {"label_cardinality", label_cardinality},
          {"label_density", label_density},
          {"label_subsets", label_subsets},
          {"class_histogram", histogram}};
}

DatasetStats dataset_stats(const LabeledDataset& dataset, const features::Tokenizer& tokenizer) {
  if (dataset.items.empty()) throw ParameterError("cannot compute statistics of an empty dataset");
  DatasetStats stats;
  stats.size = dataset.items.size();
  stats.n_classes = dataset.catalog.size();

  std::unordered_set<std::string> vocab;
  std::set<LabelSet> subsets;
  std::vector<std::size_t> per_class(stats.n_classes, 0);
  std::size_t words = 0;
  std::size_t labels = 0;
  for (const auto& item : dataset.items) {
    const auto tokens = tokenizer(corpus::full_text(item.problem).text);
    words += tokens.size();
    vocab.insert(tokens.begin(), tokens.end());
    labels += item.labels.size();
    subsets.insert(item.labels);
    for (auto label : item.labels) ++per_class[label];
  }
  const double n = static_cast<double>(stats.size);
  stats.vocab_size = vocab.size();
  stats.avg_words = static_cast<double>(words) / n;
  stats.label_cardinality = static_cast<double>(labels) / n;
  stats.label_density = stats.label_cardinality / static_cast<double>(stats.n_classes);
  stats.label_subsets = subsets.size();
  for (std::uint32_t c = 0; c < stats.n_classes; ++c) {
    stats.class_histogram.emplace_back(dataset.catalog.name(c), static_cast<double>(per_class[c]) / n);
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Folds and resampling

std::vector<std::size_t> FoldPlan::test_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (auto f : assignment) ++sizes[f];
  return sizes;
}

FoldPlan kfold_split(const LabeledDataset& dataset, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ParameterError("fold count must be at least 2");
  if (k > dataset.items.size()) {
    throw ParameterError("fold count " + std::to_string(k) + " exceeds dataset size " +
                         std::to_string(dataset.items.size()));
  }
  FoldPlan plan;
  plan.k = k;
  plan.assignment.assign(dataset.items.size(), 0);
  Rng rng(seed);

  std::vector<std::vector<std::size_t>> groups;
  if (dataset.kind == Kind::kMulticlass) {
    groups.resize(dataset.catalog.size());
    for (std::size_t i = 0; i < dataset.items.size(); ++i) {
      groups[dataset.items[i].labels.front()].push_back(i);
    }
  } else {
    groups.emplace_back(dataset.items.size());
    std::iota(groups.front().begin(), groups.front().end(), std::size_t{0});
  }
  std::size_t next_fold = 0;
  for (auto& group : groups) {
    rng.shuffle(group);
    for (auto index : group) {
      plan.assignment[index] = next_fold;
      next_fold = (next_fold + 1) % k;
    }
  }
  return plan;
}

LabeledDataset shuffle_labels(const LabeledDataset& dataset, std::uint64_t seed) {
  Rng rng(seed);
  const auto order = rng.permutation(dataset.items.size());
  LabeledDataset out;
  out.kind = dataset.kind;
  out.catalog = dataset.catalog;
  out.items.reserve(dataset.items.size());
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    out.items.push_back(make_item(dataset.items[i].problem, dataset.items[order[i]].labels, out.catalog));
  }
  out.recipe = dataset.recipe;
  out.recipe.push_back({{"step", "shuffle_labels"}, {"seed", seed}});
  return out;
}

std::vector<std::size_t> subsample_indices(std::size_t size, double percent, std::uint64_t seed) {
  if (!(percent > 0.0 && percent <= 100.0)) {
    throw ParameterError("fraction percent " + format_number(percent) + " is outside (0, 100]");
  }
  const auto keep = static_cast<std::size_t>(std::llround(static_cast<double>(size) * percent / 100.0));
  Rng rng(seed);
  auto order = rng.permutation(size);
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

LabeledDataset select(const LabeledDataset& dataset, const std::vector<std::size_t>& indices) {
  LabeledDataset out;
  out.kind = dataset.kind;
  out.catalog = dataset.catalog;
  out.recipe = dataset.recipe;
  out.items.reserve(indices.size());
  for (auto i : indices) out.items.push_back(dataset.items.at(i));
  return out;
}

LabeledDataset subsample_fraction(const LabeledDataset& dataset, double percent, std::uint64_t seed) {
  auto out = select(dataset, subsample_indices(dataset.items.size(), percent, seed));
  out.recipe.push_back({{"step", "subsample_fraction"}, {"percent", percent}, {"seed", seed}});
  return out;
}

// ---------------------------------------------------------------------------
// Files

void save_dataset(const std::filesystem::path& dir, const LabeledDataset& dataset) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  std::vector<corpus::Problem> problems;
  problems.reserve(dataset.items.size());
  for (const auto& item : dataset.items) problems.push_back(item.problem);
  corpus::write_corpus(dir / "problems.jsonl", problems);
  const Json manifest = {{"format", "algotag-dataset"},
                         {"version", kManifestVersion},
                         {"kind", to_string(dataset.kind)},
                         {"catalog", dataset.catalog.tags()},
                         {"size", dataset.items.size()},
                         {"recipe", dataset.recipe}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

LabeledDataset load_dataset(const std::filesystem::path& dir) {
  const Json manifest = read_json_file(dir / "manifest.json");
  if (manifest.value("format", "") != "algotag-dataset") {
    throw InputFormatError(dir.string() + "/manifest.json is not a dataset manifest");
  }
  if (manifest.value("version", 0) != kManifestVersion) {
    throw InputFormatError("unsupported dataset manifest version in " + dir.string());
  }
  LabeledDataset ds;
  ds.kind = parse_kind(manifest.at("kind").get<std::string>());
  ds.catalog = TagCatalog(manifest.at("catalog").get<std::vector<std::string>>());
  ds.recipe = manifest.value("recipe", Json::array());
  for (auto& p : corpus::parse_corpus(dir / "problems.jsonl")) {
    LabelSet labels;
    for (const auto& tag : p.tags) {
      const auto index = ds.catalog.index_of(tag);
      if (!index) throw InputFormatError("problem " + p.id + " has tag '" + tag + "' outside the catalog");
      labels.push_back(*index);
    }
    ds.items.push_back(make_item(p, std::move(labels), ds.catalog));
  }
  ds.validate();
  return ds;
}

}  // namespace algotag::datasets
