#include "algotag/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "algotag/error.hpp"
#include "algotag/plots.hpp"

#ifndef ALGOTAG_VERSION
#define ALGOTAG_VERSION "0.0.0"
#endif

namespace algotag::experiments {
namespace {

std::vector<metrics::ClassId> single(const std::vector<datasets::LabelSet>& sets) {
  std::vector<metrics::ClassId> out;
  out.reserve(sets.size());
  for (const auto& s : sets) out.push_back(s.front());
  return out;
}

std::vector<datasets::LabelSet> truth_of(const datasets::LabeledDataset& dataset) {
  std::vector<datasets::LabelSet> out;
  out.reserve(dataset.size());
  for (const auto& item : dataset.items) out.push_back(item.labels);
  return out;
}

metrics::MetricValues score(const datasets::LabeledDataset& dataset, const std::vector<datasets::LabelSet>& truth,
                            const std::vector<datasets::LabelSet>& pred) {
  if (dataset.kind == datasets::Kind::kMulticlass) {
    return metrics::score_multiclass(single(truth), single(pred), dataset.catalog.size());
  }
  return metrics::score_multilabel(truth, pred, dataset.catalog.size());
}

// Runs `task(i)` for i in [0, n) on up to `jobs` threads. The first failure in
// index order is rethrown.
template <typename Task>
void parallel_for(std::size_t n, std::size_t jobs, Task&& task) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.epoch(), "fold " + std::to_string(i) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.category(), "fold " + std::to_string(i) + ": " + e.what());
    }
  }
}


}  // namespace

// ---------------------------------------------------------------------------
// Categories

const std::vector<std::string>& problem_category_tags() {
  static const std::vector<std::string> tags = {"probabilities", "geometry", "combinatorics",
                                                "number theory", "strings",  "trees",
                                                "graphs",        "math",     "data structures"};
  return tags;
}

const std::vector<std::string>& solution_category_tags() {
  static const std::vector<std::string> tags = {"dsu",         "binary search", "dfs and similar",
                                                "constructive algorithms", "brute force", "greedy",
                                                "dp",          "bitmasks",      "bitmask",
                                                "two pointers", "sortings",     "implementation"};
  return tags;
}

std::set<metrics::ClassId> category_ids(const datasets::TagCatalog& catalog, const std::vector<std::string>& tags) {
  std::set<metrics::ClassId> out;
  for (const auto& t : tags) {
    if (auto id = catalog.index_of(t)) out.insert(*id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) { return derive_seed(seed, 1000 + fold); }

namespace {

struct Prepared {
  std::vector<features::TokenList> docs;
  std::vector<datasets::LabelSet> labels;
  std::optional<std::string> embedding_text;
};

Prepared prepare(const datasets::LabeledDataset& dataset, const ModelSpec& spec) {
  Prepared p;
  p.docs = tokenize_items(dataset, spec.tokenizer, spec.part);
  p.labels = truth_of(dataset);
  if (spec.embeddings && (spec.family == Family::kCnn || spec.family == Family::kCnnEnsemble)) {
    p.embedding_text = read_file(*spec.embeddings);
  }
  return p;
}

ModelArtifact fit_prepared(const datasets::LabeledDataset& dataset, const ModelSpec& spec, const Prepared& p,
                           const std::vector<std::size_t>& train, std::uint64_t seed) {
  std::vector<features::TokenList> docs;
  std::vector<datasets::LabelSet> labels;
  docs.reserve(train.size());
  labels.reserve(train.size());
  for (auto i : train) {
    docs.push_back(p.docs[i]);
    labels.push_back(p.labels[i]);
  }
  return ModelArtifact::fit(spec, dataset.kind, dataset.catalog, docs, labels, seed,
                            p.embedding_text ? &*p.embedding_text : nullptr);
}

}  // namespace

ModelArtifact fit_fold(const datasets::LabeledDataset& dataset, const ModelSpec& spec,
                       const datasets::FoldPlan& plan, std::size_t fold, std::uint64_t seed) {
  if (fold >= plan.k) throw ParameterError("fold " + std::to_string(fold) + " outside the plan");
  const auto p = prepare(dataset, spec);
  return fit_prepared(dataset, spec, p, plan.train_indices(fold), fold_seed(seed, fold));
}

CvResult run_cv(const datasets::LabeledDataset& dataset, const ModelSpec& spec, const CvOptions& options) {
  dataset.validate();
  CvResult result;
  result.plan = datasets::kfold_split(dataset, options.folds, options.seed);
  const auto p = prepare(dataset, spec);
  result.predictions.assign(dataset.size(), {});
  result.report.kind = dataset.kind;
  result.report.folds.resize(options.folds);

  parallel_for(options.folds, options.jobs, [&](std::size_t fold) {
    const auto test = result.plan.test_indices(fold);
    const auto model = fit_prepared(dataset, spec, p, result.plan.train_indices(fold), fold_seed(options.seed, fold));
    std::vector<features::TokenList> docs;
    std::vector<datasets::LabelSet> truth;
    for (auto i : test) {
      docs.push_back(p.docs[i]);
      truth.push_back(p.labels[i]);
    }
    const auto pred = model.predict_tokens(docs);
    for (std::size_t j = 0; j < test.size(); ++j) result.predictions[test[j]] = pred[j];
    result.report.folds[fold] = score(dataset, truth, pred);
  });
  result.report.pooled = score(dataset, p.labels, result.predictions);
  return result;
}

CvResult run_random_baseline(const datasets::LabeledDataset& dataset, const ModelSpec& spec,
                             const CvOptions& options) {
  const auto shuffled = datasets::shuffle_labels(dataset, options.seed);
  return run_cv(shuffled, spec, options);
}

// ---------------------------------------------------------------------------
// Ablation and categories

Json CategoryBreakdown::to_json() const {
  return {{"solution", solution.to_json()}, {"problem", problem.to_json()}, {"all", all.to_json()}};
}

CategoryBreakdown category_breakdown(const datasets::LabeledDataset& dataset,
                                     const std::vector<datasets::LabelSet>& predictions) {
  const auto truth = truth_of(dataset);
  std::set<metrics::ClassId> everything;
  for (std::size_t c = 0; c < dataset.catalog.size(); ++c) everything.insert(static_cast<metrics::ClassId>(c));
  auto scored = [&](const std::set<metrics::ClassId>& category) {
    if (category.empty()) return metrics::CategoryScore{};
    if (dataset.kind == datasets::Kind::kMulticlass) {
      return metrics::category_scores(single(truth), single(predictions), category);
    }
    return metrics::category_scores(std::span<const datasets::LabelSet>(truth),
                                    std::span<const datasets::LabelSet>(predictions), category);
  };
  CategoryBreakdown out;
  out.solution = scored(category_ids(dataset.catalog, solution_category_tags()));
  out.problem = scored(category_ids(dataset.catalog, problem_category_tags()));
  out.all = scored(everything);
  return out;
}

AblationResult run_ablation(const datasets::LabeledDataset& dataset, const ModelSpec& spec, corpus::TextPart part,
                            const CvOptions& options) {
  auto part_spec = spec;
  part_spec.part = part;
  AblationResult out;
  out.part = part;
  out.cv = run_cv(dataset, part_spec, options);
  out.categories = category_breakdown(dataset, out.cv.predictions);
  if (dataset.kind == datasets::Kind::kMulticlass) {
    out.confusion = metrics::confusion_matrix(single(truth_of(dataset)), single(out.cv.predictions),
                                              dataset.catalog.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Learning curve

std::vector<CurvePoint> run_learning_curve(const datasets::LabeledDataset& dataset, const ModelSpec& spec,
                                           const std::vector<double>& percents, const CvOptions& options) {
  if (percents.empty()) throw ParameterError("learning curve needs at least one fraction");
  std::vector<CurvePoint> points;
  for (double percent : percents) {
    const auto subset = datasets::subsample_fraction(dataset, percent, options.seed);
    CurvePoint point;
    point.percent = percent;
    point.items = subset.size();
    point.cv = run_cv(subset, spec, options);
    points.push_back(std::move(point));
  }
  return points;
}

std::string learning_curve_svg(const std::vector<CurvePoint>& points, const std::string& title) {
  std::vector<double> x;
  for (const auto& p : points) x.push_back(p.percent);
  std::vector<plots::Series> series;
  auto add = [&](const std::string& key, const std::string& label, bool right) {
    plots::Series s{label, {}, right};
    for (const auto& p : points) {
      const auto mean = p.cv.report.mean();
      auto it = mean.find(key);
      if (it == mean.end()) return;
      s.values.push_back(it->second);
    }
    series.push_back(std::move(s));
  };
  add("f1_micro", "F1 micro", false);
  add("accuracy", "accuracy", false);
  add("f1_macro", "F1 macro", false);
  add("hamming_loss", "hamming loss", true);
  return plots::line_chart_svg(title, x, "percent of training data", series, "F1", "hamming loss");
}

// ---------------------------------------------------------------------------
// Manifests

std::string dataset_fingerprint(const datasets::LabeledDataset& dataset) {
  std::vector<std::string> parts;
  parts.push_back(std::string(datasets::to_string(dataset.kind)));
  for (const auto& t : dataset.catalog.tags()) parts.push_back(t);
  for (const auto& item : dataset.items) {
    parts.push_back(item.id());
    for (auto c : item.labels) parts.push_back(std::to_string(c));
    parts.push_back(corpus::full_text(item.problem).text);
  }
  return fingerprint(parts);
}

std::string_view to_string(Experiment experiment) {
  switch (experiment) {
    case Experiment::kCv: return "cv";
    case Experiment::kRandomBaseline: return "baseline-random";
    case Experiment::kAblation: return "ablation";
    case Experiment::kLearningCurve: return "curve";
  }
  return "cv";
}

Experiment parse_experiment(std::string_view name) {
  for (auto e : {Experiment::kCv, Experiment::kRandomBaseline, Experiment::kAblation, Experiment::kLearningCurve}) {
    if (to_string(e) == name) return e;
  }
  throw ParameterError("unknown experiment '" + std::string(name) + "'");
}

Json ExperimentManifest::to_json() const {
  return {{"format", "algotag-experiment"},
          {"experiment", to_string(experiment)},
          {"dataset_dir", dataset_dir},
          {"dataset_fingerprint", dataset_fingerprint},
          {"spec", spec.to_json()},
          {"folds", folds},
          {"seed", seed},
          {"part", corpus::to_string(part)},
          {"percents", percents},
          {"version", version}};
}

ExperimentManifest ExperimentManifest::from_json(const Json& json) {
  try {
    if (json.at("format") != "algotag-experiment") throw InputFormatError("not an experiment manifest");
    ExperimentManifest m;
    m.experiment = parse_experiment(json.at("experiment").get<std::string>());
    m.dataset_dir = json.at("dataset_dir").get<std::string>();
    m.dataset_fingerprint = json.at("dataset_fingerprint").get<std::string>();
    m.spec = ModelSpec::from_json(json.at("spec"));
    m.folds = json.at("folds").get<std::size_t>();
    m.seed = json.at("seed").get<std::uint64_t>();
    m.part = corpus::parse_text_part(json.at("part").get<std::string>());
    m.percents = json.at("percents").get<std::vector<double>>();
    m.version = json.at("version").get<std::string>();
    return m;
  } catch (const Json::exception& e) {
    throw InputFormatError(std::string("malformed experiment manifest: ") + e.what());
  }
}

namespace {

Json cv_json(const CvResult& cv) {
  Json j = cv.report.to_json();
  j["fold_sizes"] = cv.plan.fold_sizes();
  return j;
}

Json reference_json() { return {{"human_f1_micro", kHumanF1Micro}, {"human_f1_macro", kHumanF1Macro}}; }

}  // namespace

ExperimentOutput run_experiment(const ExperimentManifest& manifest, const datasets::LabeledDataset& dataset,
                                std::size_t jobs) {
  ExperimentOutput out;
  out.manifest = manifest;
  out.manifest.dataset_fingerprint = dataset_fingerprint(dataset);
  out.manifest.version = ALGOTAG_VERSION;
  const CvOptions options{manifest.folds, manifest.seed, jobs};
  Json results = {{"experiment", to_string(manifest.experiment)},
                  {"model", to_string(manifest.spec.family)},
                  {"kind", datasets::to_string(dataset.kind)},
                  {"items", dataset.size()}};
  switch (manifest.experiment) {
    case Experiment::kCv:
      results["report"] = cv_json(run_cv(dataset, manifest.spec, options));
      break;
    case Experiment::kRandomBaseline:
      results["report"] = cv_json(run_random_baseline(dataset, manifest.spec, options));
      results["baseline"] = "random-labels";
      break;
    case Experiment::kAblation: {
      const auto r = run_ablation(dataset, manifest.spec, manifest.part, options);
      results["part"] = corpus::to_string(r.part);
      results["report"] = cv_json(r.cv);
      results["categories"] = r.categories.to_json();
      if (r.confusion) {
        const auto& names = dataset.catalog.tags();
        results["confusion"] = r.confusion->to_json(names);
        const std::string stem = "confusion-" + std::string(corpus::to_string(r.part));
        out.tables[stem + ".tsv"] = r.confusion->to_text(names, false);
        out.tables[stem + "-normalized.tsv"] = r.confusion->to_text(names, true);
        out.figures[stem + ".svg"] = plots::heatmap_svg("Confusion matrix (" + std::string(corpus::to_string(r.part)) + ")",
                                                        r.confusion->row_normalized(), names);
      }
      break;
    }
    case Experiment::kLearningCurve: {
      const auto points = run_learning_curve(dataset, manifest.spec, manifest.percents, options);
      Json list = Json::array();
      for (const auto& p : points) list.push_back({{"percent", p.percent}, {"items", p.items}, {"report", cv_json(p.cv)}});
      results["points"] = list;
      out.figures["learning-curve.svg"] = learning_curve_svg(points, "Learning curve");
      break;
    }
  }
  results["reference"] = reference_json();
  out.results = std::move(results);
  return out;
}

ExperimentOutput reproduce(const ExperimentManifest& manifest, std::size_t jobs) {
  const auto dataset = datasets::load_dataset(manifest.dataset_dir);
  const auto actual = dataset_fingerprint(dataset);
  if (!manifest.dataset_fingerprint.empty() && actual != manifest.dataset_fingerprint) {
    throw InputFormatError("dataset " + manifest.dataset_dir + " has fingerprint " + actual + ", manifest expects " +
                           manifest.dataset_fingerprint);
  }
  return run_experiment(manifest, dataset, jobs);
}

void write_output(const std::filesystem::path& dir, const ExperimentOutput& output) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "manifest.json", output.manifest.to_json().dump(2) + "\n");
  write_file_atomic(dir / "results.json", output.results.dump(2) + "\n");
  for (const auto& [name, svg] : output.figures) write_file_atomic(dir / name, svg);
  for (const auto& [name, text] : output.tables) write_file_atomic(dir / name, text);
}

}  // namespace algotag::experiments
