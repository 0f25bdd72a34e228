#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "algotag/artifact.hpp"
#include "algotag/datasets.hpp"
#include "algotag/metrics.hpp"

namespace algotag::experiments {

// Agreement of human annotators with the reference tags, quoted in reports.
inline constexpr double kHumanF1Micro = 0.518;
inline constexpr double kHumanF1Macro = 0.427;

// Tags describing what a problem is about, and tags naming the technique
// that solves it.
const std::vector<std::string>& problem_category_tags();
const std::vector<std::string>& solution_category_tags();
std::set<metrics::ClassId> category_ids(const datasets::TagCatalog& catalog, const std::vector<std::string>& tags);

struct CvOptions {
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct CvResult {
  metrics::MetricsReport report;
  std::vector<datasets::LabelSet> predictions;  // out-of-fold, per item
  datasets::FoldPlan plan;
};

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

// Fits the spec's feature pipeline and model on the training side of `fold`.
ModelArtifact fit_fold(const datasets::LabeledDataset& dataset, const ModelSpec& spec,
                       const datasets::FoldPlan& plan, std::size_t fold, std::uint64_t seed);

CvResult run_cv(const datasets::LabeledDataset& dataset, const ModelSpec& spec, const CvOptions& options);

// Cross-validation after permuting the labels across items.
CvResult run_random_baseline(const datasets::LabeledDataset& dataset, const ModelSpec& spec,
                             const CvOptions& options);

struct CategoryBreakdown {
  metrics::CategoryScore solution;
  metrics::CategoryScore problem;
  metrics::CategoryScore all;
  Json to_json() const;
};

CategoryBreakdown category_breakdown(const datasets::LabeledDataset& dataset,
                                     const std::vector<datasets::LabelSet>& predictions);

struct AblationResult {
  corpus::TextPart part = corpus::TextPart::kFull;
  CvResult cv;
  CategoryBreakdown categories;
  std::optional<metrics::ConfusionMatrix> confusion;  // multiclass only
};

AblationResult run_ablation(const datasets::LabeledDataset& dataset, const ModelSpec& spec, corpus::TextPart part,
                            const CvOptions& options);

struct CurvePoint {
  double percent = 0.0;
  std::size_t items = 0;
  CvResult cv;
};

// Nested subsamples, one cross-validation run each.
std::vector<CurvePoint> run_learning_curve(const datasets::LabeledDataset& dataset, const ModelSpec& spec,
                                           const std::vector<double>& percents, const CvOptions& options);

std::string learning_curve_svg(const std::vector<CurvePoint>& points, const std::string& title);

// Identifies a dataset by its item ids, label names and text.
std::string dataset_fingerprint(const datasets::LabeledDataset& dataset);

enum class Experiment { kCv, kRandomBaseline, kAblation, kLearningCurve };

std::string_view to_string(Experiment experiment);
Experiment parse_experiment(std::string_view name);

struct ExperimentManifest {
  Experiment experiment = Experiment::kCv;
  std::string dataset_dir;
  std::string dataset_fingerprint;
  ModelSpec spec;
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  corpus::TextPart part = corpus::TextPart::kFull;  // ablation only
  std::vector<double> percents;                     // learning curve only
  std::string version;

  Json to_json() const;
  static ExperimentManifest from_json(const Json& json);
};

struct ExperimentOutput {
  ExperimentManifest manifest;
  Json results;
  // SVG documents keyed by file name (learning-curve plot, confusion heatmap).
  std::map<std::string, std::string> figures;
  // Confusion matrix text files keyed by file name.
  std::map<std::string, std::string> tables;
};

ExperimentOutput run_experiment(const ExperimentManifest& manifest, const datasets::LabeledDataset& dataset,
                                std::size_t jobs = 1);

// Loads the manifest's dataset, checks its fingerprint and re-runs.
ExperimentOutput reproduce(const ExperimentManifest& manifest, std::size_t jobs = 1);

// Writes manifest.json, results.json and any figures and tables into `dir`.
void write_output(const std::filesystem::path& dir, const ExperimentOutput& output);

}  // namespace algotag::experiments
