#include <gtest/gtest.h>

#include <filesystem>

#include "algotag/error.hpp"
#include "algotag/experiments.hpp"
#include "support/synthetic.hpp"

namespace algotag::experiments {
namespace {

namespace fs = std::filesystem;

ModelSpec mnb() {
  auto spec = ModelSpec::defaults(Family::kMnb);
  spec.ngrams.min_count = 1;
  return spec;
}

TEST(Cv, DeterministicAndIndependentOfJobs) {
  const auto ds = testing::synthetic_multiclass({.items = 120, .classes = 4});
  const auto a = run_cv(ds, mnb(), {.folds = 5, .seed = 3, .jobs = 1});
  const auto b = run_cv(ds, mnb(), {.folds = 5, .seed = 3, .jobs = 3});
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.plan.assignment, b.plan.assignment);
  ASSERT_EQ(a.report.folds.size(), 5u);
  EXPECT_GT(a.report.pooled.values.at("accuracy"), 0.95);
  std::size_t total = 0;
  for (const auto& f : a.report.folds) total += f.n_items;
  EXPECT_EQ(total, 120u);
}

// Letters only, so the tokenizer keeps it as one token.
std::string unique_token(std::size_t i) {
  std::string out = "uniq";
  do {
    out += static_cast<char>('a' + i % 26);
    i /= 26;
  } while (i);
  return out;
}

TEST(Cv, FeaturesAreFitOnTrainingFoldsOnly) {
  auto ds = testing::synthetic_multiclass({.items = 40, .classes = 2});
  for (std::size_t i = 0; i < ds.size(); ++i) ds.items[i].problem.statement += " " + unique_token(i);
  const auto plan = datasets::kfold_split(ds, 4, 1);
  for (std::size_t fold = 0; fold < 4; ++fold) {
    const auto model = fit_fold(ds, mnb(), plan, fold, 1);
    const auto* vocab = model.ngram_vocabulary();
    ASSERT_NE(vocab, nullptr);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const bool seen = vocab->lookup(unique_token(i)).has_value();
      EXPECT_EQ(seen, plan.assignment[i] != fold) << "item " << i << " fold " << fold;
    }
  }

  auto cnn = ModelSpec::defaults(Family::kCnn);
  cnn.vocab_min_count = 1;
  cnn.embedding_dim = 4;
  cnn.filters_per_width = 2;
  cnn.epochs = 1;
  const auto model = fit_fold(ds, cnn, plan, 0, 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(model.vocabulary()->contains(unique_token(i)), plan.assignment[i] != 0);
  }
  EXPECT_THROW(fit_fold(ds, mnb(), plan, 4, 1), ParameterError);
}

TEST(Cv, RandomLabelsFallToChance) {
  const auto ds = testing::synthetic_multiclass({.items = 200, .classes = 4});
  const auto real = run_cv(ds, mnb(), {.folds = 5, .seed = 2});
  const auto random = run_random_baseline(ds, mnb(), {.folds = 5, .seed = 2});
  EXPECT_GT(real.report.pooled.values.at("accuracy"), 0.95);
  EXPECT_LT(random.report.pooled.values.at("accuracy"), 0.45);
}

TEST(Cv, MultilabelScores) {
  const auto ds = testing::synthetic_multilabel({.items = 150, .classes = 4});
  auto spec = ModelSpec::defaults(Family::kSvm);
  spec.ngrams.min_count = 1;
  const auto r = run_cv(ds, spec, {.folds = 5, .seed = 4});
  EXPECT_GT(r.report.pooled.values.at("f1_micro"), 0.9);
  EXPECT_LT(r.report.pooled.values.at("hamming_loss"), 0.1);
}

TEST(Ablation, PartCarryingTheSignalWins) {
  for (auto placement : {testing::MarkerPlacement::kStatement, testing::MarkerPlacement::kInput}) {
    const auto ds = testing::synthetic_multiclass({.items = 150, .classes = 3, .placement = placement});
    const auto statement = run_ablation(ds, mnb(), corpus::TextPart::kStatementOnly, {.folds = 5, .seed = 1});
    const auto io = run_ablation(ds, mnb(), corpus::TextPart::kIoAndConstraints, {.folds = 5, .seed = 1});
    const double s = statement.cv.report.pooled.values.at("accuracy");
    const double i = io.cv.report.pooled.values.at("accuracy");
    if (placement == testing::MarkerPlacement::kStatement) {
      EXPECT_GT(s, 0.95);
      EXPECT_LT(i, 0.6);
    } else {
      EXPECT_GT(i, 0.95);
      EXPECT_LT(s, 0.6);
    }
    ASSERT_TRUE(statement.confusion.has_value());
    EXPECT_EQ(statement.confusion->total(), 150u);
    EXPECT_EQ(statement.part, corpus::TextPart::kStatementOnly);
  }
}

TEST(Categories, SplitByCatalogMembership) {
  // greedy, math, dp, implementation, graphs: math and graphs describe the problem.
  const auto ds = testing::synthetic_multiclass({.items = 50, .classes = 5});
  EXPECT_EQ(category_ids(ds.catalog, problem_category_tags()), (std::set<metrics::ClassId>{1, 4}));
  EXPECT_EQ(category_ids(ds.catalog, solution_category_tags()), (std::set<metrics::ClassId>{0, 2, 3}));
  std::vector<datasets::LabelSet> pred;
  for (const auto& item : ds.items) pred.push_back(item.labels);
  pred[1] = {0};  // a math item predicted as greedy
  const auto b = category_breakdown(ds, pred);
  EXPECT_EQ(b.problem.items, 20u);
  EXPECT_EQ(b.solution.items, 30u);
  EXPECT_EQ(b.all.items, 50u);
  EXPECT_DOUBLE_EQ(*b.problem.micro_f1, 19.0 / 20.0);
  EXPECT_DOUBLE_EQ(*b.solution.micro_f1, 1.0);
  EXPECT_DOUBLE_EQ(*b.solution.macro_f1, 1.0);

  const std::vector<std::string> both = {"bitmasks", "bitmask"};
  EXPECT_EQ(category_ids(datasets::TagCatalog({"dp", "bitmasks"}), solution_category_tags()),
            (std::set<metrics::ClassId>{0, 1}));
  EXPECT_EQ(category_ids(datasets::TagCatalog({"bitmask"}), both), (std::set<metrics::ClassId>{0}));
}

TEST(Curve, NestedPointsAndFullSizeMatchesCv) {
  const auto ds = testing::synthetic_multiclass({.items = 100, .classes = 2});
  const CvOptions options{.folds = 4, .seed = 6};
  const auto points = run_learning_curve(ds, mnb(), {25, 50, 100}, options);
  ASSERT_EQ(points.size(), 3u);
  EXPECT_EQ(points[0].items, 25u);
  EXPECT_EQ(points[1].items, 50u);
  EXPECT_EQ(points[2].items, 100u);
  EXPECT_EQ(points[2].cv.report, run_cv(ds, mnb(), options).report);
  const auto svg = learning_curve_svg(points, "curve");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Manifest, JsonRoundTripAndReproduce) {
  const auto dir = fs::temp_directory_path() / "algotag_experiment_test";
  fs::remove_all(dir);
  const auto ds = testing::synthetic_multiclass({.items = 60, .classes = 3});
  datasets::save_dataset(dir / "data", ds);

  ExperimentManifest m;
  m.experiment = Experiment::kAblation;
  m.dataset_dir = (dir / "data").string();
  m.spec = mnb();
  m.folds = 3;
  m.seed = 9;
  m.part = corpus::TextPart::kStatementOnly;
  const auto out = run_experiment(m, ds);
  EXPECT_EQ(out.manifest.dataset_fingerprint, dataset_fingerprint(ds));
  EXPECT_EQ(out.results["reference"]["human_f1_micro"], kHumanF1Micro);
  EXPECT_EQ(out.results["part"], "statement");
  EXPECT_TRUE(out.tables.contains("confusion-statement.tsv"));
  EXPECT_TRUE(out.figures.contains("confusion-statement.svg"));

  write_output(dir / "run", out);
  const auto loaded = ExperimentManifest::from_json(read_json_file(dir / "run" / "manifest.json"));
  EXPECT_EQ(loaded.to_json(), out.manifest.to_json());
  const auto again = reproduce(loaded);
  EXPECT_EQ(again.results, read_json_file(dir / "run" / "results.json"));

  auto tampered = loaded;
  tampered.dataset_fingerprint = "0000";
  EXPECT_THROW(reproduce(tampered), InputFormatError);
  EXPECT_EQ(parse_experiment("baseline-random"), Experiment::kRandomBaseline);
  EXPECT_THROW(parse_experiment("grid"), ParameterError);
  fs::remove_all(dir);
}

TEST(Manifest, FingerprintTracksContent) {
  auto ds = testing::synthetic_multiclass({.items = 20, .classes = 2});
  const auto before = dataset_fingerprint(ds);
  EXPECT_EQ(dataset_fingerprint(ds), before);
  ds.items[3].problem.statement += " extra";
  EXPECT_NE(dataset_fingerprint(ds), before);
}

}  // namespace
}  // namespace algotag::experiments
