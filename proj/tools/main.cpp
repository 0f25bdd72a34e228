#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "algotag/artifact.hpp"
#include "algotag/corpus.hpp"
#include "algotag/datasets.hpp"
#include "algotag/error.hpp"
#include "algotag/experiments.hpp"
#include "algotag/metrics.hpp"

namespace fs = std::filesystem;
using namespace algotag;

namespace {

enum class Format { kText, kStructured };

struct Common {
  std::string format = "text";
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());

  Format fmt() const { return format == "structured" ? Format::kStructured : Format::kText; }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--format", common.format, "Report format")->check(CLI::IsMember({"text", "structured"}));
  cmd->add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

// Model family plus every tunable the experiments expose.
struct ModelFlags {
  std::string family = "cnn";
  std::optional<std::string> embeddings;
  bool tfidf = false;
  bool static_embeddings = false;
  std::optional<std::size_t> epochs, batch_size, embedding_dim, filters, max_len, members, max_features, svm_epochs;
  std::optional<double> learning_rate, dropout, alpha, svm_reg;
  std::optional<std::vector<std::size_t>> hidden;
  std::optional<std::string> scheme, loss;
  bool keep_case = false;

  ModelSpec spec() const {
    ModelSpec s = ModelSpec::defaults(parse_family(family));
    s.tfidf = tfidf;
    s.tokenizer.lowercase = !keep_case;
    if (embeddings) s.embeddings = *embeddings;
    s.trainable_embeddings = !static_embeddings;
    if (epochs) s.epochs = *epochs;
    if (batch_size) s.batch_size = *batch_size;
    if (embedding_dim) s.embedding_dim = *embedding_dim;
    if (filters) s.filters_per_width = *filters;
    if (max_len) s.max_len = *max_len;
    if (members) s.ensemble_members = *members;
    if (max_features) s.ngrams.max_features = *max_features;
    if (svm_epochs) s.svm.epochs = *svm_epochs;
    if (learning_rate) s.learning_rate = *learning_rate;
    if (dropout) s.dropout = *dropout;
    if (alpha) s.alpha = *alpha;
    if (svm_reg) s.svm.reg = *svm_reg;
    if (hidden) s.mlp_hidden = *hidden;
    if (scheme) s.scheme = ensemble::parse_scheme(*scheme);
    if (loss) s.loss = nn::parse_loss(*loss);
    return s;
  }
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
  cmd->add_option("--model", m.family, "Model family")
      ->check(CLI::IsMember({"mnb", "svm", "mlp", "cnn", "cnn-ensemble"}));
  cmd->add_option("--embeddings", m.embeddings, "Pretrained word vectors (word v1 ... vd per line)");
  cmd->add_flag("--tfidf", m.tfidf, "TF-IDF weighting of n-gram counts");
  cmd->add_flag("--static-embeddings", m.static_embeddings, "Freeze the embedding layer");
  cmd->add_flag("--keep-case", m.keep_case, "Do not lowercase before tokenizing");
  cmd->add_option("--epochs", m.epochs);
  cmd->add_option("--batch-size", m.batch_size);
  cmd->add_option("--lr", m.learning_rate, "Adam learning rate");
  cmd->add_option("--embedding-dim", m.embedding_dim);
  cmd->add_option("--filters", m.filters, "Filters per width");
  cmd->add_option("--max-len", m.max_len, "Tokens kept per problem");
  cmd->add_option("--dropout", m.dropout);
  cmd->add_option("--members", m.members, "Ensemble size");
  cmd->add_option("--scheme", m.scheme, "Ensemble combination")
      ->check(CLI::IsMember({"majority_vote", "sum_activation"}));
  cmd->add_option("--loss", m.loss)->check(CLI::IsMember({"cross_entropy_softmax", "bce_sigmoid", "mse_sigmoid"}));
  cmd->add_option("--alpha", m.alpha, "Naive Bayes smoothing");
  cmd->add_option("--svm-reg", m.svm_reg, "SVM regularization strength");
  cmd->add_option("--svm-epochs", m.svm_epochs);
  cmd->add_option("--hidden", m.hidden, "MLP hidden layer widths")->delimiter(',');
  cmd->add_option("--max-features", m.max_features, "Cap on the n-gram vocabulary");
}

std::string pct(double v) { return fmt::format("{:.2f}", 100.0 * v); }

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

std::string report_text(const Json& report) {
  std::ostringstream out;
  const bool multiclass = report.at("kind") == "multiclass";
  const std::vector<std::string> keys = multiclass
                                            ? std::vector<std::string>{"accuracy", "f1_weighted_macro", "f1_macro"}
                                            : std::vector<std::string>{"hamming_loss", "f1_micro", "f1_macro"};
  auto cell = [](const std::string& key, double v) {
    return key == "hamming_loss" ? fmt::format("{:.4f}", v) : pct(v);
  };
  out << fmt::format("{:<10}", "");
  for (const auto& k : keys) out << fmt::format("{:>20}", k);
  out << "\n" << fmt::format("{:<10}", "mean");
  for (const auto& k : keys) out << fmt::format("{:>20}", cell(k, report.at("mean").at(k).get<double>()));
  out << "\n" << fmt::format("{:<10}", "pooled");
  for (const auto& k : keys) out << fmt::format("{:>20}", cell(k, report.at("pooled").at("values").at(k).get<double>()));
  out << "\n";
  std::size_t i = 0;
  for (const auto& fold : report.at("folds")) {
    out << fmt::format("{:<10}", fmt::format("fold {}", i++));
    for (const auto& k : keys) out << fmt::format("{:>20}", cell(k, fold.at("values").at(k).get<double>()));
    out << "\n";
  }
  return out.str();
}

std::string categories_text(const Json& categories) {
  std::ostringstream out;
  out << fmt::format("{:<10}{:>8}{:>12}{:>12}{:>16}\n", "category", "items", "F1 micro", "F1 macro", "F1 weighted");
  for (const char* name : {"solution", "problem", "all"}) {
    const auto& c = categories.at(name);
    auto v = [&](const char* key) { return c.at(key).is_null() ? std::string("n/a") : pct(c.at(key).get<double>()); };
    out << fmt::format("{:<10}{:>8}{:>12}{:>12}{:>16}\n", name, c.at("items").get<std::size_t>(), v("f1_micro"),
                       v("f1_macro"), v("f1_weighted_macro"));
  }
  return out.str();
}

void print_results(const experiments::ExperimentOutput& out, Format format) {
  if (format == Format::kStructured) {
    print_json(out.results);
    return;
  }
  const auto& r = out.results;
  std::cout << fmt::format("{} | model {} | {} items | {}\n", r.at("experiment").get<std::string>(),
                           r.at("model").get<std::string>(), r.at("items").get<std::size_t>(),
                           r.at("kind").get<std::string>());
  if (r.contains("part")) std::cout << "text part: " << r.at("part").get<std::string>() << "\n";
  if (r.contains("report")) std::cout << report_text(r.at("report"));
  if (r.contains("categories")) std::cout << "\n" << categories_text(r.at("categories"));
  if (r.contains("points")) {
    for (const auto& p : r.at("points")) {
      std::cout << fmt::format("\n{}% ({} items)\n", p.at("percent").get<double>(), p.at("items").get<std::size_t>());
      std::cout << report_text(p.at("report"));
    }
  }
  std::cout << fmt::format("reference: human annotators F1 micro {:.1f}, F1 macro {:.1f}\n",
                           100.0 * experiments::kHumanF1Micro, 100.0 * experiments::kHumanF1Macro);
}

// Shared by the experiment subcommands.
struct ExperimentFlags {
  std::string dataset;
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  std::string out;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& e) {
  cmd->add_option("--dataset", e.dataset, "Dataset directory")->required();
  cmd->add_option("--folds", e.folds, "Cross-validation folds");
  cmd->add_option("--seed", e.seed);
  cmd->add_option("--out", e.out, "Output directory for manifest, results and figures")->required();
}

int run_experiment_command(experiments::Experiment kind, const ExperimentFlags& e, const ModelFlags& m,
                           const Common& common, corpus::TextPart part = corpus::TextPart::kFull,
                           std::vector<double> percents = {}) {
  const auto dataset = datasets::load_dataset(e.dataset);
  experiments::ExperimentManifest manifest;
  manifest.experiment = kind;
  manifest.dataset_dir = fs::absolute(e.dataset).lexically_normal().string();
  manifest.spec = m.spec();
  manifest.folds = e.folds;
  manifest.seed = e.seed;
  manifest.part = part;
  manifest.percents = std::move(percents);
  const auto out = experiments::run_experiment(manifest, dataset, common.jobs);
  experiments::write_output(e.out, out);
  print_results(out, common.fmt());
  return 0;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

corpus::Problem read_problem(const fs::path& path) {
  const auto text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw InputFormatError("problem file " + path.string() + " is empty");
  try {
    const Json json = Json::parse(text);
    return corpus::problem_from_json(json, 1);
  } catch (const Json::parse_error&) {
    // Not a single document; fall back to the line-delimited corpus format.
  }
  const auto problems = corpus::parse_corpus_text(text);
  if (problems.size() != 1) {
    throw InputFormatError("problem file " + path.string() + " holds " + std::to_string(problems.size()) +
                           " problems, expected one");
  }
  return problems.front();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tag programming word problems with their algorithm classes"};
  app.require_subcommand(1);
  Common common;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Filter a raw problem dump into a clean corpus");
  std::string raw_path, corpus_out, non_algorithmic;
  ingest->add_option("--raw", raw_path, "Raw line-delimited JSON dump")->required();
  ingest->add_option("--non-algorithmic", non_algorithmic, "Comma-separated tags to drop");
  ingest->add_option("--out", corpus_out, "Output corpus file")->required();
  add_common(ingest, common);

  // build-dataset
  auto* build = app.add_subcommand("build-dataset", "Build a labelled dataset from a corpus");
  std::string build_corpus, build_kind = "multilabel", build_out;
  std::size_t top_k = 20, per_class = 0, source_k = 10, pool_k = 20;
  std::uint64_t build_seed = 0;
  build->add_option("--corpus", build_corpus, "Corpus produced by ingest")->required();
  build->add_option("--kind", build_kind)->check(CLI::IsMember({"multilabel", "multiclass", "balanced"}));
  build->add_option("--top-k", top_k, "Number of classes")->check(CLI::PositiveNumber);
  build->add_option("--per-class", per_class, "Items per class (balanced)");
  build->add_option("--source-k", source_k, "Classes of the multiclass source (balanced)");
  build->add_option("--pool-k", pool_k, "Multilabel catalog the multiclass view is cut from");
  build->add_option("--seed", build_seed);
  build->add_option("--out", build_out, "Output dataset directory")->required();
  add_common(build, common);

  // stats
  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  std::string stats_dataset;
  stats->add_option("--dataset", stats_dataset)->required();
  add_common(stats, common);

  // train
  auto* train = app.add_subcommand("train", "Train a model on a whole dataset");
  ExperimentFlags train_flags;
  ModelFlags train_model;
  std::string train_out, train_report;
  train_flags.folds = 0;
  train->add_option("--dataset", train_flags.dataset)->required();
  train->add_option("--folds", train_flags.folds, "Also cross-validate with this many folds (0 = skip)");
  train->add_option("--seed", train_flags.seed);
  train->add_option("--out", train_out, "Artifact file")->required();
  train->add_option("--report-dir", train_report, "Where the cross-validation report goes");
  add_model_flags(train, train_model);
  add_common(train, common);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score an artifact on a dataset");
  std::string eval_dataset, eval_artifact;
  evaluate->add_option("--dataset", eval_dataset)->required();
  evaluate->add_option("--artifact", eval_artifact)->required();
  add_common(evaluate, common);

  // cv
  auto* cv = app.add_subcommand("cv", "Cross-validate a model");
  ExperimentFlags cv_flags;
  ModelFlags cv_model;
  add_experiment_flags(cv, cv_flags);
  add_model_flags(cv, cv_model);
  add_common(cv, common);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Cross-validate on one part of the problem text");
  ExperimentFlags ablate_flags;
  ModelFlags ablate_model;
  std::string ablate_part = "full";
  ablate->add_option("--part", ablate_part)->check(CLI::IsMember({"full", "statement", "io"}));
  add_experiment_flags(ablate, ablate_flags);
  add_model_flags(ablate, ablate_model);
  add_common(ablate, common);

  // curve
  auto* curve = app.add_subcommand("curve", "Learning curve over nested subsamples");
  ExperimentFlags curve_flags;
  ModelFlags curve_model;
  std::vector<double> fractions = {25, 50, 75, 100};
  curve->add_option("--fractions", fractions, "Percentages of the dataset")->delimiter(',');
  add_experiment_flags(curve, curve_flags);
  add_model_flags(curve, curve_model);
  add_common(curve, common);

  // baseline-random
  auto* baseline = app.add_subcommand("baseline-random", "Cross-validate on randomly permuted labels");
  ExperimentFlags baseline_flags;
  ModelFlags baseline_model;
  add_experiment_flags(baseline, baseline_flags);
  add_model_flags(baseline, baseline_model);
  add_common(baseline, common);

  // predict
  auto* predict = app.add_subcommand("predict", "Tag one problem");
  std::string predict_artifact, predict_problem;
  predict->add_option("--artifact", predict_artifact)->required();
  predict->add_option("--problem", predict_problem, "Problem as a JSON object")->required();
  add_common(predict, common);

  // reproduce
  auto* reproduce = app.add_subcommand("reproduce", "Re-run an experiment from its manifest");
  std::string manifest_path, reproduce_out;
  reproduce->add_option("--manifest", manifest_path)->required();
  reproduce->add_option("--out", reproduce_out, "Write the re-run here instead of comparing only");
  add_common(reproduce, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(Error::Category::kParameter);
  }

  try {
    const Format format = common.fmt();
    if (*ingest) {
      corpus::Diagnostics diagnostics;
      const auto problems = corpus::parse_corpus(raw_path, &diagnostics);
      datasets::NonAlgorithmicTags tags;
      for (const auto& t : split_list(non_algorithmic)) tags.names.insert(t);
      const auto kept = datasets::filter_raw(problems, tags);
      corpus::write_corpus(corpus_out, kept);
      const Json report = {{"read", problems.size()},
                           {"kept", kept.size()},
                           {"dropped", problems.size() - kept.size()},
                           {"warnings", diagnostics.warnings}};
      if (format == Format::kStructured) {
        print_json(report);
      } else {
        std::cout << fmt::format("read {} problems, kept {}, dropped {}\n", problems.size(), kept.size(),
                                 problems.size() - kept.size());
        for (const auto& w : diagnostics.warnings) std::cout << "warning: " << w << "\n";
      }
    } else if (*build) {
      const auto problems = corpus::parse_corpus(build_corpus);
      datasets::LabeledDataset ds;
      if (build_kind == "multilabel") {
        ds = datasets::build_multilabel(problems, top_k);
      } else if (build_kind == "multiclass") {
        ds = datasets::build_multiclass(problems, top_k, pool_k);
      } else {
        if (per_class == 0) throw ParameterError("--per-class is required for balanced datasets");
        ds = datasets::build_balanced(datasets::build_multiclass(problems, source_k, pool_k), top_k, per_class,
                                      build_seed);
      }
      ds.recipe.insert(ds.recipe.begin(), Json{{"step", "source"}, {"corpus", fs::absolute(build_corpus).string()}});
      datasets::save_dataset(build_out, ds);
      if (format == Format::kStructured) {
        print_json({{"size", ds.size()}, {"catalog", ds.catalog.tags()}, {"out", build_out}});
      } else {
        std::cout << fmt::format("{} dataset with {} problems and {} classes written to {}\n", build_kind, ds.size(),
                                 ds.catalog.size(), build_out);
      }
    } else if (*stats) {
      const auto ds = datasets::load_dataset(stats_dataset);
      const auto s = datasets::dataset_stats(ds, features::Tokenizer{});
      if (format == Format::kStructured) {
        print_json(s.to_json());
      } else {
        std::cout << fmt::format("{:<20}{}\n", "size", s.size) << fmt::format("{:<20}{}\n", "vocabulary", s.vocab_size)
                  << fmt::format("{:<20}{}\n", "classes", s.n_classes)
                  << fmt::format("{:<20}{:.1f}\n", "avg words", s.avg_words);
        if (ds.kind == datasets::Kind::kMultilabel) {
          std::cout << fmt::format("{:<20}{:.3f}\n", "label cardinality", s.label_cardinality)
                    << fmt::format("{:<20}{:.3f}\n", "label density", s.label_density)
                    << fmt::format("{:<20}{}\n", "label subsets", s.label_subsets);
        }
        std::cout << "class histogram\n";
        for (const auto& [tag, fraction] : s.class_histogram) std::cout << fmt::format("  {:<28}{:>7}%\n", tag, pct(fraction));
      }
    } else if (*train) {
      const auto ds = datasets::load_dataset(train_flags.dataset);
      const auto spec = train_model.spec();
      if (train_flags.folds >= 2) {
        experiments::ExperimentManifest manifest;
        manifest.experiment = experiments::Experiment::kCv;
        manifest.dataset_dir = fs::absolute(train_flags.dataset).lexically_normal().string();
        manifest.spec = spec;
        manifest.folds = train_flags.folds;
        manifest.seed = train_flags.seed;
        const auto out = experiments::run_experiment(manifest, ds, common.jobs);
        const fs::path dir = train_report.empty() ? fs::path(train_out).replace_extension(".cv") : fs::path(train_report);
        experiments::write_output(dir, out);
        print_results(out, format);
      }
      const auto artifact = ModelArtifact::fit(spec, ds, train_flags.seed);
      if (!fs::path(train_out).parent_path().empty()) fs::create_directories(fs::path(train_out).parent_path());
      artifact.save(train_out);
      if (format == Format::kText) std::cout << "artifact written to " << train_out << "\n";
    } else if (*evaluate) {
      const auto ds = datasets::load_dataset(eval_dataset);
      const auto artifact = ModelArtifact::load(eval_artifact);
      if (!(artifact.catalog() == ds.catalog) || artifact.kind() != ds.kind) {
        throw ParameterError("artifact " + eval_artifact + " was trained on a different catalog or dataset kind");
      }
      std::vector<corpus::Problem> problems;
      std::vector<datasets::LabelSet> truth;
      for (const auto& item : ds.items) {
        problems.push_back(item.problem);
        truth.push_back(item.labels);
      }
      const auto pred = artifact.predict(problems);
      metrics::MetricsReport report;
      report.kind = ds.kind;
      if (ds.kind == datasets::Kind::kMulticlass) {
        std::vector<metrics::ClassId> t, p;
        for (std::size_t i = 0; i < pred.size(); ++i) {
          t.push_back(truth[i].front());
          p.push_back(pred[i].front());
        }
        report.pooled = metrics::score_multiclass(t, p, ds.catalog.size());
      } else {
        report.pooled = metrics::score_multilabel(truth, pred, ds.catalog.size());
      }
      report.folds.push_back(report.pooled);
      if (format == Format::kStructured) {
        print_json(report.to_json());
      } else {
        std::cout << report_text(report.to_json());
      }
    } else if (*cv) {
      return run_experiment_command(experiments::Experiment::kCv, cv_flags, cv_model, common);
    } else if (*ablate) {
      return run_experiment_command(experiments::Experiment::kAblation, ablate_flags, ablate_model, common,
                                    corpus::parse_text_part(ablate_part));
    } else if (*curve) {
      return run_experiment_command(experiments::Experiment::kLearningCurve, curve_flags, curve_model, common,
                                    corpus::TextPart::kFull, fractions);
    } else if (*baseline) {
      return run_experiment_command(experiments::Experiment::kRandomBaseline, baseline_flags, baseline_model, common);
    } else if (*predict) {
      const auto artifact = ModelArtifact::load(predict_artifact);
      const auto tags = artifact.predict_tags(read_problem(predict_problem));
      if (format == Format::kStructured) {
        print_json({{"tags", tags}});
      } else {
        for (const auto& t : tags) std::cout << t << "\n";
      }
    } else if (*reproduce) {
      const auto manifest = experiments::ExperimentManifest::from_json(read_json_file(manifest_path));
      const auto out = experiments::reproduce(manifest, common.jobs);
      if (!reproduce_out.empty()) experiments::write_output(reproduce_out, out);
      const auto recorded = fs::path(manifest_path).parent_path() / "results.json";
      if (fs::exists(recorded)) {
        const bool same = read_json_file(recorded) == out.results;
        std::cout << (same ? "reproduced: results identical\n" : "MISMATCH: results differ from " + recorded.string() + "\n");
        if (!same) return 1;
      } else {
        print_results(out, format);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
