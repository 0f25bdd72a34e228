#include "algotag/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "algotag/error.hpp"
#include "algotag/linear_models.hpp"

namespace algotag::ensemble {
namespace {

std::vector<double> summed(std::span<const std::vector<double>> members) {
  if (members.empty()) throw ParameterError("ensemble decode needs at least one member");
  std::vector<double> sum(members.front().size(), 0.0);
  for (const auto& m : members) {
    if (m.size() != sum.size()) throw ParameterError("ensemble members disagree on the number of classes");
    for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += m[c];
  }
  if (sum.empty()) throw ParameterError("ensemble activations are empty");
  return sum;
}

}  // namespace

std::string_view to_string(Scheme scheme) {
  return scheme == Scheme::kMajorityVote ? "majority_vote" : "sum_activation";
}

Scheme parse_scheme(std::string_view name) {
  if (name == "majority_vote") return Scheme::kMajorityVote;
  if (name == "sum_activation") return Scheme::kSumActivation;
  throw ParameterError("unknown ensemble scheme '" + std::string(name) + "'");
}

ClassId majority_vote(std::span<const ClassId> member_predictions) {
  if (member_predictions.empty()) throw ParameterError("majority vote over no members");
  const ClassId top = *std::max_element(member_predictions.begin(), member_predictions.end());
  std::vector<std::size_t> votes(static_cast<std::size_t>(top) + 1, 0);
  for (ClassId c : member_predictions) ++votes[c];
  return static_cast<ClassId>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

LabelSet sum_activation_decode(std::span<const std::vector<double>> member_activations) {
  return linear::decode_multilabel(summed(member_activations));
}

LabelSet sum_activation_decode_sigmoid(std::span<const std::vector<double>> member_activations) {
  const auto sum = summed(member_activations);
  LabelSet out;
  for (std::size_t c = 0; c < sum.size(); ++c) {
    if (-std::expm1(-sum[c]) > 0.0) out.push_back(static_cast<ClassId>(c));
  }
  if (out.empty()) out.push_back(linear::argmax(sum));
  return out;
}

CnnEnsemble::CnnEnsemble(Scheme scheme, std::vector<nn::CnnModel> members)
    : scheme_(scheme), members_(std::move(members)) {
  if (members_.empty()) throw ParameterError("an ensemble needs at least one member");
  const auto& first = members_.front().config();
  for (const auto& m : members_) {
    if (m.config().n_classes != first.n_classes || m.config().vocab_size != first.vocab_size) {
      throw ParameterError("ensemble members must share the vocabulary and class catalog");
    }
  }
}

CnnEnsemble CnnEnsemble::train(const nn::CnnConfig& config, std::span<const features::TokenSequence> inputs,
                               const nn::Tensor& targets, const nn::TrainOptions& train_options,
                               const EnsembleOptions& options, const features::EmbeddingMatrix* pretrained) {
  if (options.members == 0) throw ParameterError("an ensemble needs at least one member");
  std::vector<nn::CnnModel> members;
  for (std::size_t i = 0; i < options.members; ++i) {
    const std::uint64_t seed = options.base_seed + i;
    auto model = nn::CnnModel::create(config, seed, pretrained);
    auto opts = train_options;
    opts.seed = seed;
    nn::train_cnn(model, inputs, targets, opts);
    members.push_back(std::move(model));
  }
  return CnnEnsemble(options.scheme, std::move(members));
}

std::vector<nn::Tensor> CnnEnsemble::member_activations(std::span<const features::TokenSequence> inputs) const {
  std::vector<nn::Tensor> out;
  for (const auto& m : members_) out.push_back(nn::predict_cnn(m, inputs));
  return out;
}

std::vector<ClassId> CnnEnsemble::predict_multiclass(std::span<const features::TokenSequence> inputs) const {
  const auto acts = member_activations(inputs);
  const std::size_t classes = members_.front().config().n_classes;
  std::vector<ClassId> out(inputs.size());
  std::vector<ClassId> votes(members_.size());
  std::vector<std::vector<double>> rows(members_.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t m = 0; m < members_.size(); ++m) {
      rows[m].assign(acts[m].values.begin() + static_cast<std::ptrdiff_t>(i * classes),
                     acts[m].values.begin() + static_cast<std::ptrdiff_t>((i + 1) * classes));
      votes[m] = linear::argmax(rows[m]);
    }
    out[i] = scheme_ == Scheme::kMajorityVote ? majority_vote(votes) : linear::argmax(summed(rows));
  }
  return out;
}

std::vector<LabelSet> CnnEnsemble::predict_multilabel(std::span<const features::TokenSequence> inputs) const {
  const auto acts = member_activations(inputs);
  const std::size_t classes = members_.front().config().n_classes;
  std::vector<LabelSet> out(inputs.size());
  std::vector<std::vector<double>> rows(members_.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t m = 0; m < members_.size(); ++m) {
      rows[m].assign(acts[m].values.begin() + static_cast<std::ptrdiff_t>(i * classes),
                     acts[m].values.begin() + static_cast<std::ptrdiff_t>((i + 1) * classes));
    }
    if (scheme_ == Scheme::kSumActivation) {
      out[i] = sum_activation_decode(rows);
    } else {
      // Per-label vote over member decodes; strict majority keeps a label.
      std::vector<std::size_t> count(classes, 0);
      for (const auto& r : rows) {
        for (auto c : linear::decode_multilabel(r)) ++count[c];
      }
      LabelSet labels;
      for (std::size_t c = 0; c < classes; ++c) {
        if (2 * count[c] > members_.size()) labels.push_back(static_cast<ClassId>(c));
      }
      if (labels.empty()) labels.push_back(static_cast<ClassId>(std::max_element(count.begin(), count.end()) - count.begin()));
      out[i] = std::move(labels);
    }
  }
  return out;
}

}  // namespace algotag::ensemble
