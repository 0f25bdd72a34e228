#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "algotag/datasets.hpp"
#include "algotag/neural.hpp"

namespace algotag::ensemble {

using ClassId = std::uint32_t;
using datasets::LabelSet;

enum class Scheme { kMajorityVote, kSumActivation };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);

// Modal class; ties go to the lowest class index.
ClassId majority_vote(std::span<const ClassId> member_predictions);

// Labels whose summed activation is positive; the argmax label when none is.
LabelSet sum_activation_decode(std::span<const std::vector<double>> member_activations);
// Same decision made by thresholding sigmoid(sum) at 0.5. The sigmoid excess
// over one half, (1 - e^-x) / (2 (1 + e^-x)), is compared through its
// numerator so rounding cannot push a tiny positive sum onto the threshold.
LabelSet sum_activation_decode_sigmoid(std::span<const std::vector<double>> member_activations);

struct EnsembleOptions {
  std::size_t members = 5;
  Scheme scheme = Scheme::kMajorityVote;
  std::uint64_t base_seed = 0;
};

// Member i is created and trained with seed base_seed + i.
class CnnEnsemble {
 public:
  CnnEnsemble() = default;
  CnnEnsemble(Scheme scheme, std::vector<nn::CnnModel> members);

  static CnnEnsemble train(const nn::CnnConfig& config, std::span<const features::TokenSequence> inputs,
                           const nn::Tensor& targets, const nn::TrainOptions& train_options,
                           const EnsembleOptions& options,
                           const features::EmbeddingMatrix* pretrained = nullptr);

  Scheme scheme() const noexcept { return scheme_; }
  const std::vector<nn::CnnModel>& members() const noexcept { return members_; }

  // Per-member eval activations, member x (items x classes).
  std::vector<nn::Tensor> member_activations(std::span<const features::TokenSequence> inputs) const;
  std::vector<ClassId> predict_multiclass(std::span<const features::TokenSequence> inputs) const;
  std::vector<LabelSet> predict_multilabel(std::span<const features::TokenSequence> inputs) const;

 private:
  Scheme scheme_ = Scheme::kMajorityVote;
  std::vector<nn::CnnModel> members_;
};

}  // namespace algotag::ensemble
