#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "algotag/features.hpp"
#include "algotag/rng.hpp"
#include "algotag/serialization.hpp"

namespace algotag::nn {

// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);

  static Tensor zeros(std::vector<std::size_t> dims) { return Tensor(std::move(dims)); }

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  // Two-dimensional access.
  double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }

  void fill(double v) { std::fill(values.begin(), values.end(), v); }
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;
};

double relu(double x);
// Subgradient at 0 is 0.
double relu_grad(double x);
// Evaluated on the branch that cannot overflow.
double sigmoid(double x);
std::vector<double> softmax(std::span<const double> logits);

// Uniform on +-sqrt(6 / (fan_in + fan_out)). A 2-D shape is {fan_out, fan_in}
// (the order does not affect the bound); a 3-D convolution shape
// {out_channels, width, in_channels} uses fan_in = width * in_channels and
// fan_out = width * out_channels.
Tensor xavier_init(const std::vector<std::size_t>& shape, std::uint64_t seed);
void xavier_fill(Tensor& tensor, std::size_t fan_in, std::size_t fan_out, Rng& rng);

enum class LossKind { kCrossEntropySoftmax, kBceSigmoid, kMseSigmoid };

std::string_view to_string(LossKind kind);
LossKind parse_loss(std::string_view name);

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d activations
};

// Activations and targets are batch x classes. The value is the per-item loss
// summed over classes and averaged over the batch.
LossResult compute_loss(LossKind kind, const Tensor& activations, const Tensor& targets);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(AdamOptions opts, std::span<const Tensor* const> params);
};

// One bias-corrected Adam update of every parameter in place.
void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor* const> grads);

// ---------------------------------------------------------------------------
// Convolutional sentence classifier

struct CnnConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 128;
  std::size_t filters_per_width = 512;
  std::vector<std::size_t> widths = {3, 4, 5};
  std::size_t n_classes = 0;
  double dropout = 0.5;
  bool trainable_embeddings = true;

  std::size_t pooled_dim() const noexcept { return filters_per_width * widths.size(); }
  std::size_t max_width() const;

  Json to_json() const;
  static CnnConfig from_json(const Json& json);
};

struct CnnParams {
  Tensor embedding;                // vocab x dim
  std::vector<Tensor> conv_weight; // per width: filters x (width * dim)
  std::vector<Tensor> conv_bias;   // per width: filters
  Tensor fc_weight;                // classes x pooled
  Tensor fc_bias;                  // classes

  std::vector<Tensor*> all();
  std::vector<const Tensor*> all() const;
  CnnParams zeros_like() const;
};

// Per-sequence intermediate values kept for the backward pass.
struct CnnTrace {
  std::size_t length = 0;                     // positions convolved over
  std::vector<std::int32_t> ids;              // first `length` ids
  std::vector<std::vector<std::size_t>> argmax;  // per width, per filter
  std::vector<std::vector<double>> peak;         // pre-activation max, per width, per filter
  std::vector<double> pooled;                 // after rectifier
  std::vector<double> mask;                   // dropout scaling, empty in eval mode
};

struct CnnTape {
  std::vector<CnnTrace> items;
};

class CnnModel {
 public:
  CnnModel() = default;

  // Xavier-initialized filters and classifier, zero biases. Embeddings come
  // from `pretrained` when given (its rows must match the vocabulary) and are
  // N(0, 1) otherwise. The padding row is zero either way.
  static CnnModel create(const CnnConfig& config, std::uint64_t seed,
                         const features::EmbeddingMatrix* pretrained = nullptr);

  // Embed, convolve each width over positions [0, max(length, widest) - w],
  // rectify, global max-pool, dropout (training only) and project.
  // `dropout_rng` is required when `training` is set. Returns batch x classes
  // linear activations.
  Tensor forward(std::span<const features::TokenSequence> batch, bool training, Rng* dropout_rng,
                 CnnTape* tape) const;

  // Accumulates parameter gradients into `grads`.
  void backward(const CnnTape& tape, const Tensor& grad_activations, CnnParams& grads) const;

  const CnnConfig& config() const noexcept { return config_; }
  CnnParams& params() noexcept { return params_; }
  const CnnParams& params() const noexcept { return params_; }

  Json to_json() const;
  static CnnModel from_json(const Json& json);

 private:
  CnnConfig config_;
  CnnParams params_;
};

// ---------------------------------------------------------------------------
// Multi-layer perceptron over sparse bag-of-n-gram inputs

struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden = {512};
  std::size_t n_classes = 0;

  Json to_json() const;
  static MlpConfig from_json(const Json& json);
};

struct MlpParams {
  // weights[0] is input x hidden[0] (input-major, for sparse inputs); later
  // layers are out x in.
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::vector<Tensor*> all();
  std::vector<const Tensor*> all() const;
  MlpParams zeros_like() const;
};

struct MlpTape {
  std::vector<features::SparseVector> inputs;
  // Post-rectifier activations of each hidden layer, batch x width.
  std::vector<Tensor> hidden;
};

class MlpModel {
 public:
  MlpModel() = default;

  static MlpModel create(const MlpConfig& config, std::uint64_t seed);

  Tensor forward(std::span<const features::SparseVector> batch, MlpTape* tape) const;
  void backward(const MlpTape& tape, const Tensor& grad_activations, MlpParams& grads) const;

  const MlpConfig& config() const noexcept { return config_; }
  MlpParams& params() noexcept { return params_; }
  const MlpParams& params() const noexcept { return params_; }

  Json to_json() const;
  static MlpModel from_json(const Json& json);

 private:
  MlpConfig config_;
  MlpParams params_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  AdamOptions adam;
  LossKind loss = LossKind::kCrossEntropySoftmax;
  std::uint64_t seed = 0;
};

struct TrainTrace {
  // Mean training loss of each epoch.
  std::vector<double> epoch_loss;
};

// Shuffled minibatches each epoch; throws DivergenceError when the loss stops
// being finite. `targets` is items x classes.
TrainTrace train_cnn(CnnModel& model, std::span<const features::TokenSequence> inputs,
                     const Tensor& targets, const TrainOptions& options);
TrainTrace train_mlp(MlpModel& model, std::span<const features::SparseVector> inputs,
                     const Tensor& targets, const TrainOptions& options);

// Eval-mode activations, processed in chunks of `batch_size`.
Tensor predict_cnn(const CnnModel& model, std::span<const features::TokenSequence> inputs,
                   std::size_t batch_size = 64);
Tensor predict_mlp(const MlpModel& model, std::span<const features::SparseVector> inputs,
                   std::size_t batch_size = 64);

// ---------------------------------------------------------------------------
// Gradient checking

enum class NetKind { kCnn, kMlp };

struct GradCheckOptions {
  NetKind kind = NetKind::kCnn;
  LossKind loss = LossKind::kCrossEntropySoftmax;
  bool trainable_embeddings = true;
  double step = 1e-5;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  // Largest absolute analytic gradient on frozen embeddings (0 when trainable).
  double frozen_gradient_max = 0.0;
};

// Builds a tiny random network (vocabulary <= 30, dimension <= 8, filters <= 4,
// sequence length <= 12) and compares the analytic gradient of every trainable
// parameter with central differences. Dropout uses one fixed mask.
// Relative error is |a - n| / max(|a| + |n|, 1e-6).
GradCheckResult grad_check(const GradCheckOptions& options, std::uint64_t seed);

}  // namespace algotag::nn
