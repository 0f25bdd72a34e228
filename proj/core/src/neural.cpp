#include "algotag/neural.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "algotag/error.hpp"

namespace algotag::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::VectorXd;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;
using ConstStridedRowMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

Json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape}, {"values", encode_doubles(t.values)}};
}

Tensor tensor_from_json(const Json& json) {
  Tensor t;
  t.shape = json.at("shape").get<std::vector<std::size_t>>();
  t.values = decode_doubles(json.at("values").get<std::string>());
  if (t.values.size() != product(t.shape)) throw InputFormatError("tensor payload does not match its shape");
  return t;
}

void check_targets(const Tensor& activations, const Tensor& targets) {
  if (activations.shape.size() != 2 || activations.shape != targets.shape) {
    throw ParameterError("activation and target shapes differ");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor and elementwise functions

Tensor::Tensor(std::vector<std::size_t> dims) : shape(std::move(dims)), values(product(shape), 0.0) {}

bool Tensor::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

double relu_grad(double x) { return x > 0.0 ? 1.0 : 0.0; }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double peak = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (auto& v : out) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (auto& v : out) v /= sum;
  return out;
}

void xavier_fill(Tensor& tensor, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) throw ParameterError("xavier initialization needs non-zero fans");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : tensor.values) v = rng.uniform(-bound, bound);
}

Tensor xavier_init(const std::vector<std::size_t>& shape, std::uint64_t seed) {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  if (shape.size() == 2) {
    fan_out = shape[0];
    fan_in = shape[1];
  } else if (shape.size() == 3) {
    fan_out = shape[0] * shape[1];
    fan_in = shape[1] * shape[2];
  } else {
    throw ParameterError("xavier initialization needs a 2-D or 3-D shape");
  }
  Tensor t(shape);
  Rng rng(seed);
  xavier_fill(t, fan_in, fan_out, rng);
  return t;
}

// ---------------------------------------------------------------------------
// Losses

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCrossEntropySoftmax: return "cross_entropy_softmax";
    case LossKind::kBceSigmoid: return "bce_sigmoid";
    case LossKind::kMseSigmoid: return "mse_sigmoid";
  }
  return "cross_entropy_softmax";
}

LossKind parse_loss(std::string_view name) {
  if (name == "cross_entropy_softmax") return LossKind::kCrossEntropySoftmax;
  if (name == "bce_sigmoid") return LossKind::kBceSigmoid;
  if (name == "mse_sigmoid") return LossKind::kMseSigmoid;
  throw ParameterError("unknown loss '" + std::string(name) + "'");
}

LossResult compute_loss(LossKind kind, const Tensor& activations, const Tensor& targets) {
  check_targets(activations, targets);
  const std::size_t batch = activations.shape[0];
  const std::size_t classes = activations.shape[1];
  if (batch == 0) throw ParameterError("loss of an empty batch");
  LossResult result;
  result.grad = Tensor(activations.shape);
  const double scale = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const std::span<const double> a(activations.values.data() + i * classes, classes);
    const std::span<const double> y(targets.values.data() + i * classes, classes);
    double* g = result.grad.values.data() + i * classes;
    switch (kind) {
      case LossKind::kCrossEntropySoftmax: {
        const double peak = *std::max_element(a.begin(), a.end());
        double sum = 0.0;
        for (double v : a) sum += std::exp(v - peak);
        const double log_z = peak + std::log(sum);
        for (std::size_t c = 0; c < classes; ++c) {
          total -= y[c] * (a[c] - log_z);
          g[c] = (std::exp(a[c] - log_z) - y[c]) * scale;
        }
        break;
      }
      case LossKind::kBceSigmoid:
        for (std::size_t c = 0; c < classes; ++c) {
          const double x = a[c];
          total += std::max(x, 0.0) - x * y[c] + std::log1p(std::exp(-std::abs(x)));
          g[c] = (sigmoid(x) - y[c]) * scale;
        }
        break;
      case LossKind::kMseSigmoid:
        for (std::size_t c = 0; c < classes; ++c) {
          const double s = sigmoid(a[c]);
          const double diff = s - y[c];
          total += diff * diff;
          g[c] = 2.0 * diff * s * (1.0 - s) * scale;
        }
        break;
    }
  }
  result.value = total * scale;
  return result;
}

// ---------------------------------------------------------------------------
// Adam

AdamState::AdamState(AdamOptions opts, std::span<const Tensor* const> params) : options(opts) {
  for (const Tensor* p : params) {
    first_moment.emplace_back(p->shape);
    second_moment.emplace_back(p->shape);
  }
}

void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ParameterError("adam step: parameter, gradient and state counts differ");
  }
  const auto& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    if (p.size() != g.size() || p.size() != m.size()) throw ParameterError("adam step: shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// CNN

std::size_t CnnConfig::max_width() const {
  if (widths.empty()) throw ParameterError("CNN needs at least one filter width");
  return *std::max_element(widths.begin(), widths.end());
}

Json CnnConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"embedding_dim", embedding_dim},
          {"filters_per_width", filters_per_width},
          {"widths", widths},
          {"n_classes", n_classes},
          {"dropout", dropout},
          {"trainable_embeddings", trainable_embeddings}};
}

CnnConfig CnnConfig::from_json(const Json& json) {
  CnnConfig c;
  c.vocab_size = json.at("vocab_size").get<std::size_t>();
  c.embedding_dim = json.at("embedding_dim").get<std::size_t>();
  c.filters_per_width = json.at("filters_per_width").get<std::size_t>();
  c.widths = json.at("widths").get<std::vector<std::size_t>>();
  c.n_classes = json.at("n_classes").get<std::size_t>();
  c.dropout = json.at("dropout").get<double>();
  c.trainable_embeddings = json.at("trainable_embeddings").get<bool>();
  return c;
}

std::vector<Tensor*> CnnParams::all() {
  std::vector<Tensor*> out{&embedding};
  for (auto& t : conv_weight) out.push_back(&t);
  for (auto& t : conv_bias) out.push_back(&t);
  out.push_back(&fc_weight);
  out.push_back(&fc_bias);
  return out;
}

std::vector<const Tensor*> CnnParams::all() const {
  std::vector<const Tensor*> out{&embedding};
  for (const auto& t : conv_weight) out.push_back(&t);
  for (const auto& t : conv_bias) out.push_back(&t);
  out.push_back(&fc_weight);
  out.push_back(&fc_bias);
  return out;
}

CnnParams CnnParams::zeros_like() const {
  CnnParams z;
  z.embedding = Tensor(embedding.shape);
  for (const auto& t : conv_weight) z.conv_weight.emplace_back(t.shape);
  for (const auto& t : conv_bias) z.conv_bias.emplace_back(t.shape);
  z.fc_weight = Tensor(fc_weight.shape);
  z.fc_bias = Tensor(fc_bias.shape);
  return z;
}

CnnModel CnnModel::create(const CnnConfig& config, std::uint64_t seed,
                          const features::EmbeddingMatrix* pretrained) {
  if (config.vocab_size <= static_cast<std::size_t>(features::Vocabulary::kPadId)) {
    throw ParameterError("CNN vocabulary must include the reserved ids");
  }
  if (config.n_classes == 0 || config.filters_per_width == 0 || config.embedding_dim == 0) {
    throw ParameterError("CNN dimensions must be positive");
  }
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
  config.max_width();

  CnnModel model;
  model.config_ = config;
  CnnParams& p = model.params_;
  const std::size_t d = config.embedding_dim;
  const std::size_t f = config.filters_per_width;
  Rng rng(seed);

  p.embedding = Tensor({config.vocab_size, d});
  if (pretrained) {
    if (pretrained->rows != config.vocab_size || pretrained->dim != d) {
      throw ParameterError("pretrained embeddings are " + std::to_string(pretrained->rows) + "x" +
                           std::to_string(pretrained->dim) + ", model expects " +
                           std::to_string(config.vocab_size) + "x" + std::to_string(d));
    }
    p.embedding.values = pretrained->values;
  } else {
    for (auto& v : p.embedding.values) v = rng.normal();
  }
  std::fill_n(p.embedding.values.begin() + static_cast<std::ptrdiff_t>(features::Vocabulary::kPadId * d), d, 0.0);

  for (auto w : config.widths) {
    Tensor weight({f, w * d});
    xavier_fill(weight, w * d, w * f, rng);
    p.conv_weight.push_back(std::move(weight));
    p.conv_bias.emplace_back(std::vector<std::size_t>{f});
  }
  p.fc_weight = Tensor({config.n_classes, config.pooled_dim()});
  xavier_fill(p.fc_weight, config.pooled_dim(), config.n_classes, rng);
  p.fc_bias = Tensor({config.n_classes});
  return model;
}

Tensor CnnModel::forward(std::span<const features::TokenSequence> batch, bool training,
                         Rng* dropout_rng, CnnTape* tape) const {
  if (training && config_.dropout > 0.0 && !dropout_rng) {
    throw ParameterError("training-mode forward pass needs a dropout generator");
  }
  const std::size_t d = config_.embedding_dim;
  const std::size_t f = config_.filters_per_width;
  const std::size_t pooled_dim = config_.pooled_dim();
  const std::size_t widest = config_.max_width();
  const std::size_t n_classes = config_.n_classes;

  Tensor out({batch.size(), n_classes});
  if (tape) tape->items.assign(batch.size(), {});
  std::vector<double> x;
  std::vector<double> pooled(pooled_dim);
  std::vector<double> hidden(pooled_dim);
  const ConstRowMap fc(params_.fc_weight.values.data(), static_cast<Eigen::Index>(n_classes),
                       static_cast<Eigen::Index>(pooled_dim));

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& seq = batch[b];
    const std::size_t length = std::max(seq.length, widest);
    if (seq.ids.size() < length) {
      throw ParameterError("sequence of " + std::to_string(seq.ids.size()) +
                           " ids is shorter than the widest filter (" + std::to_string(widest) + ")");
    }
    x.resize(length * d);
    for (std::size_t t = 0; t < length; ++t) {
      const auto id = static_cast<std::size_t>(seq.ids[t]);
      if (id >= config_.vocab_size) throw ParameterError("token id outside the CNN vocabulary");
      std::copy_n(params_.embedding.values.data() + id * d, d, x.data() + t * d);
    }
    CnnTrace* trace = tape ? &tape->items[b] : nullptr;
    if (trace) {
      trace->length = length;
      trace->ids.assign(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(length));
      trace->argmax.assign(config_.widths.size(), std::vector<std::size_t>(f));
      trace->peak.assign(config_.widths.size(), std::vector<double>(f));
    }
    for (std::size_t wi = 0; wi < config_.widths.size(); ++wi) {
      const std::size_t w = config_.widths[wi];
      const auto positions = static_cast<Eigen::Index>(length - w + 1);
      const ConstStridedRowMap windows(x.data(), positions, static_cast<Eigen::Index>(w * d),
                                       Eigen::OuterStride<>(static_cast<Eigen::Index>(d)));
      const ConstRowMap weight(params_.conv_weight[wi].values.data(), static_cast<Eigen::Index>(f),
                               static_cast<Eigen::Index>(w * d));
      const ColMat responses = windows * weight.transpose();
      const double* bias = params_.conv_bias[wi].values.data();
      for (std::size_t k = 0; k < f; ++k) {
        const double* column = responses.data() + k * static_cast<std::size_t>(positions);
        std::size_t best = 0;
        for (std::size_t pos = 1; pos < static_cast<std::size_t>(positions); ++pos) {
          if (column[pos] > column[best]) best = pos;
        }
        const double peak = column[best] + bias[k];
        pooled[wi * f + k] = relu(peak);
        if (trace) {
          trace->argmax[wi][k] = best;
          trace->peak[wi][k] = peak;
        }
      }
    }
    hidden = pooled;
    if (training && config_.dropout > 0.0) {
      std::vector<double> mask(pooled_dim);
      const double keep = 1.0 - config_.dropout;
      for (std::size_t j = 0; j < pooled_dim; ++j) {
        mask[j] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
        hidden[j] *= mask[j];
      }
      if (trace) trace->mask = std::move(mask);
    }
    if (trace) trace->pooled = pooled;
    const Eigen::Map<const Vec> h(hidden.data(), static_cast<Eigen::Index>(pooled_dim));
    Eigen::Map<Vec> logits(out.values.data() + b * n_classes, static_cast<Eigen::Index>(n_classes));
    logits = fc * h;
    for (std::size_t c = 0; c < n_classes; ++c) logits[static_cast<Eigen::Index>(c)] += params_.fc_bias[c];
  }
  return out;
}

void CnnModel::backward(const CnnTape& tape, const Tensor& grad_activations, CnnParams& grads) const {
  const std::size_t d = config_.embedding_dim;
  const std::size_t f = config_.filters_per_width;
  const std::size_t pooled_dim = config_.pooled_dim();
  const std::size_t n_classes = config_.n_classes;
  if (grad_activations.shape.size() != 2 || grad_activations.shape[0] != tape.items.size() ||
      grad_activations.shape[1] != n_classes) {
    throw ParameterError("CNN backward: gradient shape does not match the tape");
  }
  const ConstRowMap fc(params_.fc_weight.values.data(), static_cast<Eigen::Index>(n_classes),
                       static_cast<Eigen::Index>(pooled_dim));
  RowMap fc_grad(grads.fc_weight.values.data(), static_cast<Eigen::Index>(n_classes),
                 static_cast<Eigen::Index>(pooled_dim));
  std::vector<double> x;
  std::vector<double> dx;
  std::vector<double> hidden(pooled_dim);
  Vec d_hidden;

  for (std::size_t b = 0; b < tape.items.size(); ++b) {
    const CnnTrace& trace = tape.items[b];
    const Eigen::Map<const Vec> d_logits(grad_activations.values.data() + b * n_classes,
                                         static_cast<Eigen::Index>(n_classes));
    for (std::size_t j = 0; j < pooled_dim; ++j) {
      hidden[j] = trace.mask.empty() ? trace.pooled[j] : trace.pooled[j] * trace.mask[j];
    }
    const Eigen::Map<const Vec> h(hidden.data(), static_cast<Eigen::Index>(pooled_dim));
    fc_grad.noalias() += d_logits * h.transpose();
    for (std::size_t c = 0; c < n_classes; ++c) grads.fc_bias[c] += d_logits[static_cast<Eigen::Index>(c)];
    d_hidden.noalias() = fc.transpose() * d_logits;

    const std::size_t length = trace.length;
    x.resize(length * d);
    for (std::size_t t = 0; t < length; ++t) {
      std::copy_n(params_.embedding.values.data() + static_cast<std::size_t>(trace.ids[t]) * d, d,
                  x.data() + t * d);
    }
    const bool embed_grad = config_.trainable_embeddings;
    if (embed_grad) dx.assign(length * d, 0.0);

    for (std::size_t wi = 0; wi < config_.widths.size(); ++wi) {
      const std::size_t w = config_.widths[wi];
      const std::size_t span = w * d;
      const double* weight = params_.conv_weight[wi].values.data();
      double* weight_grad = grads.conv_weight[wi].values.data();
      double* bias_grad = grads.conv_bias[wi].values.data();
      for (std::size_t k = 0; k < f; ++k) {
        const std::size_t j = wi * f + k;
        double g = d_hidden[static_cast<Eigen::Index>(j)];
        if (!trace.mask.empty()) g *= trace.mask[j];
        g *= relu_grad(trace.peak[wi][k]);
        if (g == 0.0) continue;
        const std::size_t pos = trace.argmax[wi][k];
        const double* window = x.data() + pos * d;
        double* row_grad = weight_grad + k * span;
        for (std::size_t e = 0; e < span; ++e) row_grad[e] += g * window[e];
        bias_grad[k] += g;
        if (embed_grad) {
          const double* row = weight + k * span;
          double* dwin = dx.data() + pos * d;
          for (std::size_t e = 0; e < span; ++e) dwin[e] += g * row[e];
        }
      }
    }
    if (embed_grad) {
      for (std::size_t t = 0; t < length; ++t) {
        const auto id = static_cast<std::size_t>(trace.ids[t]);
        if (id == static_cast<std::size_t>(features::Vocabulary::kPadId)) continue;
        double* row = grads.embedding.values.data() + id * d;
        const double* src = dx.data() + t * d;
        for (std::size_t e = 0; e < d; ++e) row[e] += src[e];
      }
    }
  }
}

Json CnnModel::to_json() const {
  Json conv_w = Json::array();
  Json conv_b = Json::array();
  for (const auto& t : params_.conv_weight) conv_w.push_back(tensor_to_json(t));
  for (const auto& t : params_.conv_bias) conv_b.push_back(tensor_to_json(t));
  return {{"config", config_.to_json()},
          {"embedding", tensor_to_json(params_.embedding)},
          {"conv_weight", conv_w},
          {"conv_bias", conv_b},
          {"fc_weight", tensor_to_json(params_.fc_weight)},
          {"fc_bias", tensor_to_json(params_.fc_bias)}};
}

CnnModel CnnModel::from_json(const Json& json) {
  CnnModel model;
  model.config_ = CnnConfig::from_json(json.at("config"));
  model.params_.embedding = tensor_from_json(json.at("embedding"));
  for (const auto& t : json.at("conv_weight")) model.params_.conv_weight.push_back(tensor_from_json(t));
  for (const auto& t : json.at("conv_bias")) model.params_.conv_bias.push_back(tensor_from_json(t));
  model.params_.fc_weight = tensor_from_json(json.at("fc_weight"));
  model.params_.fc_bias = tensor_from_json(json.at("fc_bias"));
  const auto& c = model.config_;
  const auto& p = model.params_;
  bool ok = p.embedding.shape == std::vector<std::size_t>{c.vocab_size, c.embedding_dim} &&
            p.conv_weight.size() == c.widths.size() && p.conv_bias.size() == c.widths.size() &&
            p.fc_weight.shape == std::vector<std::size_t>{c.n_classes, c.pooled_dim()} &&
            p.fc_bias.shape == std::vector<std::size_t>{c.n_classes};
  for (std::size_t i = 0; ok && i < c.widths.size(); ++i) {
    ok = p.conv_weight[i].shape == std::vector<std::size_t>{c.filters_per_width, c.widths[i] * c.embedding_dim} &&
         p.conv_bias[i].shape == std::vector<std::size_t>{c.filters_per_width};
  }
  if (!ok) throw InputFormatError("CNN parameters do not match the stored configuration");
  return model;
}

// ---------------------------------------------------------------------------
// MLP

Json MlpConfig::to_json() const {
  return {{"input_dim", input_dim}, {"hidden", hidden}, {"n_classes", n_classes}};
}

MlpConfig MlpConfig::from_json(const Json& json) {
  MlpConfig c;
  c.input_dim = json.at("input_dim").get<std::size_t>();
  c.hidden = json.at("hidden").get<std::vector<std::size_t>>();
  c.n_classes = json.at("n_classes").get<std::size_t>();
  return c;
}

std::vector<Tensor*> MlpParams::all() {
  std::vector<Tensor*> out;
  for (auto& t : weights) out.push_back(&t);
  for (auto& t : biases) out.push_back(&t);
  return out;
}

std::vector<const Tensor*> MlpParams::all() const {
  std::vector<const Tensor*> out;
  for (const auto& t : weights) out.push_back(&t);
  for (const auto& t : biases) out.push_back(&t);
  return out;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  for (const auto& t : weights) z.weights.emplace_back(t.shape);
  for (const auto& t : biases) z.biases.emplace_back(t.shape);
  return z;
}

MlpModel MlpModel::create(const MlpConfig& config, std::uint64_t seed) {
  if (config.hidden.empty()) throw ParameterError("MLP needs at least one hidden layer");
  if (config.input_dim == 0 || config.n_classes == 0) throw ParameterError("MLP dimensions must be positive");
  MlpModel model;
  model.config_ = config;
  Rng rng(seed);
  std::size_t in = config.input_dim;
  for (std::size_t l = 0; l <= config.hidden.size(); ++l) {
    const std::size_t out = l < config.hidden.size() ? config.hidden[l] : config.n_classes;
    if (out == 0) throw ParameterError("MLP layer widths must be positive");
    Tensor weight = l == 0 ? Tensor({in, out}) : Tensor({out, in});
    xavier_fill(weight, in, out, rng);
    model.params_.weights.push_back(std::move(weight));
    model.params_.biases.emplace_back(std::vector<std::size_t>{out});
    in = out;
  }
  return model;
}

Tensor MlpModel::forward(std::span<const features::SparseVector> batch, MlpTape* tape) const {
  const std::size_t n = batch.size();
  const auto& p = params_;
  const std::size_t h0 = config_.hidden.front();
  Tensor current({n, h0});
  for (std::size_t b = 0; b < n; ++b) {
    double* row = current.values.data() + b * h0;
    std::copy_n(p.biases[0].values.data(), h0, row);
    for (const auto& e : batch[b].entries) {
      if (e.id >= config_.input_dim) throw ParameterError("feature id outside the MLP input");
      const double* w = p.weights[0].values.data() + static_cast<std::size_t>(e.id) * h0;
      for (std::size_t j = 0; j < h0; ++j) row[j] += e.value * w[j];
    }
    for (std::size_t j = 0; j < h0; ++j) row[j] = relu(row[j]);
  }
  if (tape) {
    tape->inputs.assign(batch.begin(), batch.end());
    tape->hidden.clear();
    tape->hidden.push_back(current);
  }
  for (std::size_t l = 1; l < p.weights.size(); ++l) {
    const std::size_t in = p.weights[l].shape[1];
    const std::size_t out = p.weights[l].shape[0];
    Tensor next({n, out});
    const ConstRowMap w(p.weights[l].values.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    const ConstRowMap h(current.values.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
    RowMap z(next.values.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
    const Eigen::Map<const Eigen::VectorXd> bias(p.biases[l].values.data(), static_cast<Eigen::Index>(out));
    // Row by row, so an item's activations do not depend on the batch it is in.
    for (Eigen::Index b = 0; b < z.rows(); ++b) z.row(b) = (w * h.row(b).transpose() + bias).transpose();
    const bool last = l + 1 == p.weights.size();
    if (!last) {
      for (auto& v : next.values) v = relu(v);
      if (tape) tape->hidden.push_back(next);
    }
    current = std::move(next);
  }
  return current;
}

void MlpModel::backward(const MlpTape& tape, const Tensor& grad_activations, MlpParams& grads) const {
  const auto& p = params_;
  const std::size_t n = tape.inputs.size();
  if (grad_activations.shape != std::vector<std::size_t>{n, config_.n_classes}) {
    throw ParameterError("MLP backward: gradient shape does not match the tape");
  }
  Tensor g = grad_activations;
  for (std::size_t l = p.weights.size() - 1; l >= 1; --l) {
    const std::size_t in = p.weights[l].shape[1];
    const std::size_t out = p.weights[l].shape[0];
    const Tensor& h = tape.hidden[l - 1];
    const ConstRowMap gm(g.values.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
    const ConstRowMap hm(h.values.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
    RowMap wg(grads.weights[l].values.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    wg.noalias() += gm.transpose() * hm;
    Eigen::Map<Eigen::RowVectorXd> bg(grads.biases[l].values.data(), static_cast<Eigen::Index>(out));
    bg += gm.colwise().sum();
    const ConstRowMap w(p.weights[l].values.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    Tensor prev({n, in});
    RowMap pm(prev.values.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
    pm.noalias() = gm * w;
    for (std::size_t i = 0; i < prev.size(); ++i) prev[i] *= relu_grad(h[i]);
    g = std::move(prev);
  }
  const std::size_t h0 = config_.hidden.front();
  for (std::size_t b = 0; b < n; ++b) {
    const double* gb = g.values.data() + b * h0;
    for (std::size_t j = 0; j < h0; ++j) grads.biases[0][j] += gb[j];
    for (const auto& e : tape.inputs[b].entries) {
      double* wg = grads.weights[0].values.data() + static_cast<std::size_t>(e.id) * h0;
      for (std::size_t j = 0; j < h0; ++j) wg[j] += e.value * gb[j];
    }
  }
}

Json MlpModel::to_json() const {
  Json w = Json::array();
  Json b = Json::array();
  for (const auto& t : params_.weights) w.push_back(tensor_to_json(t));
  for (const auto& t : params_.biases) b.push_back(tensor_to_json(t));
  return {{"config", config_.to_json()}, {"weights", w}, {"biases", b}};
}

MlpModel MlpModel::from_json(const Json& json) {
  MlpModel model;
  model.config_ = MlpConfig::from_json(json.at("config"));
  for (const auto& t : json.at("weights")) model.params_.weights.push_back(tensor_from_json(t));
  for (const auto& t : json.at("biases")) model.params_.biases.push_back(tensor_from_json(t));
  if (model.params_.weights.size() != model.config_.hidden.size() + 1 ||
      model.params_.biases.size() != model.params_.weights.size()) {
    throw InputFormatError("MLP layer count does not match the stored configuration");
  }
  return model;
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

template <typename Input, typename ForwardBackward>
TrainTrace run_epochs(std::span<const Input> inputs, const Tensor& targets, const TrainOptions& options,
                      ForwardBackward&& step) {
  if (inputs.empty()) throw ParameterError("cannot train on an empty set");
  if (targets.shape.size() != 2 || targets.shape[0] != inputs.size()) {
    throw ParameterError("targets must have one row per training input");
  }
  if (options.batch_size == 0 || options.epochs == 0) throw ParameterError("batch size and epochs must be positive");
  const std::size_t classes = targets.shape[1];
  Rng order_rng(derive_seed(options.seed, 0));
  Rng dropout_rng(derive_seed(options.seed, 1));
  TrainTrace trace;
  std::vector<Input> batch;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto order = order_rng.permutation(inputs.size());
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      batch.clear();
      Tensor batch_targets({stop - start, classes});
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(inputs[order[i]]);
        std::copy_n(targets.values.data() + order[i] * classes, classes,
                    batch_targets.values.data() + (i - start) * classes);
      }
      const double loss = step(std::span<const Input>(batch), batch_targets, dropout_rng);
      if (!std::isfinite(loss)) {
        throw DivergenceError(epoch, "training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }
      total += loss * static_cast<double>(stop - start);
    }
    trace.epoch_loss.push_back(total / static_cast<double>(inputs.size()));
  }
  return trace;
}

}  // namespace

TrainTrace train_cnn(CnnModel& model, std::span<const features::TokenSequence> inputs,
                     const Tensor& targets, const TrainOptions& options) {
  if (targets.shape.size() == 2 && targets.shape[1] != model.config().n_classes) {
    throw ParameterError("target width differs from the CNN class count");
  }
  CnnParams& params = model.params();
  CnnParams grads = params.zeros_like();
  std::vector<Tensor*> trainable;
  std::vector<const Tensor*> trainable_grads;
  {
    auto p = params.all();
    auto g = grads.all();
    for (std::size_t i = model.config().trainable_embeddings ? 0 : 1; i < p.size(); ++i) {
      trainable.push_back(p[i]);
      trainable_grads.push_back(g[i]);
    }
  }
  AdamState adam(options.adam, std::vector<const Tensor*>(trainable.begin(), trainable.end()));
  CnnTape tape;
  return run_epochs<features::TokenSequence>(
      inputs, targets, options,
      [&](std::span<const features::TokenSequence> batch, const Tensor& batch_targets, Rng& rng) {
        for (Tensor* g : grads.all()) g->fill(0.0);
        const Tensor activations = model.forward(batch, true, &rng, &tape);
        LossResult loss = compute_loss(options.loss, activations, batch_targets);
        if (!std::isfinite(loss.value)) return loss.value;
        model.backward(tape, loss.grad, grads);
        adam_step(adam, trainable, trainable_grads);
        return loss.value;
      });
}

TrainTrace train_mlp(MlpModel& model, std::span<const features::SparseVector> inputs,
                     const Tensor& targets, const TrainOptions& options) {
  if (targets.shape.size() == 2 && targets.shape[1] != model.config().n_classes) {
    throw ParameterError("target width differs from the MLP class count");
  }
  MlpParams& params = model.params();
  MlpParams grads = params.zeros_like();
  const auto trainable = params.all();
  const auto trainable_grads = std::as_const(grads).all();
  AdamState adam(options.adam, std::as_const(params).all());
  MlpTape tape;
  return run_epochs<features::SparseVector>(
      inputs, targets, options,
      [&](std::span<const features::SparseVector> batch, const Tensor& batch_targets, Rng&) {
        for (Tensor* g : grads.all()) g->fill(0.0);
        const Tensor activations = model.forward(batch, &tape);
        LossResult loss = compute_loss(options.loss, activations, batch_targets);
        if (!std::isfinite(loss.value)) return loss.value;
        model.backward(tape, loss.grad, grads);
        adam_step(adam, trainable, trainable_grads);
        return loss.value;
      });
}

Tensor predict_cnn(const CnnModel& model, std::span<const features::TokenSequence> inputs,
                   std::size_t batch_size) {
  const std::size_t classes = model.config().n_classes;
  Tensor out({inputs.size(), classes});
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    const std::size_t stop = std::min(inputs.size(), start + batch_size);
    const Tensor part = model.forward(inputs.subspan(start, stop - start), false, nullptr, nullptr);
    std::copy(part.values.begin(), part.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(start * classes));
  }
  return out;
}

Tensor predict_mlp(const MlpModel& model, std::span<const features::SparseVector> inputs,
                   std::size_t batch_size) {
  const std::size_t classes = model.config().n_classes;
  Tensor out({inputs.size(), classes});
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    const std::size_t stop = std::min(inputs.size(), start + batch_size);
    const Tensor part = model.forward(inputs.subspan(start, stop - start), nullptr);
    std::copy(part.values.begin(), part.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(start * classes));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

Tensor random_targets(LossKind loss, std::size_t batch, std::size_t classes, Rng& rng) {
  Tensor targets({batch, classes});
  for (std::size_t i = 0; i < batch; ++i) {
    if (loss == LossKind::kCrossEntropySoftmax) {
      targets.at(i, rng.below(classes)) = 1.0;
    } else {
      for (std::size_t c = 0; c < classes; ++c) targets.at(i, c) = rng.below(2) ? 1.0 : 0.0;
    }
  }
  return targets;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
}

// Compares grads[i] against central differences of `loss_fn` for every element
// of params[i] not excluded by `skip`.
template <typename LossFn, typename Skip>
void compare(std::vector<Tensor*> params, std::vector<const Tensor*> grads, LossFn&& loss_fn, Skip&& skip,
             double h, GradCheckResult& result) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (skip(k, i)) continue;
      const double saved = p[i];
      p[i] = saved + h;
      const double plus = loss_fn();
      p[i] = saved - h;
      const double minus = loss_fn();
      p[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      result.max_relative_error = std::max(result.max_relative_error, relative_error((*grads[k])[i], numeric));
      ++result.parameters_checked;
    }
  }
}

GradCheckResult check_cnn(const GradCheckOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  CnnConfig config;
  config.vocab_size = 8 + rng.below(23);
  config.embedding_dim = 2 + rng.below(7);
  config.filters_per_width = 1 + rng.below(4);
  config.widths = {3, 4, 5};
  config.n_classes = 2 + rng.below(4);
  config.dropout = 0.5;
  config.trainable_embeddings = options.trainable_embeddings;
  CnnModel model = CnnModel::create(config, derive_seed(seed, 1));
  // Non-zero biases exercise the bias paths.
  for (auto& bias : model.params().conv_bias) {
    for (auto& v : bias.values) v = rng.uniform(-0.1, 0.1);
  }

  const std::size_t batch = 3;
  std::vector<features::TokenSequence> sequences(batch);
  for (auto& seq : sequences) {
    seq.length = 3 + rng.below(10);
    for (std::size_t t = 0; t < seq.length; ++t) {
      const std::uint64_t id = rng.below(8) == 0 ? features::Vocabulary::kUnkId : 2 + rng.below(config.vocab_size - 2);
      seq.ids.push_back(static_cast<std::int32_t>(id));
    }
    while (seq.ids.size() < config.max_width()) seq.ids.push_back(features::Vocabulary::kPadId);
  }
  const Tensor targets = random_targets(options.loss, batch, config.n_classes, rng);
  const std::uint64_t mask_seed = derive_seed(seed, 2);

  auto loss_fn = [&] {
    Rng mask_rng(mask_seed);
    return compute_loss(options.loss, model.forward(sequences, true, &mask_rng, nullptr), targets).value;
  };
  CnnParams grads = model.params().zeros_like();
  {
    Rng mask_rng(mask_seed);
    CnnTape tape;
    const Tensor activations = model.forward(sequences, true, &mask_rng, &tape);
    model.backward(tape, compute_loss(options.loss, activations, targets).grad, grads);
  }

  GradCheckResult result;
  const std::size_t d = config.embedding_dim;
  const auto pad = static_cast<std::size_t>(features::Vocabulary::kPadId);
  if (!config.trainable_embeddings) {
    for (double v : grads.embedding.values) result.frozen_gradient_max = std::max(result.frozen_gradient_max, std::abs(v));
  }
  auto skip = [&](std::size_t tensor, std::size_t index) {
    if (tensor != 0) return false;
    // Embedding tensor: frozen entirely, or just the pinned padding row.
    return !config.trainable_embeddings || index / d == pad;
  };
  compare(model.params().all(), std::as_const(grads).all(), loss_fn, skip, options.step, result);
  return result;
}

GradCheckResult check_mlp(const GradCheckOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  MlpConfig config;
  config.input_dim = 10 + rng.below(21);
  config.hidden = {3 + rng.below(6)};
  if (rng.below(2)) config.hidden.push_back(3 + rng.below(6));
  config.n_classes = 2 + rng.below(4);
  MlpModel model = MlpModel::create(config, derive_seed(seed, 1));
  for (auto& bias : model.params().biases) {
    for (auto& v : bias.values) v = rng.uniform(-0.1, 0.1);
  }

  const std::size_t batch = 4;
  std::vector<features::SparseVector> inputs(batch);
  for (auto& x : inputs) {
    for (std::uint32_t j = 0; j < config.input_dim; ++j) {
      if (rng.below(3) == 0) x.entries.push_back({j, 1.0 + static_cast<double>(rng.below(3))});
    }
  }
  const Tensor targets = random_targets(options.loss, batch, config.n_classes, rng);
  auto loss_fn = [&] { return compute_loss(options.loss, model.forward(inputs, nullptr), targets).value; };
  MlpParams grads = model.params().zeros_like();
  {
    MlpTape tape;
    const Tensor activations = model.forward(inputs, &tape);
    model.backward(tape, compute_loss(options.loss, activations, targets).grad, grads);
  }
  GradCheckResult result;
  compare(model.params().all(), std::as_const(grads).all(), loss_fn,
          [](std::size_t, std::size_t) { return false; }, options.step, result);
  return result;
}

}  // namespace

GradCheckResult grad_check(const GradCheckOptions& options, std::uint64_t seed) {
  return options.kind == NetKind::kCnn ? check_cnn(options, seed) : check_mlp(options, seed);
}

}  // namespace algotag::nn
