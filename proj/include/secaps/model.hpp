#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "secaps/attention.hpp"
#include "secaps/capsule.hpp"
#include "secaps/errors.hpp"
#include "secaps/lstm.hpp"
#include "secaps/tensor.hpp"

namespace secaps {

// What the output layer concatenates next to the flattened capsules:
// the attention context, the plain sum of the primary capsules, or nothing.
enum class ResidualMode { attention, sum, none };

inline std::string to_string(ResidualMode mode) {
  switch (mode) {
    case ResidualMode::attention: return "attention";
    case ResidualMode::sum: return "sum";
    case ResidualMode::none: return "none";
  }
  return "attention";
}

inline ResidualMode residual_mode_from_string(const std::string& s) {
  if (s == "attention") return ResidualMode::attention;
  if (s == "sum") return ResidualMode::sum;
  if (s == "none") return ResidualMode::none;
  throw ContractError("unknown residual mode '" + s +
                      "' (expected attention, sum, or none)");
}

struct SeqCapsLayerConfig {
  std::size_t caps_num = 0;
  std::size_t caps_dim = 0;
  std::size_t routing_iters = 0;
  std::size_t lstm_hidden = 0;
};

// Every architecture hyperparameter. Defaults follow the published
// configuration: embedding 100, documents capped at 500 tokens, seq-caps
// layers 10x16 (routing 5, hidden 200) and 5x10 (routing 5, hidden 128),
// fully connected 1024 x 512, focal loss gamma 2 / alpha 0.25.
struct ModelConfig {
  std::size_t vocab_size = 0;   // set from the training vocabulary
  std::size_t embed_dim = 100;
  std::size_t max_len = 500;
  SeqCapsLayerConfig layer1{10, 16, 5, 200};
  SeqCapsLayerConfig layer2{5, 10, 5, 128};
  std::size_t fc1_dim = 1024;
  std::size_t fc2_dim = 512;
  std::size_t num_classes = 0;  // set from the label set
  ResidualMode residual_mode = ResidualMode::attention;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  std::vector<double> focal_alpha_per_class;  // empty: constant alpha
  std::uint64_t seed = 1;

  std::size_t flatten_dim() const { return layer2.caps_num * layer2.caps_dim; }

  std::size_t fc1_input_dim() const {
    return flatten_dim() +
           (residual_mode == ResidualMode::none ? 0 : embed_dim);
  }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ContractError(std::string("ModelConfig: ") + name +
                                      " must be positive");
    };
    positive(vocab_size, "vocab_size");
    positive(embed_dim, "embed_dim");
    positive(max_len, "max_len");
    positive(fc1_dim, "fc1_dim");
    positive(fc2_dim, "fc2_dim");
    positive(num_classes, "num_classes");
    for (const auto* layer : {&layer1, &layer2}) {
      positive(layer->caps_num, "caps_num");
      positive(layer->caps_dim, "caps_dim");
      positive(layer->routing_iters, "routing_iters");
      positive(layer->lstm_hidden, "lstm_hidden");
    }
    if (!focal_alpha_per_class.empty() &&
        focal_alpha_per_class.size() != num_classes) {
      throw ContractError(
          "ModelConfig: focal_alpha_per_class must have one entry per class");
    }
  }

  double alpha_for_class(std::size_t cls) const {
    return focal_alpha_per_class.empty() ? focal_alpha
                                         : focal_alpha_per_class[cls];
  }

  bool operator==(const ModelConfig& other) const {
    auto layer_eq = [](const SeqCapsLayerConfig& a, const SeqCapsLayerConfig& b) {
      return a.caps_num == b.caps_num && a.caps_dim == b.caps_dim &&
             a.routing_iters == b.routing_iters && a.lstm_hidden == b.lstm_hidden;
    };
    return vocab_size == other.vocab_size && embed_dim == other.embed_dim &&
           max_len == other.max_len && layer_eq(layer1, other.layer1) &&
           layer_eq(layer2, other.layer2) && fc1_dim == other.fc1_dim &&
           fc2_dim == other.fc2_dim && num_classes == other.num_classes &&
           residual_mode == other.residual_mode &&
           focal_gamma == other.focal_gamma && focal_alpha == other.focal_alpha &&
           focal_alpha_per_class == other.focal_alpha_per_class &&
           seed == other.seed;
  }
};

// All trainable tensors, each with a stable unique name. Enumeration order
// is fixed; initialization draws in that order from the config seed.
template <typename Scalar>
struct ModelParams {
  ModelConfig config;
  Tensor<Scalar> embedding;  // [vocab x embed]
  LstmParams<Scalar> lstm1, lstm2;
  Tensor<Scalar> caps1_w, caps2_w;  // [m x p x d_lower]
  AttentionParams<Scalar> attention;  // attention residual mode only
  Tensor<Scalar> fc1_w, fc1_b, fc2_w, fc2_b, out_w, out_b;

  static ModelParams init(const ModelConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    ModelParams p;
    p.config = config;

    auto uniform = [&rng](Shape shape, double bound) {
      std::uniform_real_distribution<double> dist(-bound, bound);
      std::vector<Scalar> data(shape_numel(shape));
      for (auto& v : data) v = static_cast<Scalar>(dist(rng));
      return Tensor<Scalar>::from_data(std::move(shape), std::move(data), true);
    };

    p.embedding = uniform({config.vocab_size, config.embed_dim}, 0.1);
    p.lstm1 = LstmParams<Scalar>::init(config.embed_dim, config.layer1.lstm_hidden, rng);
    p.caps1_w = uniform(
        {config.layer1.caps_num, config.layer1.caps_dim, config.layer1.lstm_hidden},
        1.0 / std::sqrt(static_cast<double>(config.layer1.lstm_hidden)));
    p.lstm2 = LstmParams<Scalar>::init(config.layer1.caps_dim,
                                       config.layer2.lstm_hidden, rng);
    p.caps2_w = uniform(
        {config.layer2.caps_num, config.layer2.caps_dim, config.layer2.lstm_hidden},
        1.0 / std::sqrt(static_cast<double>(config.layer2.lstm_hidden)));
    if (config.residual_mode == ResidualMode::attention) {
      p.attention = AttentionParams<Scalar>::init(config.embed_dim, rng);
    }
    const std::size_t fc1_in = config.fc1_input_dim();
    p.fc1_w = uniform({config.fc1_dim, fc1_in},
                      1.0 / std::sqrt(static_cast<double>(fc1_in)));
    p.fc1_b = Tensor<Scalar>::zeros({config.fc1_dim}, true);
    p.fc2_w = uniform({config.fc2_dim, config.fc1_dim},
                      1.0 / std::sqrt(static_cast<double>(config.fc1_dim)));
    p.fc2_b = Tensor<Scalar>::zeros({config.fc2_dim}, true);
    p.out_w = uniform({config.num_classes, config.fc2_dim},
                      1.0 / std::sqrt(static_cast<double>(config.fc2_dim)));
    p.out_b = Tensor<Scalar>::zeros({config.num_classes}, true);
    return p;
  }

  std::vector<std::pair<std::string, Tensor<Scalar>>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor<Scalar>>> out;
    auto lstm_entries = [&out](const std::string& prefix,
                               const LstmParams<Scalar>& lstm) {
      out.emplace_back(prefix + ".w_input", lstm.w_input);
      out.emplace_back(prefix + ".w_forget", lstm.w_forget);
      out.emplace_back(prefix + ".w_output", lstm.w_output);
      out.emplace_back(prefix + ".w_candidate", lstm.w_candidate);
      out.emplace_back(prefix + ".b_input", lstm.b_input);
      out.emplace_back(prefix + ".b_forget", lstm.b_forget);
      out.emplace_back(prefix + ".b_output", lstm.b_output);
      out.emplace_back(prefix + ".b_candidate", lstm.b_candidate);
    };
    out.emplace_back("embedding", embedding);
    lstm_entries("layer1.lstm", lstm1);
    out.emplace_back("layer1.caps.weights", caps1_w);
    lstm_entries("layer2.lstm", lstm2);
    out.emplace_back("layer2.caps.weights", caps2_w);
    if (config.residual_mode == ResidualMode::attention) {
      out.emplace_back("attention.w", attention.w);
      out.emplace_back("attention.b", attention.b);
    }
    out.emplace_back("fc1.weight", fc1_w);
    out.emplace_back("fc1.bias", fc1_b);
    out.emplace_back("fc2.weight", fc2_w);
    out.emplace_back("fc2.bias", fc2_b);
    out.emplace_back("output.weight", out_w);
    out.emplace_back("output.bias", out_b);
    return out;
  }

  std::size_t total_parameter_count() const {
    std::size_t total = 0;
    for (const auto& [name, tensor] : named_parameters()) total += tensor.numel();
    return total;
  }

  void zero_grads() {
    for (auto& [name, tensor] : named_parameters()) {
      auto t = tensor;
      t.zero_grad();
    }
  }

  // Deep copy with fresh leaves (training snapshots).
  ModelParams clone() const {
    ModelParams copy;
    copy.config = config;
    copy.embedding = embedding.clone_leaf();
    auto clone_lstm = [](const LstmParams<Scalar>& src) {
      LstmParams<Scalar> dst;
      dst.input_dim = src.input_dim;
      dst.hidden_dim = src.hidden_dim;
      dst.w_input = src.w_input.clone_leaf();
      dst.w_forget = src.w_forget.clone_leaf();
      dst.w_output = src.w_output.clone_leaf();
      dst.w_candidate = src.w_candidate.clone_leaf();
      dst.b_input = src.b_input.clone_leaf();
      dst.b_forget = src.b_forget.clone_leaf();
      dst.b_output = src.b_output.clone_leaf();
      dst.b_candidate = src.b_candidate.clone_leaf();
      return dst;
    };
    copy.lstm1 = clone_lstm(lstm1);
    copy.lstm2 = clone_lstm(lstm2);
    copy.caps1_w = caps1_w.clone_leaf();
    copy.caps2_w = caps2_w.clone_leaf();
    if (config.residual_mode == ResidualMode::attention) {
      copy.attention.w = attention.w.clone_leaf();
      copy.attention.b = attention.b.clone_leaf();
    }
    copy.fc1_w = fc1_w.clone_leaf();
    copy.fc1_b = fc1_b.clone_leaf();
    copy.fc2_w = fc2_w.clone_leaf();
    copy.fc2_b = fc2_b.clone_leaf();
    copy.out_w = out_w.clone_leaf();
    copy.out_b = out_b.clone_leaf();
    return copy;
  }
};

template <typename Scalar>
struct ForwardTrace {
  Tensor<Scalar> probabilities;  // [k], sums to 1
  Tensor<Scalar> logits;         // [k], pre-softmax
};

// Full model pass: embedded tokens form the primary capsules, two seq-caps
// layers distill them, the residual vector is concatenated to the flattened
// capsules, and two tanh fully-connected layers plus a linear softmax head
// produce the class distribution.
template <typename Scalar>
ForwardTrace<Scalar> forward_trace(std::span<const std::size_t> tokens,
                                   const ModelParams<Scalar>& params,
                                   const ModelConfig& config) {
  if (tokens.empty()) {
    throw ContractError("forward: empty token sequence");
  }
  if (tokens.size() > config.max_len) {
    throw ContractError("forward: sequence length " +
                        std::to_string(tokens.size()) + " exceeds max_len " +
                        std::to_string(config.max_len) +
                        "; truncate during encoding");
  }
  for (std::size_t id : tokens) {
    if (id >= config.vocab_size) {
      throw ContractError("forward: token id " + std::to_string(id) +
                          " outside vocabulary of size " +
                          std::to_string(config.vocab_size));
    }
  }
  const std::size_t n = tokens.size();
  auto primaries = CapsuleSet<Scalar>(
      n, config.embed_dim,
      gather_rows(params.embedding, {tokens.begin(), tokens.end()}));

  auto seq_caps = [](const CapsuleSet<Scalar>& in, const LstmParams<Scalar>& lstm,
                     const Tensor<Scalar>& caps_w, std::size_t iters) {
    auto hidden = lstm_forward(in, lstm);
    auto predictions = transform_shared(hidden, SharedWeights<Scalar>(caps_w));
    auto [outputs, state] = dynamic_route(predictions, iters);
    return outputs;
  };

  auto v1 = seq_caps(primaries, params.lstm1, params.caps1_w,
                     config.layer1.routing_iters);
  auto v2 = seq_caps(v1, params.lstm2, params.caps2_w,
                     config.layer2.routing_iters);

  auto features = reshape(v2.vectors, {config.flatten_dim()});
  if (config.residual_mode == ResidualMode::attention) {
    auto context = attention_pool(primaries, params.attention);
    features = concat<Scalar>({features, context}, 0);
  } else if (config.residual_mode == ResidualMode::sum) {
    auto summed = sum(primaries.vectors, 0);  // positionwise sum, [embed]
    features = concat<Scalar>({features, summed}, 0);
  }

  auto h1 = tanh(add(matmul(params.fc1_w, features), params.fc1_b));
  auto h2 = tanh(add(matmul(params.fc2_w, h1), params.fc2_b));
  auto logits = add(matmul(params.out_w, h2), params.out_b);
  return {softmax(logits, 0), logits};
}

template <typename Scalar>
Tensor<Scalar> forward(std::span<const std::size_t> tokens,
                       const ModelParams<Scalar>& params,
                       const ModelConfig& config) {
  return forward_trace(tokens, params, config).probabilities;
}

// Focal loss on the true-class probability:
//   -alpha * (1 - y_t)^gamma * log(y_t),
// with y_t clamped to [1e-7, 1 - 1e-7] before the log. Non-negative; at
// gamma = 0, alpha = 1 it reduces to cross entropy.
template <typename Scalar>
Tensor<Scalar> focal_loss(const Tensor<Scalar>& probabilities,
                          std::size_t true_class, Scalar gamma, Scalar alpha) {
  if (probabilities.rank() != 1) {
    throw ShapeError("focal_loss: expected a probability vector, got " +
                     shape_str(probabilities.shape()));
  }
  if (true_class >= probabilities.extent(0)) {
    throw ContractError("focal_loss: class " + std::to_string(true_class) +
                        " out of range for " +
                        std::to_string(probabilities.extent(0)) + " classes");
  }
  const Scalar eps = Scalar(1e-7);
  auto y = clamp(slice(probabilities, 0, true_class, 1), eps, Scalar(1) - eps);
  auto focus = pow_const(add_const(mul_const(y, Scalar(-1)), Scalar(1)), gamma);
  return mul_const(mul(focus, log(y)), -alpha);
}

// Argmax of the forward distribution; ties break toward the lowest index.
template <typename Scalar>
std::size_t predict(std::span<const std::size_t> tokens,
                    const ModelParams<Scalar>& params,
                    const ModelConfig& config) {
  NoGradGuard guard;
  return argmax(forward(tokens, params, config));
}

}  // namespace secaps
