#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "secaps/data.hpp"
#include "secaps/errors.hpp"
#include "secaps/metrics.hpp"
#include "secaps/model.hpp"

namespace secaps {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  bool log_train_metrics = false;  // also score the train split when evaluating

  void validate() const {
    if (learning_rate < 0) throw ContractError("TrainConfig: learning_rate < 0");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1) {
      throw ContractError("TrainConfig: betas must lie in (0, 1)");
    }
    if (epsilon <= 0) throw ContractError("TrainConfig: epsilon must be positive");
    if (batch_size == 0) throw ContractError("TrainConfig: batch_size == 0");
    if (eval_every == 0) throw ContractError("TrainConfig: eval_every == 0");
  }
};

// First/second moment accumulators and the step counter, aligned with the
// model's named-parameter order.
template <typename Scalar>
struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<Scalar>> first_moment;
  std::vector<std::vector<Scalar>> second_moment;

  static AdamState init(const ModelParams<Scalar>& params) {
    AdamState state;
    for (const auto& [name, tensor] : params.named_parameters()) {
      state.first_moment.emplace_back(tensor.numel(), Scalar(0));
      state.second_moment.emplace_back(tensor.numel(), Scalar(0));
    }
    return state;
  }
};

// Bias-corrected Adam update of one value buffer from its gradient.
// `step` counts from 1 for the first update.
template <typename Scalar>
void adam_update(std::span<Scalar> values, std::span<const Scalar> grad,
                 std::vector<Scalar>& m, std::vector<Scalar>& v,
                 std::size_t step, const TrainConfig& config) {
  const Scalar beta1 = static_cast<Scalar>(config.beta1);
  const Scalar beta2 = static_cast<Scalar>(config.beta2);
  const Scalar lr = static_cast<Scalar>(config.learning_rate);
  const Scalar eps = static_cast<Scalar>(config.epsilon);
  const Scalar correction1 = Scalar(1) - std::pow(beta1, static_cast<Scalar>(step));
  const Scalar correction2 = Scalar(1) - std::pow(beta2, static_cast<Scalar>(step));
  for (std::size_t i = 0; i < values.size(); ++i) {
    m[i] = beta1 * m[i] + (Scalar(1) - beta1) * grad[i];
    v[i] = beta2 * v[i] + (Scalar(1) - beta2) * grad[i] * grad[i];
    const Scalar m_hat = m[i] / correction1;
    const Scalar v_hat = v[i] / correction2;
    values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

// One Adam update over every parameter from its accumulated gradient;
// gradients are zeroed afterwards.
template <typename Scalar>
void adam_step(ModelParams<Scalar>& params, AdamState<Scalar>& state,
               const TrainConfig& config) {
  auto named = params.named_parameters();
  if (named.size() != state.first_moment.size()) {
    throw ContractError("adam_step: state tracks " +
                        std::to_string(state.first_moment.size()) +
                        " tensors, model has " + std::to_string(named.size()));
  }
  ++state.step;
  for (std::size_t t = 0; t < named.size(); ++t) {
    auto tensor = named[t].second;
    if (tensor.numel() != state.first_moment[t].size()) {
      throw ContractError("adam_step: gradient shape mismatch for " +
                          named[t].first);
    }
    adam_update<Scalar>(tensor.mutable_values(), tensor.grad(),
                        state.first_moment[t], state.second_moment[t],
                        state.step, config);
    tensor.zero_grad();
  }
}

struct EncodedExample {
  std::vector<std::size_t> ids;
  std::size_t label = 0;
};

inline std::vector<EncodedExample> encode_split(
    const std::vector<LabeledExample>& split, const Dataset& dataset,
    const Vocabulary& vocab, std::size_t max_len) {
  std::vector<EncodedExample> out;
  out.reserve(split.size());
  for (const auto& ex : split) {
    out.push_back({encode_example(ex, vocab, max_len), dataset.label_id(ex.charge)});
  }
  return out;
}

// Rectangular mini-batch: rows padded with PAD to the longest member, with
// the valid length carried per row. The model consumes only the valid
// prefix of each row.
struct Batch {
  std::vector<std::vector<std::size_t>> padded_ids;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> labels;
};

inline Batch make_batch(const std::vector<EncodedExample>& examples,
                        std::span<const std::size_t> indices) {
  Batch batch;
  std::size_t width = 0;
  for (std::size_t idx : indices)
    width = std::max(width, examples[idx].ids.size());
  for (std::size_t idx : indices) {
    const auto& ex = examples[idx];
    std::vector<std::size_t> row(width, Vocabulary::kPad);
    std::copy(ex.ids.begin(), ex.ids.end(), row.begin());
    batch.padded_ids.push_back(std::move(row));
    batch.lengths.push_back(ex.ids.size());
    batch.labels.push_back(ex.label);
  }
  return batch;
}

template <typename Scalar>
struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;
  MetricsReport valid;
  MetricsReport test;
  MetricsReport train;  // filled only when log_train_metrics is set
  bool evaluated = false;
};

template <typename Scalar>
struct TrainResult {
  ModelParams<Scalar> params;  // snapshot of the best validation macro-F1 epoch
  std::size_t best_epoch = 0;
  double best_valid_macro_f1 = -1.0;
  std::vector<EpochLog<Scalar>> log;
};

template <typename Scalar>
std::vector<std::size_t> predict_split(const std::vector<EncodedExample>& split,
                                       const ModelParams<Scalar>& params,
                                       const ModelConfig& config) {
  std::vector<std::size_t> out;
  out.reserve(split.size());
  for (const auto& ex : split) out.push_back(predict<Scalar>(ex.ids, params, config));
  return out;
}

template <typename Scalar>
MetricsReport evaluate_split(const std::vector<EncodedExample>& split,
                             const ModelParams<Scalar>& params,
                             const ModelConfig& config) {
  auto predictions = predict_split(split, params, config);
  std::vector<std::size_t> gold;
  gold.reserve(split.size());
  for (const auto& ex : split) gold.push_back(ex.label);
  return evaluate_metrics(predictions, gold, config.num_classes);
}

// Mini-batch training on the mean focal loss. Deterministic for a fixed
// seed. Returns the parameters of the epoch with the best validation
// macro-F1 together with the full per-epoch metric log.
template <typename Scalar>
TrainResult<Scalar> train(const Dataset& dataset, const Vocabulary& vocab,
                          ModelParams<Scalar> params,
                          const TrainConfig& train_config) {
  train_config.validate();
  const ModelConfig& config = params.config;
  config.validate();
  if (dataset.train.empty() || dataset.valid.empty() || dataset.test.empty()) {
    throw ContractError("train: every dataset split must be non-empty");
  }
  if (dataset.labels.size() != config.num_classes) {
    throw ContractError("train: dataset has " +
                        std::to_string(dataset.labels.size()) +
                        " labels, model expects " +
                        std::to_string(config.num_classes));
  }

  auto train_set = encode_split(dataset.train, dataset, vocab, config.max_len);
  auto valid_set = encode_split(dataset.valid, dataset, vocab, config.max_len);
  auto test_set = encode_split(dataset.test, dataset, vocab, config.max_len);

  auto state = AdamState<Scalar>::init(params);
  std::mt19937_64 shuffle_rng(train_config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult<Scalar> result;
  result.params = params.clone();
  std::vector<double> loss_history;

  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += train_config.batch_size) {
      const std::size_t count =
          std::min(train_config.batch_size, order.size() - start);
      auto batch = make_batch(
          train_set, std::span<const std::size_t>(order).subspan(start, count));
      Tensor<Scalar> total;
      try {
        for (std::size_t b = 0; b < count; ++b) {
          std::span<const std::size_t> ids(batch.padded_ids[b].data(),
                                           batch.lengths[b]);
          auto probs = forward<Scalar>(ids, params, config);
          auto loss = focal_loss<Scalar>(
              probs, batch.labels[b], static_cast<Scalar>(config.focal_gamma),
              static_cast<Scalar>(config.alpha_for_class(batch.labels[b])));
          total = b == 0 ? loss : add(total, loss);
        }
        total = mul_const(total, Scalar(1) / static_cast<Scalar>(count));
      } catch (const NumericError& e) {
        std::string history;
        for (double l : loss_history) history += " " + std::to_string(l);
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(start / train_config.batch_size) +
                           "; recent batch losses:" + history + "; cause: " +
                           e.what());
      }
      const double batch_loss = static_cast<double>(total.item());
      loss_history.push_back(batch_loss);
      if (loss_history.size() > 16) loss_history.erase(loss_history.begin());
      epoch_loss += batch_loss * static_cast<double>(count);
      seen += count;
      total.backward();
      adam_step(params, state, train_config);
    }

    EpochLog<Scalar> entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(seen);
    const bool evaluate = (epoch + 1) % train_config.eval_every == 0 ||
                          epoch + 1 == train_config.epochs;
    if (evaluate) {
      entry.valid = evaluate_split(valid_set, params, config);
      entry.test = evaluate_split(test_set, params, config);
      if (train_config.log_train_metrics) {
        entry.train = evaluate_split(train_set, params, config);
      }
      entry.evaluated = true;
      if (entry.valid.macro_f1 > result.best_valid_macro_f1) {
        result.best_valid_macro_f1 = entry.valid.macro_f1;
        result.best_epoch = epoch;
        result.params = params.clone();
      }
    }
    result.log.push_back(std::move(entry));
  }
  return result;
}

}  // namespace secaps
