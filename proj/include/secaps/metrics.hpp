#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "secaps/errors.hpp"

namespace secaps {

// Accuracy, per-class precision/recall/F1, their unweighted macro averages
// over all k classes, and the raw confusion counts (gold rows, predicted
// columns).
struct MetricsReport {
  double accuracy = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  std::vector<double> per_class_precision, per_class_recall, per_class_f1;
  std::vector<std::vector<std::size_t>> confusion;
};

// 0/0 ratios are defined as 0 throughout: a class never predicted and never
// gold scores zero everywhere, and macro averages still divide by k.
inline MetricsReport evaluate_metrics(std::span<const std::size_t> predictions,
                                      std::span<const std::size_t> gold,
                                      std::size_t k) {
  if (predictions.size() != gold.size()) {
    throw ContractError("evaluate_metrics: " + std::to_string(predictions.size()) +
                        " predictions vs " + std::to_string(gold.size()) +
                        " gold labels");
  }
  if (k == 0) throw ContractError("evaluate_metrics: k must be positive");
  MetricsReport report;
  report.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] >= k || gold[i] >= k) {
      throw ContractError("evaluate_metrics: class index out of range at " +
                          std::to_string(i));
    }
    ++report.confusion[gold[i]][predictions[i]];
    if (predictions[i] == gold[i]) ++correct;
  }
  report.accuracy = predictions.empty()
                        ? 0.0
                        : static_cast<double>(correct) / predictions.size();
  report.per_class_precision.resize(k);
  report.per_class_recall.resize(k);
  report.per_class_f1.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = report.confusion[c][c];
    std::size_t predicted = 0, actual = 0;
    for (std::size_t g = 0; g < k; ++g) predicted += report.confusion[g][c];
    for (std::size_t p = 0; p < k; ++p) actual += report.confusion[c][p];
    double precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / predicted;
    double recall = actual == 0 ? 0.0 : static_cast<double>(tp) / actual;
    double f1 = (precision + recall) == 0.0
                    ? 0.0
                    : 2.0 * precision * recall / (precision + recall);
    report.per_class_precision[c] = precision;
    report.per_class_recall[c] = recall;
    report.per_class_f1[c] = f1;
    report.macro_precision += precision;
    report.macro_recall += recall;
    report.macro_f1 += f1;
  }
  report.macro_precision /= static_cast<double>(k);
  report.macro_recall /= static_cast<double>(k);
  report.macro_f1 /= static_cast<double>(k);
  return report;
}

enum class FrequencyBucket { low, medium, high };

// Training-frequency buckets: low is a count of at most 10, high is a count
// strictly above 100, medium is everything between.
inline FrequencyBucket bucket_for(std::size_t train_count) {
  if (train_count <= 10) return FrequencyBucket::low;
  if (train_count > 100) return FrequencyBucket::high;
  return FrequencyBucket::medium;
}

inline std::string to_string(FrequencyBucket b) {
  switch (b) {
    case FrequencyBucket::low: return "low";
    case FrequencyBucket::medium: return "medium";
    case FrequencyBucket::high: return "high";
  }
  return "low";
}

struct FrequencyBuckets {
  std::vector<FrequencyBucket> per_class;
  // Unweighted mean F1 over member classes; 0 when a bucket is empty.
  double low_f1 = 0, medium_f1 = 0, high_f1 = 0;
  std::size_t low_count = 0, medium_count = 0, high_count = 0;
};

inline FrequencyBuckets bucketize_charges(
    const std::vector<std::size_t>& train_counts,
    const std::vector<double>& per_class_f1) {
  if (train_counts.size() != per_class_f1.size()) {
    throw ContractError("bucketize_charges: counts and F1 sizes differ");
  }
  FrequencyBuckets out;
  out.per_class.reserve(train_counts.size());
  double sums[3] = {0, 0, 0};
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t c = 0; c < train_counts.size(); ++c) {
    FrequencyBucket b = bucket_for(train_counts[c]);
    out.per_class.push_back(b);
    sums[static_cast<int>(b)] += per_class_f1[c];
    ++counts[static_cast<int>(b)];
  }
  auto mean = [&](FrequencyBucket b) {
    int i = static_cast<int>(b);
    return counts[i] == 0 ? 0.0 : sums[i] / static_cast<double>(counts[i]);
  };
  out.low_f1 = mean(FrequencyBucket::low);
  out.medium_f1 = mean(FrequencyBucket::medium);
  out.high_f1 = mean(FrequencyBucket::high);
  out.low_count = counts[0];
  out.medium_count = counts[1];
  out.high_count = counts[2];
  return out;
}

// JSON document with the report keys; labels, when given, annotate the
// per-class entries.
inline nlohmann::json metrics_to_json(
    const MetricsReport& report,
    const std::vector<std::string>& labels = {},
    const FrequencyBuckets* buckets = nullptr) {
  nlohmann::json doc;
  doc["accuracy"] = report.accuracy;
  doc["macro_precision"] = report.macro_precision;
  doc["macro_recall"] = report.macro_recall;
  doc["macro_f1"] = report.macro_f1;
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class_f1.size(); ++c) {
    nlohmann::json entry;
    entry["class"] = c;
    if (c < labels.size()) entry["label"] = labels[c];
    entry["precision"] = report.per_class_precision[c];
    entry["recall"] = report.per_class_recall[c];
    entry["f1"] = report.per_class_f1[c];
    if (buckets && c < buckets->per_class.size()) {
      entry["bucket"] = to_string(buckets->per_class[c]);
    }
    per_class.push_back(std::move(entry));
  }
  doc["per_class"] = std::move(per_class);
  if (buckets) {
    doc["buckets"] = {
        {"low", {{"f1", buckets->low_f1}, {"classes", buckets->low_count}}},
        {"medium",
         {{"f1", buckets->medium_f1}, {"classes", buckets->medium_count}}},
        {"high", {{"f1", buckets->high_f1}, {"classes", buckets->high_count}}},
    };
  }
  return doc;
}

}  // namespace secaps
