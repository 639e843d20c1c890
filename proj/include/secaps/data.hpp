#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "secaps/errors.hpp"
#include "secaps/tensor.hpp"

namespace secaps {

// One pre-tokenized document: the fact description and its charge label.
struct LabeledExample {
  std::vector<std::string> fact;
  std::string charge;

  bool operator==(const LabeledExample&) const = default;
};

// Token ids, built from the training split only. Id 0 is PAD, id 1 is UNK;
// real tokens get dense ids in first-appearance order, which makes rebuilds
// from identical input identical.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  static Vocabulary build(const std::vector<LabeledExample>& train,
                          std::size_t min_count = 1) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& ex : train)
      for (const auto& tok : ex.fact) ++counts[tok];
    Vocabulary v;
    for (const auto& ex : train) {
      for (const auto& tok : ex.fact) {
        if (counts[tok] >= min_count && !v.ids_.count(tok)) {
          v.ids_.emplace(tok, v.tokens_.size());
          v.tokens_.push_back(tok);
        }
      }
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }

  std::size_t id_for(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  const std::string& token_at(std::size_t id) const { return tokens_[id]; }

  // Real tokens, in id order starting at id 2.
  std::vector<std::string> real_tokens() const {
    return {tokens_.begin() + 2, tokens_.end()};
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("vocabulary: cannot write " + path);
    for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("vocabulary: cannot read " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (v.ids_.count(line)) {
        throw FormatError("vocabulary: duplicate token '" + line + "' in " + path);
      }
      v.ids_.emplace(line, v.tokens_.size());
      v.tokens_.push_back(line);
    }
    return v;
  }

 private:
  Vocabulary() : tokens_{"<pad>", "<unk>"} {
    ids_.emplace("<pad>", kPad);
    ids_.emplace("<unk>", kUnk);
  }

  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::string> tokens_;
};

// The three splits plus the label set (sorted, stable) and training-split
// label frequencies.
struct Dataset {
  std::vector<LabeledExample> train, valid, test;
  std::vector<std::string> labels;
  std::unordered_map<std::string, std::size_t> label_ids;
  std::vector<std::size_t> train_label_counts;

  static Dataset from_splits(std::vector<LabeledExample> train,
                             std::vector<LabeledExample> valid,
                             std::vector<LabeledExample> test) {
    Dataset d;
    d.train = std::move(train);
    d.valid = std::move(valid);
    d.test = std::move(test);
    std::set<std::string> unique;
    for (const auto* split : {&d.train, &d.valid, &d.test})
      for (const auto& ex : *split) unique.insert(ex.charge);
    d.labels.assign(unique.begin(), unique.end());
    for (std::size_t i = 0; i < d.labels.size(); ++i)
      d.label_ids.emplace(d.labels[i], i);
    d.train_label_counts.assign(d.labels.size(), 0);
    for (const auto& ex : d.train) ++d.train_label_counts[d.label_ids.at(ex.charge)];
    return d;
  }

  std::size_t label_id(const std::string& charge) const {
    auto it = label_ids.find(charge);
    if (it == label_ids.end()) {
      throw ContractError("dataset: unknown label '" + charge + "'");
    }
    return it->second;
  }
};

// One JSON object per line: {"fact": ["tok", ...], "charge": "label"}.
inline std::vector<LabeledExample> load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_jsonl: cannot read " + path);
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("load_jsonl: " + path + " line " +
                        std::to_string(line_no) + ": " + e.what());
    }
    auto schema_error = [&](const std::string& what) {
      return SchemaError("load_jsonl: " + path + " line " +
                         std::to_string(line_no) + ": " + what);
    };
    if (!record.is_object()) throw schema_error("expected a JSON object");
    if (!record.contains("fact") || !record["fact"].is_array())
      throw schema_error("missing or non-array \"fact\"");
    if (!record.contains("charge") || !record["charge"].is_string())
      throw schema_error("missing or non-string \"charge\"");
    LabeledExample ex;
    for (const auto& tok : record["fact"]) {
      if (!tok.is_string()) throw schema_error("\"fact\" entries must be strings");
      ex.fact.push_back(tok.get<std::string>());
    }
    ex.charge = record["charge"].get<std::string>();
    if (ex.fact.empty()) throw schema_error("\"fact\" must be non-empty");
    if (ex.charge.empty()) throw schema_error("\"charge\" must be non-empty");
    out.push_back(std::move(ex));
  }
  return out;
}

inline void save_jsonl(const std::string& path,
                       const std::vector<LabeledExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_jsonl: cannot write " + path);
  for (const auto& ex : examples) {
    nlohmann::json record;
    record["fact"] = ex.fact;
    record["charge"] = ex.charge;
    out << record.dump() << '\n';
  }
}

// word2vec text format: an optional "count dim" header line, then one line
// per word: the token followed by `dim` decimals.
inline std::unordered_map<std::string, std::vector<double>> load_embeddings(
    const std::string& path, std::size_t dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_embeddings: cannot read " + path);
  std::unordered_map<std::string, std::vector<double>> table;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::vector<double> values;
    double v;
    while (fields >> v) values.push_back(v);
    if (first) {
      first = false;
      // Header line: two integer-ish fields, the second matching dim.
      if (values.size() == 1) {
        std::size_t declared = static_cast<std::size_t>(values[0]);
        if (declared == dim) continue;
      }
    }
    if (values.size() != dim) {
      throw FormatError("load_embeddings: " + path + " line " +
                        std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, got " +
                        std::to_string(values.size()));
    }
    table[word] = std::move(values);
  }
  return table;
}

namespace detail {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

// Embedding matrix for a vocabulary: PAD row is zero; tokens found in the
// table use its vectors; everything else (UNK included) gets a per-token
// seeded uniform draw from [-0.1, 0.1], the same for the same seed.
template <typename Scalar>
Tensor<Scalar> embedding_matrix(
    const Vocabulary& vocab,
    const std::unordered_map<std::string, std::vector<double>>& table,
    std::size_t dim, std::uint64_t seed) {
  std::vector<Scalar> data(vocab.size() * dim, Scalar(0));
  for (std::size_t id = 1; id < vocab.size(); ++id) {
    const std::string& token = vocab.token_at(id);
    auto it = table.find(token);
    if (it != table.end()) {
      if (it->second.size() != dim) {
        throw ShapeError("embedding_matrix: vector for '" + token + "' has " +
                         std::to_string(it->second.size()) + " values, expected " +
                         std::to_string(dim));
      }
      for (std::size_t c = 0; c < dim; ++c)
        data[id * dim + c] = static_cast<Scalar>(it->second[c]);
    } else {
      std::mt19937_64 rng(seed ^ detail::fnv1a64(token));
      std::uniform_real_distribution<double> dist(-0.1, 0.1);
      for (std::size_t c = 0; c < dim; ++c)
        data[id * dim + c] = static_cast<Scalar>(dist(rng));
    }
  }
  return Tensor<Scalar>::from_data({vocab.size(), dim}, std::move(data), true);
}

// Token ids for one example: unknown tokens map to UNK, the sequence is cut
// to the first max_len tokens, and no padding is added here (batching pads
// and carries the valid length).
inline std::vector<std::size_t> encode_example(const LabeledExample& example,
                                               const Vocabulary& vocab,
                                               std::size_t max_len) {
  if (example.fact.empty()) {
    throw ContractError("encode_example: empty fact");
  }
  const std::size_t len = std::min(example.fact.size(), max_len);
  std::vector<std::size_t> ids(len);
  for (std::size_t i = 0; i < len; ++i) ids[i] = vocab.id_for(example.fact[i]);
  return ids;
}

// ---------------------------------------------------------------------------
// Synthetic few-shot benchmark generator
// ---------------------------------------------------------------------------

struct GenSpec {
  std::size_t num_classes = 20;
  std::size_t vocab_size = 600;
  double zipf_exponent = 1.0;
  std::size_t train_size = 2000;
  std::uint64_t seed = 42;
  std::pair<std::size_t, std::size_t> length_range{12, 30};
};

// Deterministic training-count allocation: Zipf weights over class ranks,
// largest-remainder rounding to the exact total (minimum one per class), and
// a few-shot tail — the last ceil(K/4) classes are capped at 10 examples,
// their surplus moving to class 0. The cap is what makes the generated
// benchmark exercise the low-frequency bucket regardless of the exponent.
inline std::vector<std::size_t> zipf_allocation(std::size_t num_classes,
                                                std::size_t total,
                                                double exponent) {
  if (num_classes == 0) throw ContractError("zipf_allocation: no classes");
  if (total < num_classes) {
    throw ContractError("zipf_allocation: total " + std::to_string(total) +
                        " cannot cover " + std::to_string(num_classes) +
                        " classes");
  }
  std::vector<double> ideal(num_classes);
  double weight_sum = 0;
  for (std::size_t c = 0; c < num_classes; ++c)
    weight_sum += std::pow(static_cast<double>(c + 1), -exponent);
  for (std::size_t c = 0; c < num_classes; ++c)
    ideal[c] = static_cast<double>(total) *
               std::pow(static_cast<double>(c + 1), -exponent) / weight_sum;

  std::vector<std::size_t> counts(num_classes);
  long long assigned = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(ideal[c]));
    assigned += static_cast<long long>(counts[c]);
  }
  long long diff = static_cast<long long>(total) - assigned;
  while (diff > 0) {  // grant to the most under-allocated class, low index first
    std::size_t best = 0;
    double best_gap = -1e300;
    for (std::size_t c = 0; c < num_classes; ++c) {
      double gap = ideal[c] - static_cast<double>(counts[c]);
      if (gap > best_gap) {
        best_gap = gap;
        best = c;
      }
    }
    ++counts[best];
    --diff;
  }
  while (diff < 0) {  // reclaim from the most over-allocated class with > 1
    std::size_t best = num_classes;
    double best_gap = -1e300;
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (counts[c] <= 1) continue;
      double gap = static_cast<double>(counts[c]) - ideal[c];
      if (gap >= best_gap) {  // ties resolve to the highest index
        best_gap = gap;
        best = c;
      }
    }
    --counts[best];
    ++diff;
  }

  const std::size_t tail = (num_classes + 3) / 4;
  for (std::size_t c = num_classes - tail; c < num_classes; ++c) {
    if (counts[c] > 10) {
      counts[0] += counts[c] - 10;
      counts[c] = 10;
    }
  }
  return counts;
}

// Synthetic dataset: each class owns a distinct token multinomial (half
// shared background pool, half a disjoint class-specific block), training
// frequencies follow zipf_allocation, and the valid/test splits scale each
// class down while keeping every class represented. Same spec and seed give
// a bit-identical dataset.
inline Dataset gen_synthetic(const GenSpec& spec) {
  if (spec.num_classes < 2) {
    throw ContractError("gen_synthetic: need at least two classes");
  }
  if (spec.train_size < spec.num_classes) {
    throw ContractError("gen_synthetic: train_size " +
                        std::to_string(spec.train_size) +
                        " cannot cover " + std::to_string(spec.num_classes) +
                        " classes");
  }
  if (spec.length_range.first == 0 ||
      spec.length_range.second < spec.length_range.first) {
    throw ContractError("gen_synthetic: bad length range");
  }
  const std::size_t shared = std::max<std::size_t>(1, spec.vocab_size / 3);
  const std::size_t block = (spec.vocab_size - shared) / spec.num_classes;
  if (block == 0) {
    throw ContractError("gen_synthetic: vocab_size " +
                        std::to_string(spec.vocab_size) +
                        " too small for " + std::to_string(spec.num_classes) +
                        " class blocks");
  }

  int label_width = 1;
  for (std::size_t v = spec.num_classes - 1; v >= 10; v /= 10) ++label_width;
  auto label_name = [&](std::size_t c) {
    std::string digits = std::to_string(c);
    return "charge_" + std::string(label_width - digits.size(), '0') + digits;
  };
  auto token_name = [&](std::size_t t) { return "tok_" + std::to_string(t); };

  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> length_dist(spec.length_range.first,
                                                         spec.length_range.second);
  std::uniform_int_distribution<std::size_t> shared_dist(0, shared - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Share of class-specific tokens per document. High enough that classes
  // with only a handful of training documents still expose every block
  // token several times.
  const double class_token_share = 0.65;

  auto sample_example = [&](std::size_t cls) {
    LabeledExample ex;
    ex.charge = label_name(cls);
    const std::size_t len = length_dist(rng);
    std::uniform_int_distribution<std::size_t> block_dist(
        shared + cls * block, shared + cls * block + block - 1);
    ex.fact.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      ex.fact.push_back(token_name(
          unit(rng) < class_token_share ? block_dist(rng) : shared_dist(rng)));
    }
    return ex;
  };

  auto train_counts =
      zipf_allocation(spec.num_classes, spec.train_size, spec.zipf_exponent);

  auto make_split = [&](auto count_for_class) {
    std::vector<LabeledExample> split;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      const std::size_t count = count_for_class(c);
      for (std::size_t e = 0; e < count; ++e) split.push_back(sample_example(c));
    }
    std::shuffle(split.begin(), split.end(), rng);
    return split;
  };

  auto train = make_split([&](std::size_t c) { return train_counts[c]; });
  auto valid = make_split([&](std::size_t c) {
    return std::max<std::size_t>(
        2, static_cast<std::size_t>(std::llround(0.15 * train_counts[c])));
  });
  auto test = make_split([&](std::size_t c) {
    return std::max<std::size_t>(
        3, static_cast<std::size_t>(std::llround(0.25 * train_counts[c])));
  });
  return Dataset::from_splits(std::move(train), std::move(valid), std::move(test));
}

}  // namespace secaps
