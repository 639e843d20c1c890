// Command-line entry point: train, eval, predict, gen-synth, gradcheck, and
// the capsule hyperparameter sweep.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "secaps/secaps.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ModelOptions {
  std::size_t embed_dim = 100;
  std::size_t max_len = 500;
  std::size_t caps_num1 = 10, caps_dim1 = 16, routing1 = 5, hidden1 = 200;
  std::size_t caps_num2 = 5, caps_dim2 = 10, routing2 = 5, hidden2 = 128;
  std::size_t fc1_dim = 1024, fc2_dim = 512;
  std::string residual = "attention";
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  std::uint64_t model_seed = 1;
};

struct TrainOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
};

struct DataOptions {
  std::string data_dir;
  std::string out_dir = "secaps_out";
  std::string embeddings_path;
  std::size_t vocab_min_count = 1;
  std::string precision = "float64";
};


// Options answer to both snake_case (the config-file keys) and dashed
// spellings on the command line.
std::string dual_name(const std::string& snake) {
  std::string names = "--" + snake;
  std::string dashed = snake;
  for (auto& c : dashed)
    if (c == '_') c = '-';
  if (dashed != snake) names += ",--" + dashed;
  return names;
}

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option(dual_name("embed_dim"), o.embed_dim, "word embedding size");
  cmd->add_option(dual_name("max_len"), o.max_len, "maximum document length");
  cmd->add_option(dual_name("caps_num1"), o.caps_num1, "layer-1 capsule count");
  cmd->add_option(dual_name("caps_dim1"), o.caps_dim1, "layer-1 capsule dimension");
  cmd->add_option(dual_name("routing1"), o.routing1, "layer-1 routing iterations");
  cmd->add_option(dual_name("hidden1"), o.hidden1, "layer-1 LSTM hidden units");
  cmd->add_option(dual_name("caps_num2"), o.caps_num2, "layer-2 capsule count");
  cmd->add_option(dual_name("caps_dim2"), o.caps_dim2, "layer-2 capsule dimension");
  cmd->add_option(dual_name("routing2"), o.routing2, "layer-2 routing iterations");
  cmd->add_option(dual_name("hidden2"), o.hidden2, "layer-2 LSTM hidden units");
  cmd->add_option(dual_name("fc1_dim"), o.fc1_dim, "first fully-connected width");
  cmd->add_option(dual_name("fc2_dim"), o.fc2_dim, "second fully-connected width");
  cmd->add_option(dual_name("residual"), o.residual,
                  "residual unit: attention, sum, or none");
  cmd->add_option(dual_name("focal_gamma"), o.focal_gamma, "focal loss focusing");
  cmd->add_option(dual_name("focal_alpha"), o.focal_alpha, "focal loss weighting");
  cmd->add_option(dual_name("model_seed"), o.model_seed, "parameter init seed");
}

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option(dual_name("learning_rate"), o.learning_rate, "Adam learning rate");
  cmd->add_option(dual_name("beta1"), o.beta1, "Adam beta1");
  cmd->add_option(dual_name("beta2"), o.beta2, "Adam beta2");
  cmd->add_option(dual_name("epsilon"), o.epsilon, "Adam epsilon");
  cmd->add_option(dual_name("batch_size"), o.batch_size, "mini-batch size");
  cmd->add_option(dual_name("epochs"), o.epochs, "training epochs");
  cmd->add_option(dual_name("seed"), o.seed, "shuffling seed");
  cmd->add_option(dual_name("eval_every"), o.eval_every, "epochs between evaluations");
}

secaps::ModelConfig to_model_config(const ModelOptions& o,
                                    std::size_t vocab_size,
                                    std::size_t num_classes) {
  secaps::ModelConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = o.embed_dim;
  c.max_len = o.max_len;
  c.layer1 = {o.caps_num1, o.caps_dim1, o.routing1, o.hidden1};
  c.layer2 = {o.caps_num2, o.caps_dim2, o.routing2, o.hidden2};
  c.fc1_dim = o.fc1_dim;
  c.fc2_dim = o.fc2_dim;
  c.num_classes = num_classes;
  c.residual_mode = secaps::residual_mode_from_string(o.residual);
  c.focal_gamma = o.focal_gamma;
  c.focal_alpha = o.focal_alpha;
  c.seed = o.model_seed;
  return c;
}

secaps::TrainConfig to_train_config(const TrainOptions& o) {
  secaps::TrainConfig c;
  c.learning_rate = o.learning_rate;
  c.beta1 = o.beta1;
  c.beta2 = o.beta2;
  c.epsilon = o.epsilon;
  c.batch_size = o.batch_size;
  c.epochs = o.epochs;
  c.seed = o.seed;
  c.eval_every = o.eval_every;
  return c;
}

void log_resolved_config(const CLI::App* cmd) {
  std::cerr << "[config]";
  for (const CLI::Option* opt : cmd->get_options()) {
    if (opt->get_name().rfind("--", 0) != 0) continue;
    if (opt->get_name() == "--help") continue;
    std::string value =
        opt->count() ? opt->results().back() : opt->get_default_str();
    std::cerr << ' ' << opt->get_name().substr(2) << '=' << value;
  }
  std::cerr << '\n';
}

// Flat "key = value" file with '#' comments. Values are raw strings; the
// matching command-line option parses them.
std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw secaps::Error("config: cannot read " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    auto begin = s.find_first_not_of(ws);
    if (begin == std::string::npos) return std::string();
    auto end = s.find_last_not_of(ws);
    return s.substr(begin, end - begin + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw secaps::FormatError("config: " + path + " line " +
                                std::to_string(line_no) +
                                ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw secaps::FormatError("config: " + path + " line " +
                                std::to_string(line_no) + ": empty key");
    }
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

secaps::Dataset load_dataset_dir(const std::string& dir) {
  auto need = [&](const char* name) {
    fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) {
      throw secaps::Error("dataset: missing " + p.string());
    }
    return secaps::load_jsonl(p.string());
  };
  return secaps::Dataset::from_splits(need("train.jsonl"), need("valid.jsonl"),
                                      need("test.jsonl"));
}

void save_labels(const std::string& path, const std::vector<std::string>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw secaps::Error("labels: cannot write " + path);
  for (const auto& label : labels) out << label << '\n';
}

std::vector<std::string> load_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw secaps::Error("labels: cannot read " + path);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) labels.push_back(line);
  }
  return labels;
}

std::string sibling(const std::string& checkpoint, const char* name) {
  return (fs::path(checkpoint).parent_path() / name).string();
}

json epoch_log_to_json(const auto& log) {
  json epochs = json::array();
  for (const auto& entry : log) {
    json e{{"epoch", entry.epoch}, {"train_loss", entry.train_loss}};
    if (entry.evaluated) {
      e["valid_macro_f1"] = entry.valid.macro_f1;
      e["valid_accuracy"] = entry.valid.accuracy;
      e["test_macro_f1"] = entry.test.macro_f1;
    }
    epochs.push_back(std::move(e));
  }
  return epochs;
}

template <typename Scalar>
int run_train(const ModelOptions& model_opts, const TrainOptions& train_opts,
              const DataOptions& data_opts) {
  auto dataset = load_dataset_dir(data_opts.data_dir);
  auto vocab =
      secaps::Vocabulary::build(dataset.train, data_opts.vocab_min_count);
  auto config =
      to_model_config(model_opts, vocab.size(), dataset.labels.size());
  auto params = secaps::ModelParams<Scalar>::init(config);
  if (!data_opts.embeddings_path.empty()) {
    auto table =
        secaps::load_embeddings(data_opts.embeddings_path, config.embed_dim);
    auto matrix = secaps::embedding_matrix<Scalar>(vocab, table,
                                                   config.embed_dim, config.seed);
    auto values = params.embedding.mutable_values();
    auto source = matrix.values();
    std::copy(source.begin(), source.end(), values.begin());
  }

  std::cerr << "[train] " << dataset.train.size() << " train / "
            << dataset.valid.size() << " valid / " << dataset.test.size()
            << " test examples, " << dataset.labels.size() << " classes, vocab "
            << vocab.size() << ", " << params.total_parameter_count()
            << " parameters\n";

  auto result = secaps::train(dataset, vocab, std::move(params),
                              to_train_config(train_opts));
  for (const auto& entry : result.log) {
    std::cerr << "[epoch " << entry.epoch << "] loss " << entry.train_loss;
    if (entry.evaluated) {
      std::cerr << " valid-mf " << entry.valid.macro_f1 << " test-mf "
                << entry.test.macro_f1;
    }
    std::cerr << '\n';
  }

  fs::create_directories(data_opts.out_dir);
  const std::string ckpt_path =
      (fs::path(data_opts.out_dir) / "model.ckpt").string();
  secaps::save_checkpoint(result.params, ckpt_path);
  vocab.save((fs::path(data_opts.out_dir) / "vocab.txt").string());
  save_labels((fs::path(data_opts.out_dir) / "labels.txt").string(),
              dataset.labels);

  // Final metrics come from the saved checkpoint so later `eval` runs
  // reproduce them bit-for-bit.
  auto reloaded = secaps::load_checkpoint<Scalar>(ckpt_path);
  auto valid_set = secaps::encode_split(dataset.valid, dataset, vocab,
                                        reloaded.config.max_len);
  auto test_set = secaps::encode_split(dataset.test, dataset, vocab,
                                       reloaded.config.max_len);
  auto valid_report =
      secaps::evaluate_split(valid_set, reloaded, reloaded.config);
  auto test_report = secaps::evaluate_split(test_set, reloaded, reloaded.config);
  auto buckets = secaps::bucketize_charges(dataset.train_label_counts,
                                           test_report.per_class_f1);

  json doc;
  doc["best_epoch"] = result.best_epoch;
  doc["valid"] = secaps::metrics_to_json(valid_report, dataset.labels);
  doc["test"] = secaps::metrics_to_json(test_report, dataset.labels, &buckets);
  doc["epochs"] = epoch_log_to_json(result.log);
  const std::string metrics_path =
      (fs::path(data_opts.out_dir) / "metrics.json").string();
  std::ofstream metrics(metrics_path, std::ios::binary);
  metrics << doc.dump(2) << '\n';
  std::cerr << "[train] wrote " << ckpt_path << " and " << metrics_path << '\n';
  std::cout << doc.dump(2) << '\n';
  return 0;
}

template <typename Scalar>
int run_eval(const std::string& checkpoint, const std::string& vocab_path,
             const std::string& labels_path, const std::string& data_dir,
             const std::string& split, bool with_buckets) {
  auto params = secaps::load_checkpoint<Scalar>(checkpoint);
  auto vocab = secaps::Vocabulary::load(vocab_path);
  auto labels = load_labels(labels_path);
  if (labels.size() != params.config.num_classes) {
    throw secaps::Error("eval: " + std::to_string(labels.size()) +
                        " labels but the checkpoint expects " +
                        std::to_string(params.config.num_classes));
  }
  std::unordered_map<std::string, std::size_t> label_ids;
  for (std::size_t i = 0; i < labels.size(); ++i) label_ids.emplace(labels[i], i);

  auto dataset = load_dataset_dir(data_dir);
  const std::vector<secaps::LabeledExample>* examples = nullptr;
  if (split == "train") examples = &dataset.train;
  else if (split == "valid") examples = &dataset.valid;
  else if (split == "test") examples = &dataset.test;
  else throw secaps::ContractError("eval: unknown split '" + split + "'");

  std::vector<std::size_t> predictions, gold;
  predictions.reserve(examples->size());
  for (const auto& ex : *examples) {
    auto it = label_ids.find(ex.charge);
    if (it == label_ids.end()) {
      throw secaps::Error("eval: label '" + ex.charge +
                          "' not present in " + labels_path);
    }
    gold.push_back(it->second);
    auto ids = secaps::encode_example(ex, vocab, params.config.max_len);
    predictions.push_back(secaps::predict<Scalar>(ids, params, params.config));
  }
  auto report =
      secaps::evaluate_metrics(predictions, gold, params.config.num_classes);

  json doc;
  if (with_buckets) {
    std::vector<std::size_t> train_counts(labels.size(), 0);
    for (const auto& ex : dataset.train) {
      auto it = label_ids.find(ex.charge);
      if (it != label_ids.end()) ++train_counts[it->second];
    }
    auto buckets =
        secaps::bucketize_charges(train_counts, report.per_class_f1);
    doc = secaps::metrics_to_json(report, labels, &buckets);
  } else {
    doc = secaps::metrics_to_json(report, labels);
  }
  std::cout << doc.dump(2) << '\n';
  return 0;
}

template <typename Scalar>
int run_predict(const std::string& checkpoint, const std::string& vocab_path,
                const std::string& labels_path, const std::string& input) {
  auto params = secaps::load_checkpoint<Scalar>(checkpoint);
  auto vocab = secaps::Vocabulary::load(vocab_path);
  auto labels = load_labels(labels_path);
  if (labels.size() != params.config.num_classes) {
    throw secaps::Error("predict: label file does not match the checkpoint");
  }
  std::ifstream file;
  std::istream* in = &std::cin;
  if (input != "-") {
    file.open(input, std::ios::binary);
    if (!file) throw secaps::Error("predict: cannot read " + input);
    in = &file;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(*in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    secaps::LabeledExample ex;
    std::string tok;
    while (tokens >> tok) ex.fact.push_back(tok);
    if (ex.fact.empty()) {
      throw secaps::ContractError("predict: line " + std::to_string(line_no) +
                                  " has no tokens");
    }
    auto ids = secaps::encode_example(ex, vocab, params.config.max_len);
    std::cout << labels[secaps::predict<Scalar>(ids, params, params.config)]
              << '\n';
  }
  return 0;
}

int run_gen_synth(const secaps::GenSpec& spec, const std::string& out_dir) {
  auto dataset = secaps::gen_synthetic(spec);
  fs::create_directories(out_dir);
  secaps::save_jsonl((fs::path(out_dir) / "train.jsonl").string(), dataset.train);
  secaps::save_jsonl((fs::path(out_dir) / "valid.jsonl").string(), dataset.valid);
  secaps::save_jsonl((fs::path(out_dir) / "test.jsonl").string(), dataset.test);
  std::cerr << "[gen-synth] wrote " << dataset.train.size() << " train / "
            << dataset.valid.size() << " valid / " << dataset.test.size()
            << " test examples across " << dataset.labels.size()
            << " classes to " << out_dir << '\n';
  std::cerr << "[gen-synth] train counts per class:";
  for (auto c : dataset.train_label_counts) std::cerr << ' ' << c;
  std::cerr << '\n';
  return 0;
}

int run_gradcheck(unsigned seeds) {
  auto results = secaps::run_gradient_suite(seeds);
  bool all_passed = true;
  for (const auto& r : results) {
    std::printf("[%s] %-24s max-rel-err %.3e (tol %.0e)\n",
                r.passed ? "ok" : "FAIL", r.name.c_str(), r.max_rel_error,
                r.tolerance);
    all_passed = all_passed && r.passed;
  }
  std::printf("%s\n", all_passed ? "gradcheck: all checks passed"
                                 : "gradcheck: FAILURES above");
  return all_passed ? 0 : 1;
}

template <typename Scalar>
int run_sweep(const std::string& param, std::size_t from, std::size_t to,
              std::size_t step, const ModelOptions& model_opts,
              const TrainOptions& train_opts, const DataOptions& data_opts,
              const std::string& out_csv) {
  if (param != "caps_num" && param != "caps_dim") {
    throw secaps::ContractError("sweep: --param must be caps_num or caps_dim");
  }
  if (to < from || step == 0) {
    throw secaps::ContractError("sweep: bad range");
  }
  auto dataset = load_dataset_dir(data_opts.data_dir);
  auto vocab =
      secaps::Vocabulary::build(dataset.train, data_opts.vocab_min_count);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_csv.empty()) {
    file.open(out_csv, std::ios::binary);
    if (!file) throw secaps::Error("sweep: cannot write " + out_csv);
    out = &file;
  }
  *out << "param,value,mp,mr,mf\n";
  for (std::size_t value = from; value <= to; value += step) {
    auto opts = model_opts;
    if (param == "caps_num") opts.caps_num1 = value;
    else opts.caps_dim1 = value;
    auto config = to_model_config(opts, vocab.size(), dataset.labels.size());
    auto result = secaps::train(dataset, vocab,
                                secaps::ModelParams<Scalar>::init(config),
                                to_train_config(train_opts));
    auto test_set =
        secaps::encode_split(dataset.test, dataset, vocab, config.max_len);
    auto report = secaps::evaluate_split(test_set, result.params, config);
    *out << param << ',' << value << ',' << report.macro_precision << ','
         << report.macro_recall << ',' << report.macro_f1 << '\n';
    std::cerr << "[sweep] " << param << '=' << value << " test-mf "
              << report.macro_f1 << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SECaps: sequence-enhanced capsule classifier"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default(true);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  ModelOptions model_opts;
  TrainOptions train_opts;
  DataOptions data_opts;
  std::string config_path;

  auto add_precision = [&](CLI::App* cmd) {
    cmd->add_option(dual_name("precision"), data_opts.precision,
                    "compute precision: float32 or float64")
        ->check(CLI::IsMember({"float32", "float64"}));
  };

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on JSONL splits");
  train_cmd->add_option(dual_name("config"), config_path, "key = value configuration file");
  add_model_options(train_cmd, model_opts);
  add_train_options(train_cmd, train_opts);
  train_cmd->add_option(dual_name("data"), data_opts.data_dir,
                        "directory with train/valid/test.jsonl")
      ->required();
  train_cmd->add_option(dual_name("out"), data_opts.out_dir, "output directory");
  train_cmd->add_option(dual_name("embeddings"), data_opts.embeddings_path,
                        "pretrained word2vec text embeddings");
  train_cmd->add_option(dual_name("vocab_min_count"), data_opts.vocab_min_count,
                        "vocabulary frequency cutoff");
  add_precision(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint, vocab_path, labels_path, split = "test";
  bool with_buckets = false;
  eval_cmd->add_option(dual_name("checkpoint"), checkpoint, "model checkpoint")->required();
  eval_cmd->add_option(dual_name("vocab"), vocab_path, "vocabulary file");
  eval_cmd->add_option(dual_name("labels"), labels_path, "label file");
  eval_cmd->add_option(dual_name("data"), data_opts.data_dir, "dataset directory")
      ->required();
  eval_cmd->add_option(dual_name("split"), split, "train, valid, or test")
      ->check(CLI::IsMember({"train", "valid", "test"}));
  eval_cmd->add_flag("--buckets", with_buckets,
                     "add frequency-bucket macro-F1 to the report");
  add_precision(eval_cmd);

  // predict
  auto* predict_cmd =
      app.add_subcommand("predict", "predict one label per input line");
  std::string input = "-";
  predict_cmd->add_option(dual_name("checkpoint"), checkpoint, "model checkpoint")
      ->required();
  predict_cmd->add_option(dual_name("vocab"), vocab_path, "vocabulary file");
  predict_cmd->add_option(dual_name("labels"), labels_path, "label file");
  predict_cmd->add_option(dual_name("input"), input,
                          "tokenized input file, '-' for stdin");
  add_precision(predict_cmd);

  // gen-synth
  auto* gen_cmd =
      app.add_subcommand("gen-synth", "generate a synthetic few-shot dataset");
  secaps::GenSpec gen_spec;
  std::string gen_out = "synth";
  gen_cmd->add_option(dual_name("num_classes"), gen_spec.num_classes, "class count");
  gen_cmd->add_option(dual_name("vocab_size"), gen_spec.vocab_size, "token inventory");
  gen_cmd->add_option(dual_name("zipf_exponent"), gen_spec.zipf_exponent,
                      "class imbalance exponent");
  gen_cmd->add_option(dual_name("train_size"), gen_spec.train_size, "train examples");
  gen_cmd->add_option(dual_name("seed"), gen_spec.seed, "generator seed");
  gen_cmd->add_option(dual_name("len_min"), gen_spec.length_range.first,
                      "minimum document length");
  gen_cmd->add_option(dual_name("len_max"), gen_spec.length_range.second,
                      "maximum document length");
  gen_cmd->add_option(dual_name("out"), gen_out, "output directory")->required();

  // gradcheck
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "run the finite-difference gradient suite");
  unsigned grad_seeds = 100;
  grad_cmd->add_option(dual_name("seeds"), grad_seeds, "seeded cases per op");

  // sweep
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "sweep layer-1 capsule count or dimension");
  sweep_cmd->add_option(dual_name("config"), config_path, "key = value configuration file");
  std::string sweep_param;
  std::size_t sweep_from = 7, sweep_to = 12, sweep_step = 1;
  std::string sweep_out;
  add_model_options(sweep_cmd, model_opts);
  add_train_options(sweep_cmd, train_opts);
  sweep_cmd->add_option(dual_name("param"), sweep_param, "caps_num or caps_dim")
      ->required()
      ->check(CLI::IsMember({"caps_num", "caps_dim"}));
  sweep_cmd->add_option(dual_name("from"), sweep_from, "first value")->required();
  sweep_cmd->add_option(dual_name("to"), sweep_to, "last value")->required();
  sweep_cmd->add_option(dual_name("step"), sweep_step, "value increment");
  sweep_cmd->add_option(dual_name("data"), data_opts.data_dir, "dataset directory")
      ->required();
  sweep_cmd->add_option(dual_name("out"), sweep_out, "CSV output path (default stdout)");
  sweep_cmd->add_option(dual_name("vocab_min_count"), data_opts.vocab_min_count,
                        "vocabulary frequency cutoff");
  add_precision(sweep_cmd);

  // Config-file handling: the file's entries become low-precedence
  // arguments injected right after the subcommand token, so explicit flags
  // (which come later and take-last wins) override the file, and the file
  // overrides defaults. Unknown keys are usage errors.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    std::string subcmd;
    std::size_t subcmd_pos = 0;
    std::string file_from_cli;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (subcmd.empty() && !args[i].empty() && args[i][0] != '-') {
        subcmd = args[i];
        subcmd_pos = i;
        continue;
      }
      if (args[i] == "--config" && i + 1 < args.size()) file_from_cli = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0)
        file_from_cli = args[i].substr(9);
    }
    if (!file_from_cli.empty()) {
      CLI::App* owner = app.get_subcommand_no_throw(subcmd);
      if (owner == nullptr) {
        std::cerr << "error: unknown subcommand '" << subcmd << "'\n";
        return 2;
      }
      std::vector<std::string> injected;
      for (const auto& [key, value] : parse_config_file(file_from_cli)) {
        if (key == "config" ||
            owner->get_option_no_throw("--" + key) == nullptr) {
          std::cerr << "error: config key '" << key << "' is not an option of '"
                    << subcmd << "'\n";
          return 2;
        }
        injected.push_back("--" + key + "=" + value);
      }
      args.insert(args.begin() + subcmd_pos + 1, injected.begin(), injected.end());
    }
  } catch (const secaps::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    std::vector<const char*> arg_ptrs{argv[0]};
    for (const auto& a : args) arg_ptrs.push_back(a.c_str());
    app.parse(static_cast<int>(arg_ptrs.size()),
              const_cast<char**>(arg_ptrs.data()));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n'
              << "run with --help for usage\n";
    return 2;
  }

  try {
    const bool use_float32 = data_opts.precision == "float32";
    if (train_cmd->parsed()) {
      log_resolved_config(train_cmd);
      return use_float32 ? run_train<float>(model_opts, train_opts, data_opts)
                         : run_train<double>(model_opts, train_opts, data_opts);
    }
    if (eval_cmd->parsed()) {
      log_resolved_config(eval_cmd);
      if (vocab_path.empty()) vocab_path = sibling(checkpoint, "vocab.txt");
      if (labels_path.empty()) labels_path = sibling(checkpoint, "labels.txt");
      return use_float32
                 ? run_eval<float>(checkpoint, vocab_path, labels_path,
                                   data_opts.data_dir, split, with_buckets)
                 : run_eval<double>(checkpoint, vocab_path, labels_path,
                                    data_opts.data_dir, split, with_buckets);
    }
    if (predict_cmd->parsed()) {
      log_resolved_config(predict_cmd);
      if (vocab_path.empty()) vocab_path = sibling(checkpoint, "vocab.txt");
      if (labels_path.empty()) labels_path = sibling(checkpoint, "labels.txt");
      return use_float32
                 ? run_predict<float>(checkpoint, vocab_path, labels_path, input)
                 : run_predict<double>(checkpoint, vocab_path, labels_path,
                                       input);
    }
    if (gen_cmd->parsed()) {
      log_resolved_config(gen_cmd);
      return run_gen_synth(gen_spec, gen_out);
    }
    if (grad_cmd->parsed()) {
      return run_gradcheck(grad_seeds);
    }
    if (sweep_cmd->parsed()) {
      log_resolved_config(sweep_cmd);
      return use_float32
                 ? run_sweep<float>(sweep_param, sweep_from, sweep_to, sweep_step,
                                    model_opts, train_opts, data_opts, sweep_out)
                 : run_sweep<double>(sweep_param, sweep_from, sweep_to,
                                     sweep_step, model_opts, train_opts,
                                     data_opts, sweep_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
