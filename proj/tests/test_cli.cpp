#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "json.hpp"

// Drives the installed binary end to end through every subcommand.

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("secaps_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& name = "") const {
    return name.empty() ? path.string() : (path / name).string();
  }
};

int run(const std::string& command_line, const std::string& stdout_path = "",
        const std::string& stderr_path = "/dev/null") {
  std::string full = std::string(SECAPS_CLI_PATH) + " " + command_line;
  if (!stdout_path.empty()) full += " > " + stdout_path;
  full += " 2> " + stderr_path;
  int status = std::system(full.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const char* kMicroModel =
    " --embed_dim 10 --max_len 16 --caps_num1 3 --caps_dim1 4 --routing1 2"
    " --hidden1 10 --caps_num2 2 --caps_dim2 4 --routing2 2 --hidden2 8"
    " --fc1_dim 16 --fc2_dim 8";

}  // namespace

TEST_CASE("gen-synth runs twice to identical files") {
  TempDir dir;
  const std::string flags =
      "gen-synth --num_classes 3 --vocab_size 90 --train_size 40 --seed 11"
      " --len_min 4 --len_max 8 --out ";
  REQUIRE(run(flags + dir.str("a")) == 0);
  REQUIRE(run(flags + dir.str("b")) == 0);
  for (const char* name : {"train.jsonl", "valid.jsonl", "test.jsonl"}) {
    auto a = slurp(dir.str("a") + "/" + name);
    REQUIRE_FALSE(a.empty());
    REQUIRE(a == slurp(dir.str("b") + "/" + name));
  }
}

TEST_CASE("gradcheck exits zero on a correct build") {
  TempDir dir;
  REQUIRE(run("gradcheck --seeds 3", dir.str("out.txt")) == 0);
  auto out = slurp(dir.str("out.txt"));
  REQUIRE(out.find("[ok] model_end_to_end") != std::string::npos);
  REQUIRE(out.find("FAIL") == std::string::npos);
}

TEST_CASE("train then eval reproduce the logged best-epoch metrics") {
  TempDir dir;
  REQUIRE(run("gen-synth --num_classes 3 --vocab_size 90 --train_size 48"
              " --seed 7 --len_min 4 --len_max 8 --out " +
              dir.str("data")) == 0);
  REQUIRE(run("train --data " + dir.str("data") + " --out " + dir.str("run") +
              kMicroModel + " --epochs 3 --batch_size 16 --seed 2",
              dir.str("train.json"), dir.str("train.log")) == 0);
  REQUIRE(fs::exists(dir.str("run") + "/model.ckpt"));
  REQUIRE(fs::exists(dir.str("run") + "/vocab.txt"));
  REQUIRE(fs::exists(dir.str("run") + "/labels.txt"));

  auto train_doc = nlohmann::json::parse(slurp(dir.str("run") + "/metrics.json"));
  REQUIRE(run("eval --checkpoint " + dir.str("run") + "/model.ckpt --data " +
              dir.str("data") + " --split test", dir.str("eval.json")) == 0);
  auto eval_doc = nlohmann::json::parse(slurp(dir.str("eval.json")));

  REQUIRE(eval_doc["accuracy"].get<double>() ==
          train_doc["test"]["accuracy"].get<double>());
  REQUIRE(eval_doc["macro_f1"].get<double>() ==
          train_doc["test"]["macro_f1"].get<double>());

  // The eval report carries every metrics key; --buckets adds the bucket map.
  for (const char* key :
       {"accuracy", "macro_precision", "macro_recall", "macro_f1", "per_class"}) {
    REQUIRE(eval_doc.contains(key));
  }
  REQUIRE(run("eval --checkpoint " + dir.str("run") + "/model.ckpt --data " +
              dir.str("data") + " --split test --buckets",
              dir.str("evalb.json")) == 0);
  auto bucket_doc = nlohmann::json::parse(slurp(dir.str("evalb.json")));
  REQUIRE(bucket_doc.contains("buckets"));
  REQUIRE(bucket_doc["buckets"].contains("low"));

  // predict emits one label per input line.
  {
    std::ofstream input(dir.str("input.txt"));
    input << "tok_30 tok_31 tok_32 tok_33\n";
    input << "tok_64 tok_65 tok_66\n";
  }
  REQUIRE(run("predict --checkpoint " + dir.str("run") + "/model.ckpt --input " +
              dir.str("input.txt"), dir.str("pred.txt")) == 0);
  std::istringstream pred(slurp(dir.str("pred.txt")));
  std::string line;
  int lines = 0;
  while (std::getline(pred, line)) {
    REQUIRE(line.rfind("charge_", 0) == 0);
    ++lines;
  }
  REQUIRE(lines == 2);
}

TEST_CASE("config file values apply with flag precedence over them") {
  TempDir dir;
  REQUIRE(run("gen-synth --num_classes 3 --vocab_size 90 --train_size 30"
              " --seed 3 --len_min 4 --len_max 8 --out " + dir.str("data")) == 0);
  {
    std::ofstream cfg(dir.str("run.cfg"));
    cfg << "# micro settings\n"
        << "embed_dim = 10\n"
        << "max_len = 16\n"
        << "caps_num1 = 3\ncaps_dim1 = 4\nrouting1 = 1\nhidden1 = 10\n"
        << "caps_num2 = 2\ncaps_dim2 = 4\nrouting2 = 1\nhidden2 = 8\n"
        << "fc1_dim = 16\nfc2_dim = 8\n"
        << "epochs = 7\nbatch_size = 16\n";
  }
  // --epochs 1 must beat the file's epochs = 7.
  REQUIRE(run("train --data " + dir.str("data") + " --out " + dir.str("run") +
              " --config " + dir.str("run.cfg") + " --epochs 1",
              dir.str("out.json"), dir.str("log.txt")) == 0);
  auto doc = nlohmann::json::parse(slurp(dir.str("out.json")));
  REQUIRE(doc["epochs"].size() == 1);
  auto log = slurp(dir.str("log.txt"));
  REQUIRE(log.find("[config]") != std::string::npos);
  REQUIRE(log.find("embed_dim=10") != std::string::npos);

  // Unknown config keys and unknown flags are usage errors.
  {
    std::ofstream cfg(dir.str("bad.cfg"));
    cfg << "not_a_real_key = 1\n";
  }
  REQUIRE(run("train --data " + dir.str("data") + " --config " +
              dir.str("bad.cfg")) == 2);
  REQUIRE(run("train --data " + dir.str("data") + " --definitely-not-a-flag") == 2);
  REQUIRE(run("frobnicate") == 2);
}

TEST_CASE("sweep emits the CSV header and one row per value") {
  TempDir dir;
  REQUIRE(run("gen-synth --num_classes 3 --vocab_size 90 --train_size 30"
              " --seed 5 --len_min 4 --len_max 8 --out " + dir.str("data")) == 0);
  REQUIRE(run("sweep --param caps_dim --from 3 --to 4 --data " + dir.str("data") +
              kMicroModel + " --epochs 1 --batch_size 16",
              dir.str("sweep.csv")) == 0);
  std::istringstream csv(slurp(dir.str("sweep.csv")));
  std::string line;
  REQUIRE(std::getline(csv, line));
  REQUIRE(line == "param,value,mp,mr,mf");
  int rows = 0;
  while (std::getline(csv, line)) {
    REQUIRE(line.rfind("caps_dim,", 0) == 0);
    ++rows;
  }
  REQUIRE(rows == 2);
}
