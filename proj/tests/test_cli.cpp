#include <doctest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "test_util.hpp"

namespace fs = std::filesystem;
using cogcn::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const TempDir& tmp, const std::string& args, const std::string& env = "") {
  const fs::path out = tmp / "stdout.txt";
  const fs::path err = tmp / "stderr.txt";
  const std::string cmd =
      env + " '" COGCN_CLI_PATH "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json") {
      files[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
  }
  return files;
}

const std::string kSmall = "--classes 4 --speakers 3 --utts 8 --frames-lo 5 --frames-hi 9 --dim 6 ";

}  // namespace

TEST_CASE("cli diag params") {
  TempDir tmp("cli_params");
  Run r = cli(tmp, "diag params --d 88 --z 128 --k 2 --c 4");
  CHECK(r.code == 0);
  CHECK(r.out == "44676\n");
  r = cli(tmp, "diag params --d 88 --z 128 --k 3 --c 4 --no-skip --no-pre");
  CHECK(r.code == 0);
  CHECK(r.out == "44548\n");
  r = cli(tmp, "diag params --d 0");
  CHECK(r.code == 1);
}

TEST_CASE("cli diag gradcheck") {
  TempDir tmp("cli_gradcheck");
  const Run r = cli(tmp, "diag gradcheck --seed 5 --trials 3");
  CHECK(r.code == 0);
  CHECK(r.out.find("max_rel_error") != std::string::npos);
}

TEST_CASE("cli usage errors") {
  TempDir tmp("cli_usage");
  CHECK(cli(tmp, "").code == 1);
  CHECK(cli(tmp, "frobnicate").code == 1);
  CHECK(cli(tmp, "train --data x").code == 1);
  CHECK(cli(tmp, "train --data x -o y --graph ring").code == 1);
}

TEST_CASE("cli synth writes the expected corpus deterministically") {
  TempDir tmp("cli_synth");
  const std::string a = (tmp / "a").string(), b = (tmp / "b").string();
  Run r = cli(tmp, "synth --classes 4 --speakers 8 --utts 20 --noise 0.3 --seed 7 --dim 8 -o " + a);
  REQUIRE(r.code == 0);
  std::ifstream manifest(fs::path(a) / "manifest.jsonl");
  int lines = 0;
  for (std::string line; std::getline(manifest, line);) lines += !line.empty();
  CHECK(lines == 160);
  CHECK(fs::exists(fs::path(a) / "run_manifest.json"));
  const auto rm = nlohmann::json::parse(slurp(fs::path(a) / "run_manifest.json"));
  CHECK(rm["seed"] == 7);
  CHECK(rm.contains("tool_version"));

  REQUIRE(cli(tmp, "synth --classes 4 --speakers 8 --utts 20 --noise 0.3 --seed 7 --dim 8 -o " + b).code == 0);
  CHECK(tree(a) == tree(b));

  r = cli(tmp, "synth --classes 4 --speakers 8 --utts 20 --seed 7 --dim 8 -o " + a);
  CHECK(r.code == 1);
  CHECK(r.err.find("--force") != std::string::npos);
  CHECK(cli(tmp, "synth --classes 4 --speakers 8 --utts 20 --noise 0.3 --seed 7 --dim 8 --force -o " + a).code == 0);
  CHECK(tree(a) == tree(b));

  r = cli(tmp, "synth --speakers 1 -o " + (tmp / "c").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("speaker") != std::string::npos);
}

TEST_CASE("cli seed falls back to the environment") {
  TempDir tmp("cli_env");
  const std::string a = (tmp / "a").string(), b = (tmp / "b").string();
  REQUIRE(cli(tmp, "synth " + kSmall + "-o " + a, "COGCN_SEED=13").code == 0);
  REQUIRE(cli(tmp, "synth " + kSmall + "--seed 13 -o " + b).code == 0);
  CHECK(tree(a) == tree(b));
  CHECK(cli(tmp, "synth " + kSmall + "-o " + (tmp / "c").string(), "COGCN_SEED=abc").code == 1);
}

TEST_CASE("cli graph export") {
  TempDir tmp("cli_graph");
  const std::string data = (tmp / "data").string();
  REQUIRE(cli(tmp, "synth " + kSmall + "--seed 3 -o " + data).code == 0);

  Run r = cli(tmp, "graph --data " + data + " --utt u0 --temporal -o " + (tmp / "g").string());
  REQUIRE(r.code == 0);
  const auto chain = nlohmann::json::parse(slurp(tmp / "g" / "u0.json"));
  const int n = chain["n"];
  CHECK(chain["edges"].size() == static_cast<size_t>(n - 1));
  CHECK(slurp(tmp / "g" / "u0.dot").rfind("graph G {", 0) == 0);
  CHECK(fs::exists(tmp / "g" / "u0_features.csv"));

  size_t prev = SIZE_MAX;
  for (const char* gamma : {"0.0", "0.3", "0.6", "0.9"}) {
    const fs::path dir = tmp / (std::string("c") + gamma);
    REQUIRE(cli(tmp, "graph --data " + data + " --utt u2 --standardize --gamma " + gamma + " -o " + dir.string()).code ==
            0);
    const size_t edges = nlohmann::json::parse(slurp(dir / "u2.json"))["edges"].size();
    CHECK(edges <= prev);
    prev = edges;
  }

  r = cli(tmp, "graph --data " + data + " --utt nope -o " + (tmp / "x").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("u0") != std::string::npos);
  CHECK(r.err.find("u23") != std::string::npos);
}

TEST_CASE("cli train then eval") {
  TempDir tmp("cli_train");
  const std::string data = (tmp / "data").string();
  const std::string run = (tmp / "run").string();
  REQUIRE(cli(tmp, "synth " + kSmall + "--seed 4 -o " + data).code == 0);
  Run r = cli(tmp, "train --data " + data + " --gamma 0.5 --k 2 --hidden 8 --epochs 3 --batch 8 --lr 0.01 --json -o " +
                        run);
  REQUIRE(r.code == 0);
  const auto metrics = nlohmann::json::parse(r.out);
  CHECK(metrics["folds"].size() == 3);
  CHECK(slurp(fs::path(run) / "metrics.json") == r.out);
  CHECK(fs::exists(fs::path(run) / "run_manifest.json"));
  const auto rm = nlohmann::json::parse(slurp(fs::path(run) / "run_manifest.json"));
  CHECK(rm["config"]["z"] == 8);
  CHECK(rm["config"]["graph_kind"] == "cosine");

  const std::string ckpt = (fs::path(run) / "fold_spk00" / "checkpoint.json").string();
  r = cli(tmp, "eval --checkpoint " + ckpt + " --data " + data + " --speaker spk00 --json");
  REQUIRE(r.code == 0);
  const auto ev = nlohmann::json::parse(r.out);
  CHECK(ev["wa"].get<double>() == doctest::Approx(metrics["folds"][0]["wa"].get<double>()).epsilon(1e-12));
  CHECK(ev["n"] == 8);

  const std::string other = (tmp / "other").string();
  REQUIRE(cli(tmp, "synth --classes 3 --speakers 3 --utts 6 --dim 6 -o " + other).code == 0);
  r = cli(tmp, "eval --checkpoint " + ckpt + " --data " + other + " --json");
  CHECK(r.code == 2);
  CHECK(r.err.find("class") != std::string::npos);

  r = cli(tmp, "train --data " + data + " --holdout spk01 --gamma 0.5 --k 2 --hidden 8 --epochs 2 --batch 8 -o " +
                   (tmp / "hold").string());
  CHECK(r.code == 0);
  CHECK(fs::exists(tmp / "hold" / "fold_spk01" / "checkpoint.json"));
}
