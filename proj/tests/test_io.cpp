#include <doctest.h>

#include <json.hpp>

#include "cogcn/error.hpp"
#include "cogcn/io.hpp"
#include "test_util.hpp"

using namespace cogcn;
using cogcn::testing::TempDir;

namespace {

TrainedModel sample_model(bool use_pre) {
  TrainedModel m;
  m.config.d = 3;
  m.config.z = 4;
  m.config.K = 2;
  m.config.C = 2;
  m.config.use_pre = use_pre;
  m.graph_kind = GraphKind::Temporal;
  m.gamma = 0.55;
  m.precision = Precision::Float64;
  m.class_names = {"ang", "neu"};
  m.standardizer.mean = Eigen::Vector3d(0.1, -2.0 / 3.0, 1e-300);
  m.standardizer.std = Eigen::Vector3d(1.0, 1e-8, 3.141592653589793);
  m.params = init_params<double>(m.config, 42);
  m.params.b_o << 1.0 / 3.0, -5e-17;
  return m;
}

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly") {
  for (bool use_pre : {true, false}) {
    const TrainedModel m = sample_model(use_pre);
    const std::string text = checkpoint_to_json(m);
    const TrainedModel back = checkpoint_from_json(text);
    CHECK(back.config == m.config);
    CHECK(back.graph_kind == m.graph_kind);
    CHECK(back.gamma == m.gamma);
    CHECK(back.precision == m.precision);
    CHECK(back.class_names == m.class_names);
    CHECK(back.standardizer.mean == m.standardizer.mean);
    CHECK(back.standardizer.std == m.standardizer.std);
    CHECK(back.params.W_p == m.params.W_p);
    CHECK(back.params.W_e[0] == m.params.W_e[0]);
    CHECK(back.params.W_e[1] == m.params.W_e[1]);
    CHECK(back.params.W_o == m.params.W_o);
    CHECK(back.params.b_o == m.params.b_o);
    CHECK(checkpoint_to_json(back) == text);

    const auto obj = nlohmann::json::parse(text);
    CHECK(obj["format_version"] == 1);
    CHECK(obj["params"].contains("W_p") == use_pre);
    CHECK(obj["params"]["W_e"].size() == 2);
  }
}

TEST_CASE("checkpoint rejects malformed documents") {
  const std::string good = checkpoint_to_json(sample_model(true));
  auto obj = nlohmann::json::parse(good);
  obj["format_version"] = 2;
  CHECK_THROWS_AS(checkpoint_from_json(obj.dump()), Error);
  obj = nlohmann::json::parse(good);
  obj["params"]["W_o"][0].erase(0);
  CHECK_THROWS_AS(checkpoint_from_json(obj.dump()), Error);
  obj = nlohmann::json::parse(good);
  obj["class_names"].push_back("extra");
  CHECK_THROWS_AS(checkpoint_from_json(obj.dump()), Error);
  CHECK_THROWS_AS(checkpoint_from_json("{"), Error);
}

TEST_CASE("history and metrics formats") {
  const std::vector<EpochRecord> history{{1, 0.5, 0.25, 0.125}, {2, 0.1, 1.0, 1.0}};
  CHECK(history_to_csv(history) == "epoch,train_loss,val_wa,val_ua\n1,0.5,0.25,0.125\n2,0.1,1,1\n");

  CvResult cv;
  FoldResult f;
  f.test_speaker = "spk00";
  f.val_speaker = "spk01";
  f.metrics = Metrics::from_predictions(2, {0, 1}, {0, 0});
  f.selected_K = 3;
  f.selected_gamma = 0.55;
  cv.folds.push_back(f);
  f.test_speaker = "spk01";
  f.selected_gamma.reset();
  cv.folds.push_back(f);
  cv.mean_wa = 0.5;
  cv.mean_ua = 0.5;
  const auto obj = nlohmann::json::parse(cv_metrics_to_json(cv, {"a", "b"}));
  CHECK(obj["folds"].size() == 2);
  CHECK(obj["folds"][0]["speaker"] == "spk00");
  CHECK(obj["folds"][0]["selected_K"] == 3);
  CHECK(obj["folds"][0]["selected_gamma"] == 0.55);
  CHECK(obj["folds"][1]["selected_gamma"].is_null());
  CHECK(obj["folds"][0]["confusion"] == nlohmann::json::parse("[[1,0],[1,0]]"));
  CHECK(obj["mean_ua"] == 0.5);
  CHECK(obj["class_names"] == nlohmann::json::parse(R"(["a","b"])"));

  const auto single = nlohmann::json::parse(metrics_to_json(f.metrics, {"a", "b"}));
  CHECK(single["n"] == 2);
  CHECK(single["wa"] == 0.5);
}

TEST_CASE("format_double is shortest round-trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  const double third = 1.0 / 3.0;
  CHECK(std::stod(format_double(third)) == third);
}

TEST_CASE("atomic writes replace whole files") {
  TempDir dir("io");
  write_file_atomic(dir / "a/b.txt", "first");
  write_file_atomic(dir / "a/b.txt", "second");
  CHECK(read_file(dir / "a/b.txt") == "second");
  CHECK_FALSE(std::filesystem::exists(dir / "a/b.txt.tmp"));
  CHECK_THROWS_AS(read_file(dir / "missing"), Error);
}
