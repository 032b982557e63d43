#include <doctest.h>

#include <cmath>
#include <fstream>

#include "cogcn/error.hpp"
#include "cogcn/features.hpp"
#include "test_util.hpp"

using namespace cogcn;
using cogcn::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

std::string feature_csv(int rows, int d, double base = 0.5) {
  std::string out = "frame_index";
  for (int j = 0; j < d; ++j) out += ",f" + std::to_string(j);
  out += "\n";
  for (int i = 0; i < rows; ++i) {
    out += std::to_string(i);
    for (int j = 0; j < d; ++j) out += "," + std::to_string(base + i + 0.01 * j);
    out += "\n";
  }
  return out;
}

std::string manifest_line(const std::string& id, const std::string& path, const std::string& label,
                          const std::string& speaker) {
  return R"({"id": ")" + id + R"(", "path": ")" + path + R"(", "label": ")" + label + R"(", "speaker": ")" +
         speaker + R"(", "session": "s1"})" + "\n";
}

std::string load_error(const std::filesystem::path& manifest) {
  try {
    load_dataset(manifest);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

Dataset frames_dataset(const std::vector<std::vector<double>>& frames) {
  Dataset ds;
  ds.d = static_cast<int>(frames[0].size());
  ds.C = 2;
  ds.class_names = {"a", "b"};
  ds.speakers = {"s"};
  Utterance u;
  u.id = "u0";
  u.speaker = "s";
  u.features.resize(static_cast<Eigen::Index>(frames.size()), ds.d);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (int j = 0; j < ds.d; ++j) u.features(static_cast<Eigen::Index>(i), j) = frames[i][j];
  }
  ds.utterances.push_back(u);
  return ds;
}

}  // namespace

TEST_CASE("load_dataset infers d and count") {
  TempDir dir("load");
  write_text(dir / "f/a.csv", feature_csv(5, 88));
  write_text(dir / "f/b.csv", feature_csv(7, 88));
  write_text(dir / "manifest.jsonl",
             manifest_line("a", "f/a.csv", "neu", "spk1") + manifest_line("b", "f/b.csv", "ang", "spk2"));
  const Dataset ds = load_dataset(dir / "manifest.jsonl");
  CHECK(ds.d == 88);
  CHECK(ds.size() == 2);
  CHECK(ds.utterances[0].features.rows() == 5);
  CHECK(ds.utterances[1].features.rows() == 7);
  // class ids follow sorted label names
  CHECK(ds.class_names == std::vector<std::string>{"ang", "neu"});
  CHECK(ds.utterances[0].label == 1);
  CHECK(ds.utterances[1].label == 0);
  CHECK(ds.speakers.size() == 2);
  CHECK(ds.utterances[0].session == "s1");
}

TEST_CASE("load_dataset rejects malformed inputs") {
  TempDir dir("bad");
  SUBCASE("non-finite value") {
    write_text(dir / "a.csv", "frame_index,f0,f1\n0,1.0,NaN\n");
    write_text(dir / "m.jsonl", manifest_line("a", "a.csv", "x", "s"));
    CHECK(load_error(dir / "m.jsonl").find("non-finite feature value") != std::string::npos);
  }
  SUBCASE("empty utterance") {
    write_text(dir / "a.csv", "frame_index,f0,f1\n");
    write_text(dir / "m.jsonl", manifest_line("a", "a.csv", "x", "s"));
    CHECK(load_error(dir / "m.jsonl").find("empty utterance") != std::string::npos);
  }
  SUBCASE("ragged rows") {
    write_text(dir / "a.csv", "frame_index,f0,f1\n0,1,2\n1,3\n");
    write_text(dir / "m.jsonl", manifest_line("a", "a.csv", "x", "s"));
    const std::string err = load_error(dir / "m.jsonl");
    CHECK(err.find("ragged row") != std::string::npos);
    CHECK(err.find("a.csv:3") != std::string::npos);
  }
  SUBCASE("missing feature file") {
    write_text(dir / "m.jsonl", manifest_line("a", "nope.csv", "x", "s"));
    CHECK(load_error(dir / "m.jsonl").find("cannot open feature file") != std::string::npos);
  }
  SUBCASE("missing manifest") { CHECK_THROWS_AS(load_dataset(dir / "absent.jsonl"), Error); }
  SUBCASE("dimension mismatch across utterances") {
    write_text(dir / "a.csv", feature_csv(2, 3));
    write_text(dir / "b.csv", feature_csv(2, 4));
    write_text(dir / "m.jsonl", manifest_line("a", "a.csv", "x", "s") + manifest_line("b", "b.csv", "x", "s"));
    CHECK(load_error(dir / "m.jsonl").find("dimension mismatch") != std::string::npos);
  }
  SUBCASE("unknown label against a fixed class list") {
    write_text(dir / "a.csv", feature_csv(2, 3));
    write_text(dir / "m.jsonl", manifest_line("a", "a.csv", "happy", "s"));
    CHECK_THROWS_WITH_AS(load_dataset(dir / "m.jsonl", std::vector<std::string>{"ang", "neu"}),
                         doctest::Contains("unknown label string"), Error);
  }
  SUBCASE("non-sequential frame index") {
    write_text(dir / "a.csv", "frame_index,f0\n0,1\n2,3\n");
    write_text(dir / "m.jsonl", manifest_line("a", "a.csv", "x", "s"));
    CHECK(load_error(dir / "m.jsonl").find("frame_index") != std::string::npos);
  }
  SUBCASE("duplicate ids") {
    write_text(dir / "a.csv", feature_csv(2, 3));
    write_text(dir / "m.jsonl", manifest_line("a", "a.csv", "x", "s") + manifest_line("a", "a.csv", "x", "s"));
    CHECK(load_error(dir / "m.jsonl").find("duplicate") != std::string::npos);
  }
}

TEST_CASE("fit_standardizer two-point and degenerate cases") {
  const Dataset ds = frames_dataset({{0, 2}, {2, 2}});
  const auto stats = fit_standardizer(ds, {"u0"});
  CHECK(stats.mean[0] == doctest::Approx(1.0));
  CHECK(stats.mean[1] == doctest::Approx(2.0));
  CHECK(stats.std[0] == doctest::Approx(1.0));
  CHECK(stats.std[1] == kStdFloor);

  const auto single = fit_standardizer(frames_dataset({{5}}), {"u0"});
  CHECK(single.mean[0] == 5.0);
  CHECK(single.std[0] == kStdFloor);

  CHECK_THROWS_AS(fit_standardizer(ds, {}), Error);
}

TEST_CASE("apply_standardizer z-scores the fitting set") {
  SynthSpec spec;
  spec.d = 6;
  spec.n_speakers = 2;
  spec.utt_per_speaker = 3;
  spec.seed = 3;
  const Dataset ds = synth_dataset(spec);
  std::set<std::string> ids;
  for (const auto& u : ds.utterances) ids.insert(u.id);
  const Dataset z = apply_standardizer(ds, fit_standardizer(ds, ids));

  long frames = 0;
  for (const auto& u : z.utterances) frames += u.features.rows();
  FeatureMatrix all(frames, ds.d);
  long row = 0;
  for (const auto& u : z.utterances) {
    all.middleRows(row, u.features.rows()) = u.features;
    row += u.features.rows();
  }
  const Eigen::VectorXd mean = all.colwise().mean();
  const Eigen::VectorXd var = (all.rowwise() - mean.transpose()).array().square().colwise().mean();
  for (int j = 0; j < ds.d; ++j) {
    CHECK(std::abs(mean[j]) < 1e-9);
    CHECK(std::abs(std::sqrt(var[j]) - 1.0) < 1e-6);
  }
  // labels and metadata untouched
  CHECK(z.utterances[4].label == ds.utterances[4].label);
  CHECK(z.utterances[4].speaker == ds.utterances[4].speaker);
}

TEST_CASE("apply_standardizer identity and mismatch") {
  const Dataset ds = frames_dataset({{1.5, -2}, {3, 4}});
  StandardizeStats identity{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)};
  CHECK(apply_standardizer(ds, identity).utterances[0].features == ds.utterances[0].features);
  StandardizeStats wrong{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)};
  CHECK_THROWS_AS(apply_standardizer(ds, wrong), Error);
}

TEST_CASE("synth_dataset is a pure function of its spec") {
  SynthSpec spec;
  spec.d = 8;
  spec.seed = 7;
  const Dataset a = synth_dataset(spec);
  const Dataset b = synth_dataset(spec);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() == static_cast<std::size_t>(spec.n_speakers * spec.utt_per_speaker));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.utterances[i].id == b.utterances[i].id);
    CHECK(format_feature_csv(a.utterances[i].features) == format_feature_csv(b.utterances[i].features));
  }
  spec.seed = 8;
  CHECK(format_feature_csv(synth_dataset(spec).utterances[0].features) !=
        format_feature_csv(a.utterances[0].features));
}

TEST_CASE("synth_dataset frame counts and noise fraction") {
  SynthSpec spec;
  spec.d = 4;
  spec.frames_lo = 5;
  spec.frames_hi = 9;
  const Dataset ds = synth_dataset(spec);
  for (const auto& u : ds.utterances) {
    CHECK(u.features.rows() >= 5);
    CHECK(u.features.rows() <= 9);
  }
  validate_dataset(ds);
}

TEST_CASE("synth_dataset without noise is separable by a nearest-centroid oracle") {
  SynthSpec spec;
  spec.d = 16;
  spec.noise_frac = 0.0;
  spec.cluster_sep = 8.0;
  spec.seed = 11;
  const Dataset ds = synth_dataset(spec);

  std::vector<Eigen::VectorXd> centroid(ds.C, Eigen::VectorXd::Zero(ds.d));
  std::vector<int> count(ds.C, 0);
  std::vector<Eigen::VectorXd> means;
  for (const auto& u : ds.utterances) {
    means.push_back(u.features.colwise().mean().transpose());
    centroid[u.label] += means.back();
    ++count[u.label];
  }
  for (int c = 0; c < ds.C; ++c) centroid[c] /= count[c];

  int correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    int best = 0;
    for (int c = 1; c < ds.C; ++c) {
      if ((means[i] - centroid[c]).squaredNorm() < (means[i] - centroid[best]).squaredNorm()) best = c;
    }
    correct += best == ds.utterances[i].label;
  }
  CHECK(correct == static_cast<int>(ds.size()));
}

TEST_CASE("synth_dataset validates its spec") {
  SynthSpec spec;
  spec.n_speakers = 1;
  CHECK_THROWS_WITH_AS(synth_dataset(spec), doctest::Contains("leave-one-speaker-out"), Error);
  spec = SynthSpec{};
  spec.noise_frac = 1.0;
  CHECK_THROWS_AS(synth_dataset(spec), Error);
  spec = SynthSpec{};
  spec.frames_lo = 1;
  CHECK_THROWS_AS(synth_dataset(spec), Error);
  spec = SynthSpec{};
  spec.n_classes = 1;
  CHECK_THROWS_AS(synth_dataset(spec), Error);
}

TEST_CASE("save then load round-trips a synthetic dataset exactly") {
  SynthSpec spec;
  spec.d = 5;
  spec.n_speakers = 3;
  spec.utt_per_speaker = 4;
  spec.seed = 21;
  const Dataset ds = synth_dataset(spec);
  TempDir dir("roundtrip");
  save_dataset(ds, dir.path());
  const Dataset back = load_dataset(dir / "manifest.jsonl");
  CHECK(back.d == ds.d);
  CHECK(back.C == ds.C);
  CHECK(back.class_names == ds.class_names);
  CHECK(back.speakers == ds.speakers);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& x = ds.utterances[i];
    const auto& y = back.utterances[i];
    CHECK(x.id == y.id);
    CHECK(x.label == y.label);
    CHECK(x.speaker == y.speaker);
    CHECK(x.session == y.session);
    CHECK(x.features == y.features);  // bit-exact
  }
}
