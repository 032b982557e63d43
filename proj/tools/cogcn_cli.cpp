// Command-line front end. Talks to the library exclusively through the C API.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cogcn/cogcn.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kVerification = 3 };

struct CliError {
  int code;
  std::string message;
};

int exit_code_for(cogcn_status status) {
  switch (status) {
    case COGCN_OK:
      return kOk;
    case COGCN_ERR_USAGE:
      return kUsage;
    case COGCN_ERR_VERIFICATION:
      return kVerification;
    default:
      return kData;
  }
}

void check(cogcn_status status) {
  if (status != COGCN_OK) throw CliError{exit_code_for(status), cogcn_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using DatasetPtr = std::unique_ptr<cogcn_dataset, Deleter<cogcn_dataset, cogcn_dataset_free>>;
using GraphPtr = std::unique_ptr<cogcn_graph, Deleter<cogcn_graph, cogcn_graph_free>>;
using MetricsPtr = std::unique_ptr<cogcn_metrics, Deleter<cogcn_metrics, cogcn_metrics_free>>;
using ModelPtr = std::unique_ptr<cogcn_model, Deleter<cogcn_model, cogcn_model_free>>;

void log(const std::string& line) { std::cerr << "[cogcn] " << line << '\n'; }

std::string metrics_json(const cogcn_metrics* m) {
  char* raw = nullptr;
  check(cogcn_metrics_json(m, &raw));
  std::string text(raw);
  cogcn_string_free(raw);
  return text;
}

void write_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CliError{kData, "cannot write " + tmp.string()};
    out << contents;
  }
  fs::rename(tmp, path);
}

DatasetPtr load(const std::string& path) {
  fs::path manifest = path;
  if (fs::is_directory(manifest)) manifest /= "manifest.jsonl";
  cogcn_dataset* ds = nullptr;
  check(cogcn_dataset_load(manifest.string().c_str(), &ds));
  return DatasetPtr(ds);
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("COGCN_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw CliError{kUsage, std::string("COGCN_SEED is not an unsigned integer: ") + env};
    }
  }
  return 0;
}

/// Replay record written next to every output; the only place timestamps live.
class RunManifest {
 public:
  RunManifest(int argc, char** argv) : start_(std::chrono::steady_clock::now()) {
    std::string cmd;
    for (int i = 0; i < argc; ++i) cmd += (i ? " " : "") + std::string(argv[i]);
    doc_["command"] = cmd;
    doc_["tool_version"] = cogcn_version();
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    doc_["started_at"] = buf;
  }

  json& operator[](const char* key) { return doc_[key]; }

  void write(const fs::path& dir) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    doc_["wall_clock_seconds"] = secs;
    write_atomic(dir / "run_manifest.json", doc_.dump(2) + "\n");
  }

 private:
  std::chrono::steady_clock::time_point start_;
  json doc_;
};

struct SynthArgs {
  cogcn_synth_spec spec{};
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

int run_synth(SynthArgs& a, RunManifest& manifest) {
  a.spec.seed = a.seed.value_or(default_seed());
  if (fs::exists(a.out) && !fs::is_empty(a.out) && !a.force) {
    throw CliError{kUsage, "output directory " + a.out + " is not empty (use --force to overwrite)"};
  }
  cogcn_dataset* raw = nullptr;
  check(cogcn_dataset_synth(&a.spec, &raw));
  DatasetPtr ds(raw);
  check(cogcn_dataset_save(ds.get(), a.out.c_str()));
  log("wrote " + std::to_string(cogcn_dataset_size(ds.get())) + " utterances to " + a.out);

  manifest["seed"] = a.spec.seed;
  manifest["config"] = {{"n_classes", a.spec.n_classes},   {"n_speakers", a.spec.n_speakers},
                        {"utt_per_speaker", a.spec.utt_per_speaker}, {"frames_lo", a.spec.frames_lo},
                        {"frames_hi", a.spec.frames_hi},   {"d", a.spec.d},
                        {"noise_frac", a.spec.noise_frac}, {"cluster_sep", a.spec.cluster_sep},
                        {"seed", a.spec.seed}};
  manifest["inputs"] = json::array();
  manifest["outputs"] = {a.out};
  manifest.write(a.out);
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string graph = "cosine";
  std::vector<double> gammas;
  std::vector<int> ks;
  int hidden = 128;
  double lr = 1e-3;
  int epochs = 50;
  int batch = 32;
  double dropout = 0.1;
  bool no_pre = false;
  bool no_skip = false;
  bool no_self = false;
  std::string precision = "float32";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string holdout;
  std::string out;
  bool json_out = false;
};

int run_train(TrainArgs& a, RunManifest& manifest) {
  DatasetPtr ds = load(a.data);
  cogcn_train_options opts;
  cogcn_train_options_default(&opts);
  opts.hidden = a.hidden;
  opts.lr = a.lr;
  opts.epochs = a.epochs;
  opts.batch_size = a.batch;
  opts.dropout = a.dropout;
  opts.use_pre = !a.no_pre;
  opts.use_skip = !a.no_skip;
  opts.self_in_aggregation = !a.no_self;
  opts.seed = a.seed.value_or(default_seed());
  opts.jobs = a.jobs;
  opts.graph_kind = a.graph == "temporal" ? COGCN_GRAPH_TEMPORAL : COGCN_GRAPH_COSINE;
  opts.precision = a.precision == "float64" ? COGCN_FLOAT64 : COGCN_FLOAT32;
  std::vector<double> gammas = a.gammas.empty() ? std::vector<double>(opts.gamma_grid, opts.gamma_grid + opts.gamma_grid_len)
                                                : a.gammas;
  std::vector<int> ks = a.ks.empty() ? std::vector<int>(opts.k_grid, opts.k_grid + opts.k_grid_len) : a.ks;
  opts.gamma_grid = gammas.data();
  opts.gamma_grid_len = gammas.size();
  opts.k_grid = ks.data();
  opts.k_grid_len = ks.size();

  log(std::string(a.holdout.empty() ? "leave-one-speaker-out" : "holdout " + a.holdout) + " on " +
      std::to_string(cogcn_dataset_size(ds.get())) + " utterances, " + a.graph + " graph");
  cogcn_metrics* raw = nullptr;
  if (a.holdout.empty()) {
    check(cogcn_run_loso(ds.get(), &opts, a.out.c_str(), &raw));
  } else {
    check(cogcn_run_holdout(ds.get(), &opts, a.holdout.c_str(), a.out.c_str(), &raw));
  }
  MetricsPtr metrics(raw);
  if (a.json_out) {
    std::cout << metrics_json(metrics.get());
  } else {
    std::cout << "mean_wa " << cogcn_metrics_wa(metrics.get()) << "\nmean_ua " << cogcn_metrics_ua(metrics.get())
              << "\n";
  }

  manifest["seed"] = opts.seed;
  manifest["config"] = {{"graph_kind", a.graph},  {"gamma_grid", gammas},      {"K_grid", ks},
                        {"z", a.hidden},          {"lr", a.lr},                {"epochs", a.epochs},
                        {"batch_size", a.batch},  {"dropout_p", a.dropout},    {"use_pre", !a.no_pre},
                        {"use_skip", !a.no_skip}, {"self_in_aggregation", !a.no_self},
                        {"adam_beta1", opts.adam_beta1}, {"adam_beta2", opts.adam_beta2},
                        {"adam_eps", opts.adam_eps}, {"precision", a.precision}, {"seed", opts.seed},
                        {"holdout", a.holdout.empty() ? json(nullptr) : json(a.holdout)}, {"jobs", a.jobs}};
  manifest["inputs"] = {a.data};
  manifest["outputs"] = {(fs::path(a.out) / "metrics.json").string()};
  manifest.write(a.out);
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string speaker;
  std::string out;
  bool json_out = false;
};

int run_eval(EvalArgs& a, RunManifest& manifest) {
  DatasetPtr ds = load(a.data);
  cogcn_model* model_raw = nullptr;
  check(cogcn_model_load(a.checkpoint.c_str(), &model_raw));
  ModelPtr model(model_raw);
  cogcn_metrics* raw = nullptr;
  check(cogcn_evaluate(model.get(), ds.get(), a.speaker.empty() ? nullptr : a.speaker.c_str(), &raw));
  MetricsPtr metrics(raw);
  const std::string text = metrics_json(metrics.get());
  if (a.json_out) {
    std::cout << text;
  } else {
    const json obj = json::parse(text);
    std::cout << "wa " << obj["wa"].get<double>() << "\nua " << obj["ua"].get<double>() << "\nconfusion "
              << obj["confusion"].dump() << "\n";
  }
  if (!a.out.empty()) {
    write_atomic(a.out, text);
    manifest["config"] = {{"checkpoint", a.checkpoint}, {"speaker", a.speaker}};
    manifest["inputs"] = {a.checkpoint, a.data};
    manifest["outputs"] = {a.out};
    manifest.write(fs::path(a.out).parent_path().empty() ? fs::path(".") : fs::path(a.out).parent_path());
  }
  return kOk;
}

struct GraphArgs {
  std::string data;
  std::string utt;
  double gamma = 0.5;
  bool temporal = false;
  bool standardize = false;
  std::string out = ".";
};

int run_graph(GraphArgs& a, RunManifest& manifest) {
  DatasetPtr ds = load(a.data);
  size_t index = 0;
  if (cogcn_dataset_find(ds.get(), a.utt.c_str(), &index) != COGCN_OK) {
    std::string ids;
    for (size_t i = 0; i < cogcn_dataset_size(ds.get()); ++i) {
      ids += (i ? ", " : "") + std::string(cogcn_dataset_utterance_id(ds.get(), i));
    }
    throw CliError{kData, "unknown utterance id '" + a.utt + "'; available ids: " + ids};
  }
  if (a.standardize) {
    cogcn_dataset* z = nullptr;
    check(cogcn_dataset_standardize(ds.get(), &z));
    ds.reset(z);
  }
  cogcn_graph* raw = nullptr;
  check(cogcn_graph_build(ds.get(), index, a.temporal ? COGCN_GRAPH_TEMPORAL : COGCN_GRAPH_COSINE, a.gamma, &raw));
  GraphPtr g(raw);

  const fs::path dir = a.out;
  fs::create_directories(dir);
  const std::string stem = (dir / a.utt).string();
  check(cogcn_graph_write_dot(g.get(), (stem + ".dot").c_str()));
  check(cogcn_graph_write_json(g.get(), (stem + ".json").c_str()));
  check(cogcn_graph_write_features(g.get(), (stem + "_features.csv").c_str()));
  std::cout << "nodes " << cogcn_graph_num_nodes(g.get()) << "\nedges " << cogcn_graph_num_edges(g.get()) << "\n";

  manifest["config"] = {{"utt", a.utt}, {"gamma", a.gamma}, {"temporal", a.temporal}, {"standardize", a.standardize}};
  manifest["inputs"] = {a.data};
  manifest["outputs"] = {stem + ".dot", stem + ".json", stem + "_features.csv"};
  manifest.write(dir);
  return kOk;
}

struct ParamsArgs {
  int d = 88, z = 128, k = 2, c = 4;
  bool no_pre = false, no_skip = false;
};

int run_params(const ParamsArgs& a) {
  std::uint64_t count = 0;
  check(cogcn_param_count(a.d, a.z, a.k, a.c, !a.no_pre, !a.no_skip, &count));
  std::cout << count << "\n";
  return kOk;
}

struct GradcheckArgs {
  std::optional<std::uint64_t> seed;
  int trials = 20;
};

int run_gradcheck(const GradcheckArgs& a) {
  double max_err = 0.0;
  size_t checked = 0, skipped = 0;
  const cogcn_status status = cogcn_gradcheck(a.seed.value_or(default_seed()), a.trials, &max_err, &checked, &skipped);
  if (status != COGCN_OK && status != COGCN_ERR_VERIFICATION) check(status);
  std::cout << "max_rel_error " << max_err << "\nchecked " << checked << "\nskipped_at_kinks " << skipped << "\n";
  if (status == COGCN_ERR_VERIFICATION) {
    log(cogcn_last_error());
    return kVerification;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cogcn: cosine-similarity graph convolutional classifier for frame-level features"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cogcn_version()));

  SynthArgs synth;
  cogcn_synth_spec_default(&synth.spec);
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic voice/vacuum frame corpus");
  synth_cmd->add_option("--classes", synth.spec.n_classes, "Number of classes")->capture_default_str();
  synth_cmd->add_option("--speakers", synth.spec.n_speakers, "Number of speakers")->capture_default_str();
  synth_cmd->add_option("--utts", synth.spec.utt_per_speaker, "Utterances per speaker")->capture_default_str();
  synth_cmd->add_option("--frames-lo", synth.spec.frames_lo, "Minimum frames per utterance")->capture_default_str();
  synth_cmd->add_option("--frames-hi", synth.spec.frames_hi, "Maximum frames per utterance")->capture_default_str();
  synth_cmd->add_option("--noise", synth.spec.noise_frac, "Fraction of vacuum frames")->capture_default_str();
  synth_cmd->add_option("--dim", synth.spec.d, "Feature dimension")->capture_default_str();
  synth_cmd->add_option("--sep", synth.spec.cluster_sep, "Class cluster separation")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed (default: $COGCN_SEED or 0)");
  synth_cmd->add_option("-o,--out", synth.out, "Output directory")->required();
  synth_cmd->add_flag("--force", synth.force, "Write into a non-empty output directory");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Leave-one-speaker-out training and evaluation");
  train_cmd->add_option("--data", train.data, "Dataset directory or manifest.jsonl")->required();
  train_cmd->add_option("--graph", train.graph, "Graph structure")
      ->check(CLI::IsMember({"cosine", "temporal"}))
      ->capture_default_str();
  train_cmd->add_option("--gamma", train.gammas, "Cosine threshold(s) to search (default 0.5 0.55 0.6)");
  train_cmd->add_option("--k", train.ks, "Message-passing depth(s) to search (default 2 3 4)");
  train_cmd->add_option("--hidden", train.hidden, "Hidden units z")->capture_default_str();
  train_cmd->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--batch", train.batch, "Graphs per batch")->capture_default_str();
  train_cmd->add_option("--dropout", train.dropout, "Dropout after readout")->capture_default_str();
  train_cmd->add_flag("--no-pre", train.no_pre, "Remove the pre-processing layer");
  train_cmd->add_flag("--no-skip", train.no_skip, "Remove skip connections");
  train_cmd->add_flag("--no-self-agg", train.no_self, "Aggregate over neighbors only");
  train_cmd->add_option("--precision", train.precision, "Numeric width")
      ->check(CLI::IsMember({"float32", "float64"}))
      ->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "Random seed (default: $COGCN_SEED or 0)");
  train_cmd->add_option("--jobs", train.jobs, "Worker threads")->capture_default_str();
  train_cmd->add_option("--holdout", train.holdout, "Test on this speaker only");
  train_cmd->add_option("-o,--out", train.out, "Output directory")->required();
  train_cmd->add_flag("--json", train.json_out, "Print metrics JSON on stdout");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint.json")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory or manifest.jsonl")->required();
  eval_cmd->add_option("--speaker", eval.speaker, "Restrict to one speaker");
  eval_cmd->add_option("-o,--out", eval.out, "Write metrics JSON here");
  eval_cmd->add_flag("--json", eval.json_out, "Print metrics JSON on stdout");

  GraphArgs graph;
  auto* graph_cmd = app.add_subcommand("graph", "Export one utterance's graph (DOT, JSON, node features)");
  graph_cmd->add_option("--data", graph.data, "Dataset directory or manifest.jsonl")->required();
  graph_cmd->add_option("--utt", graph.utt, "Utterance id")->required();
  graph_cmd->add_option("--gamma", graph.gamma, "Cosine threshold")->capture_default_str();
  graph_cmd->add_flag("--temporal", graph.temporal, "Build the temporal chain instead");
  graph_cmd->add_flag("--standardize", graph.standardize, "Z-score features over the whole dataset first");
  graph_cmd->add_option("-o,--out", graph.out, "Output directory")->capture_default_str();

  auto* diag_cmd = app.add_subcommand("diag", "Diagnostics");
  diag_cmd->require_subcommand(1);
  ParamsArgs params;
  auto* params_cmd = diag_cmd->add_subcommand("params", "Exact parameter count");
  params_cmd->add_option("--d", params.d)->capture_default_str();
  params_cmd->add_option("--z", params.z)->capture_default_str();
  params_cmd->add_option("--k", params.k)->capture_default_str();
  params_cmd->add_option("--c", params.c)->capture_default_str();
  params_cmd->add_flag("--no-pre", params.no_pre);
  params_cmd->add_flag("--no-skip", params.no_skip);
  GradcheckArgs gradcheck;
  auto* gradcheck_cmd = diag_cmd->add_subcommand("gradcheck", "Finite-difference gradient check");
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "Random seed (default: $COGCN_SEED or 0)");
  gradcheck_cmd->add_option("--trials", gradcheck.trials)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  RunManifest manifest(argc, argv);
  try {
    if (*synth_cmd) return run_synth(synth, manifest);
    if (*train_cmd) return run_train(train, manifest);
    if (*eval_cmd) return run_eval(eval, manifest);
    if (*graph_cmd) return run_graph(graph, manifest);
    if (*params_cmd) return run_params(params);
    if (*gradcheck_cmd) return run_gradcheck(gradcheck);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
