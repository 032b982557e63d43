#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cogcn/features.hpp"
#include "cogcn/graph.hpp"
#include "cogcn/model.hpp"

namespace cogcn {

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-3;
  int epochs = 50;
  int batch_size = 32;
  double gamma = 0.5;
  std::vector<double> gamma_grid{0.5, 0.55, 0.6};
  std::vector<int> K_grid{2, 3, 4};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  GraphKind graph_kind = GraphKind::Cosine;
  Precision precision = Precision::Float32;
  int jobs = 1;  // worker threads for cross-validation tasks

  void validate() const;
};

/// Confusion matrix (rows = true class, cols = predicted) with WA/UA.
struct Metrics {
  std::vector<std::vector<long>> confusion;
  double wa = 0.0;
  double ua = 0.0;

  static Metrics from_predictions(int C, const std::vector<int>& truth, const std::vector<int>& predicted);
  long total() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_wa = 0.0;
  double val_ua = 0.0;
};

template <typename T>
struct AdamState {
  ModelParams<T> m;
  ModelParams<T> v;
  long t = 0;

  static AdamState zeros(const ModelConfig& config) {
    return AdamState{ModelParams<T>::zeros(config), ModelParams<T>::zeros(config), 0};
  }
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// -log(probs[label]).
double cross_entropy(std::span<const double> probs, int label);

/// Same loss evaluated as logsumexp(logits) - logits[label].
template <typename T>
T cross_entropy_from_logits(const Vec<T>& logits, int label);

/// Exact gradient of the cross-entropy loss for one graph, given the forward
/// pass (train or eval mode) that produced `fwd`.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ModelConfig& config, const PreparedGraph<T>& graph,
                        const ForwardResult<T>& fwd, int label);

/// Bias-corrected Adam update; increments state.t first.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, const AdamHyper& hyper);

/// Everything needed to reapply a trained network to raw features.
struct TrainedModel {
  ModelConfig config;
  GraphKind graph_kind = GraphKind::Cosine;
  double gamma = 0.5;
  Precision precision = Precision::Float32;
  std::vector<std::string> class_names;
  StandardizeStats standardizer;
  ModelParams<double> params;  // float32 models hold exactly representable values
};

struct TrainOutcome {
  ModelParams<double> params;  // from the best-validation-UA epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_ua = 0.0;
};

/// Trains on already-standardized data using tc.model, tc.gamma, tc.graph_kind.
TrainOutcome train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& tc);

/// Evaluates already-standardized data.
Metrics evaluate(const ModelParams<double>& params, const ModelConfig& config, const Dataset& dataset, double gamma,
                 GraphKind graph_kind, Precision precision = Precision::Float64);

/// Standardizes raw features with the model's stats, then evaluates.
Metrics evaluate_model(const TrainedModel& model, const Dataset& raw_dataset);

struct FoldResult {
  std::string test_speaker;
  std::string val_speaker;
  Metrics metrics;
  int selected_K = 0;
  std::optional<double> selected_gamma;  // unset for temporal graphs
  TrainedModel model;
  std::vector<EpochRecord> history;
  std::set<std::string> train_ids, val_ids, test_ids;
};

struct CvResult {
  std::vector<FoldResult> folds;
  double mean_wa = 0.0;
  double mean_ua = 0.0;
};

/// Validation speaker paired with a test speaker: the lexicographically next
/// speaker, wrapping around.
std::string validation_speaker_for(const std::set<std::string>& speakers, const std::string& test_speaker);

/// One fold: test on `test_speaker`, select (K, gamma) on the validation speaker.
FoldResult run_fold(const Dataset& dataset, const TrainConfig& tc, const std::string& test_speaker);

/// Leave-one-speaker-out cross-validation over every speaker.
CvResult loso_cv(const Dataset& dataset, const TrainConfig& tc);

}  // namespace cogcn
