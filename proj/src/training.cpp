#include "cogcn/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "cogcn/error.hpp"

namespace cogcn {

namespace {

template <typename T>
void accumulate(ModelParams<T>& dst, const ModelParams<T>& src) {
  if (dst.W_p.size()) dst.W_p += src.W_p;
  if (dst.b_p.size()) dst.b_p += src.b_p;
  for (std::size_t k = 0; k < dst.W_e.size(); ++k) dst.W_e[k] += src.W_e[k];
  dst.W_o += src.W_o;
  dst.b_o += src.b_o;
}

template <typename T>
void scale(ModelParams<T>& p, T s) {
  p.W_p *= s;
  p.b_p *= s;
  for (auto& w : p.W_e) w *= s;
  p.W_o *= s;
  p.b_o *= s;
}

template <typename T>
std::vector<std::pair<T*, Eigen::Index>> tensors(ModelParams<T>& p) {
  std::vector<std::pair<T*, Eigen::Index>> out;
  p.for_each([&](std::string_view, T* data, Eigen::Index size) { out.emplace_back(data, size); });
  return out;
}

template <typename T>
std::vector<PreparedGraph<T>> prepare_all(const Dataset& ds, const TrainConfig& tc) {
  std::vector<PreparedGraph<T>> out;
  out.reserve(ds.size());
  for (const auto& u : ds.utterances) {
    out.push_back(prepare_graph<T>(build_graph(u.features, tc.graph_kind, tc.gamma), tc.model.self_in_aggregation,
                                   u.label));
  }
  return out;
}

template <typename T>
Metrics evaluate_prepared(const ModelParams<T>& params, const ModelConfig& config,
                          const std::vector<PreparedGraph<T>>& graphs) {
  std::vector<int> truth, predicted;
  truth.reserve(graphs.size());
  predicted.reserve(graphs.size());
  for (const auto& g : graphs) {
    const auto fwd = forward<T>(params, config, g, Mode::Eval);
    Eigen::Index best = 0;
    fwd.probs.maxCoeff(&best);
    truth.push_back(g.label);
    predicted.push_back(static_cast<int>(best));
  }
  return Metrics::from_predictions(config.C, truth, predicted);
}

template <typename T>
TrainOutcome train_impl(const Dataset& train_set, const Dataset& val_set, const TrainConfig& tc) {
  const ModelConfig& cfg = tc.model;
  const auto train_graphs = prepare_all<T>(train_set, tc);
  const auto val_graphs = prepare_all<T>(val_set, tc);

  ModelParams<T> params = init_params<T>(cfg, tc.seed);
  AdamState<T> adam = AdamState<T>::zeros(cfg);
  const AdamHyper hyper{tc.lr, tc.adam_beta1, tc.adam_beta2, tc.adam_eps};
  Rng shuffle_rng(derive_seed(tc.seed, "shuffle"));
  Rng dropout_rng(derive_seed(tc.seed, "dropout"));

  std::vector<std::size_t> order(train_graphs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainOutcome outcome;
  outcome.best_val_ua = -1.0;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      ModelParams<T> grads = ModelParams<T>::zeros(cfg);
      for (std::size_t i = start; i < stop; ++i) {
        const auto& g = train_graphs[order[i]];
        const auto fwd = forward<T>(params, cfg, g, Mode::Train, &dropout_rng);
        loss_sum += static_cast<double>(cross_entropy_from_logits<T>(fwd.logits, g.label));
        accumulate(grads, backward<T>(params, cfg, g, fwd, g.label));
      }
      scale(grads, static_cast<T>(1.0 / static_cast<double>(stop - start)));
      adam_step<T>(params, grads, adam, hyper);
    }

    const Metrics val = evaluate_prepared<T>(params, cfg, val_graphs);
    outcome.history.push_back({epoch, loss_sum / static_cast<double>(order.size()), val.wa, val.ua});
    if (val.ua > outcome.best_val_ua) {
      outcome.best_val_ua = val.ua;
      outcome.best_epoch = epoch;
      outcome.params = params.template cast<double>();
    }
  }
  return outcome;
}

/// Runs f(0..count-1) on up to `jobs` threads; rethrows the lowest-index failure.
template <typename F>
void parallel_for(std::size_t count, int jobs, F&& f) {
  std::vector<std::exception_ptr> errors(count);
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            f(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct GridPoint {
  int K;
  double gamma;
};

std::vector<GridPoint> grid_points(const TrainConfig& tc) {
  std::vector<GridPoint> out;
  for (int K : tc.K_grid) {
    if (tc.graph_kind == GraphKind::Temporal) {
      out.push_back({K, tc.gamma});
    } else {
      for (double gamma : tc.gamma_grid) out.push_back({K, gamma});
    }
  }
  return out;
}

struct FoldPlan {
  std::size_t fold_index = 0;
  std::string test_speaker, val_speaker;
  std::set<std::string> train_ids, val_ids, test_ids;
  StandardizeStats stats;
  Dataset train, val, test;  // standardized
};

FoldPlan plan_fold(const Dataset& dataset, const std::string& test_speaker) {
  if (dataset.speakers.size() < 3) {
    throw_data("cross-validation needs at least 3 speakers (test, validation, training); dataset has " +
               std::to_string(dataset.speakers.size()));
  }
  auto it = dataset.speakers.find(test_speaker);
  if (it == dataset.speakers.end()) throw_usage("unknown speaker '" + test_speaker + "'");

  FoldPlan plan;
  plan.fold_index = static_cast<std::size_t>(std::distance(dataset.speakers.begin(), it));
  plan.test_speaker = test_speaker;
  plan.val_speaker = validation_speaker_for(dataset.speakers, test_speaker);
  for (const auto& u : dataset.utterances) {
    if (u.speaker == plan.test_speaker) {
      plan.test_ids.insert(u.id);
    } else if (u.speaker == plan.val_speaker) {
      plan.val_ids.insert(u.id);
    } else {
      plan.train_ids.insert(u.id);
    }
  }
  if (plan.train_ids.empty()) throw_data("fold " + test_speaker + ": no training utterances");
  if (plan.val_ids.empty()) throw_data("validation set required for model selection");
  if (plan.test_ids.empty()) throw_data("fold " + test_speaker + ": no test utterances");

  plan.stats = fit_standardizer(dataset, plan.train_ids);
  const Dataset standardized = apply_standardizer(dataset, plan.stats);
  plan.train = standardized.subset(plan.train_ids);
  plan.val = standardized.subset(plan.val_ids);
  plan.test = standardized.subset(plan.test_ids);
  return plan;
}

TrainConfig fold_config(const TrainConfig& tc, const Dataset& dataset, const FoldPlan& plan, const GridPoint& point) {
  TrainConfig out = tc;
  out.model.d = dataset.d;
  out.model.C = dataset.C;
  out.model.K = point.K;
  out.gamma = point.gamma;
  out.seed = tc.seed ^ static_cast<std::uint64_t>(plan.fold_index);
  return out;
}

FoldResult finish_fold(const Dataset& dataset, const TrainConfig& tc, const FoldPlan& plan,
                       const std::vector<GridPoint>& points, std::vector<TrainOutcome>& outcomes) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < outcomes.size(); ++i) {
    if (outcomes[i].best_val_ua > outcomes[best].best_val_ua) best = i;
  }
  const TrainConfig chosen = fold_config(tc, dataset, plan, points[best]);

  FoldResult fold;
  fold.test_speaker = plan.test_speaker;
  fold.val_speaker = plan.val_speaker;
  fold.selected_K = points[best].K;
  if (tc.graph_kind == GraphKind::Cosine) fold.selected_gamma = points[best].gamma;
  fold.model.config = chosen.model;
  fold.model.graph_kind = tc.graph_kind;
  fold.model.gamma = chosen.gamma;
  fold.model.precision = tc.precision;
  fold.model.class_names = dataset.class_names;
  fold.model.standardizer = plan.stats;
  fold.model.params = std::move(outcomes[best].params);
  fold.history = std::move(outcomes[best].history);
  fold.metrics = evaluate(fold.model.params, chosen.model, plan.test, chosen.gamma, tc.graph_kind, tc.precision);
  fold.train_ids = plan.train_ids;
  fold.val_ids = plan.val_ids;
  fold.test_ids = plan.test_ids;
  return fold;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw_usage("lr must be > 0");
  if (epochs < 1) throw_usage("epochs must be >= 1");
  if (batch_size < 1) throw_usage("batch_size must be >= 1");
  if (gamma_grid.empty()) throw_usage("gamma grid must be non-empty");
  if (K_grid.empty()) throw_usage("K grid must be non-empty");
  for (int K : K_grid) {
    if (K < 1) throw_usage("K grid entries must be >= 1");
  }
  if (graph_kind == GraphKind::Cosine) {
    for (double g : gamma_grid) {
      if (!(g > -1.0 && g <= 1.0)) throw_usage("gamma grid entries must lie in (-1, 1]");
    }
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw_usage("Adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw_usage("Adam epsilon must be > 0");
  if (jobs < 1) throw_usage("jobs must be >= 1");
}

Metrics Metrics::from_predictions(int C, const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw_usage("metrics: prediction count mismatch");
  if (truth.empty()) throw_data("metrics: empty evaluation set");
  Metrics m;
  m.confusion.assign(C, std::vector<long>(C, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= C || predicted[i] < 0 || predicted[i] >= C) {
      throw_usage("metrics: class index out of range");
    }
    ++m.confusion[truth[i]][predicted[i]];
  }
  long correct = 0;
  double recall_sum = 0.0;
  int present = 0;
  for (int c = 0; c < C; ++c) {
    const long row = std::accumulate(m.confusion[c].begin(), m.confusion[c].end(), 0L);
    correct += m.confusion[c][c];
    if (row > 0) {
      recall_sum += static_cast<double>(m.confusion[c][c]) / static_cast<double>(row);
      ++present;
    }
  }
  m.wa = static_cast<double>(correct) / static_cast<double>(truth.size());
  m.ua = recall_sum / present;
  return m;
}

long Metrics::total() const {
  long t = 0;
  for (const auto& row : confusion) t += std::accumulate(row.begin(), row.end(), 0L);
  return t;
}

double cross_entropy(std::span<const double> probs, int label) {
  if (label < 0 || label >= static_cast<int>(probs.size())) throw_usage("cross_entropy: invalid label");
  return -std::log(probs[label]);
}

template <typename T>
T cross_entropy_from_logits(const Vec<T>& logits, int label) {
  if (label < 0 || label >= logits.size()) throw_usage("cross_entropy: invalid label");
  const T peak = logits.maxCoeff();
  const T lse = peak + std::log((logits.array() - peak).exp().sum());
  return lse - logits[label];
}

template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ModelConfig& config, const PreparedGraph<T>& graph,
                        const ForwardResult<T>& fwd, int label) {
  const ForwardCache<T>& cache = fwd.cache;
  if (static_cast<int>(cache.H.size()) != config.K + 1 || static_cast<int>(cache.agg.size()) != config.K) {
    throw_usage("backward: cache does not match model config");
  }
  if (label < 0 || label >= config.C) throw_usage("backward: invalid label");
  const Eigen::Index n = graph.X.rows();
  ModelParams<T> grads = ModelParams<T>::zeros(config);

  Vec<T> d_logits = fwd.probs;
  d_logits[label] -= T(1);
  grads.W_o = d_logits * cache.h_dropped.transpose();
  grads.b_o = d_logits;

  Vec<T> d_hG = params.W_o.transpose() * d_logits;
  if (cache.mask.size()) d_hG = d_hG.cwiseProduct(cache.mask);

  // Mean readout spreads the gradient evenly over nodes.
  Mat<T> d_H = (d_hG / static_cast<T>(n)).transpose().replicate(n, 1);
  for (int k = config.K - 1; k >= 0; --k) {
    const Mat<T> d_act = d_H.cwiseProduct((cache.mp_act[k].array() > T(0)).template cast<T>().matrix());
    grads.W_e[k] = d_act.transpose() * cache.agg[k];
    const Mat<T> d_agg = d_act * params.W_e[k];
    Mat<T> d_prev = graph.coeffs.transpose() * d_agg;
    if (config.skip_at(k)) d_prev += d_H;
    d_H = std::move(d_prev);
  }

  if (config.use_pre) {
    const Mat<T> d_pre = d_H.cwiseProduct((cache.pre_act.array() > T(0)).template cast<T>().matrix());
    grads.W_p = d_pre.transpose() * graph.X;
    grads.b_p = d_pre.colwise().sum().transpose();
  }
  return grads;
}

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, const AdamHyper& hyper) {
  auto p = tensors(params);
  auto g = tensors(const_cast<ModelParams<T>&>(grads));
  auto m = tensors(state.m);
  auto v = tensors(state.v);
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) throw_usage("adam_step: shape mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].second != g[i].second || p[i].second != m[i].second || p[i].second != v[i].second) {
      throw_usage("adam_step: shape mismatch");
    }
  }

  ++state.t;
  const T b1 = static_cast<T>(hyper.beta1);
  const T b2 = static_cast<T>(hyper.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(hyper.beta1, static_cast<double>(state.t)));
  const T c2 = static_cast<T>(1.0 - std::pow(hyper.beta2, static_cast<double>(state.t)));
  const T lr = static_cast<T>(hyper.lr);
  const T eps = static_cast<T>(hyper.eps);
  for (std::size_t i = 0; i < p.size(); ++i) {
    T* pp = p[i].first;
    const T* gg = g[i].first;
    T* mm = m[i].first;
    T* vv = v[i].first;
    for (Eigen::Index j = 0; j < p[i].second; ++j) {
      mm[j] = b1 * mm[j] + (T(1) - b1) * gg[j];
      vv[j] = b2 * vv[j] + (T(1) - b2) * gg[j] * gg[j];
      const T m_hat = mm[j] / c1;
      const T v_hat = vv[j] / c2;
      pp[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

TrainOutcome train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& tc) {
  tc.validate();
  tc.model.validate();
  if (train_set.size() == 0) throw_data("empty training set");
  if (val_set.size() == 0) throw_data("validation set required for model selection");
  if (train_set.d != tc.model.d || val_set.d != tc.model.d) {
    throw_data("feature dimension mismatch between data and model config");
  }
  if (train_set.C != tc.model.C) throw_data("class count mismatch between data and model config");
  return tc.precision == Precision::Float32 ? train_impl<float>(train_set, val_set, tc)
                                            : train_impl<double>(train_set, val_set, tc);
}

Metrics evaluate(const ModelParams<double>& params, const ModelConfig& config, const Dataset& dataset, double gamma,
                 GraphKind graph_kind, Precision precision) {
  if (dataset.size() == 0) throw_data("cannot evaluate an empty dataset");
  if (dataset.d != config.d) throw_data("feature dimension mismatch between data and model");
  TrainConfig tc;
  tc.model = config;
  tc.gamma = gamma;
  tc.graph_kind = graph_kind;
  if (precision == Precision::Float32) {
    return evaluate_prepared<float>(params.cast<float>(), config, prepare_all<float>(dataset, tc));
  }
  return evaluate_prepared<double>(params, config, prepare_all<double>(dataset, tc));
}

Metrics evaluate_model(const TrainedModel& model, const Dataset& raw_dataset) {
  if (raw_dataset.d != model.config.d) {
    throw_data("feature dimension mismatch: data d=" + std::to_string(raw_dataset.d) + ", model d=" +
               std::to_string(model.config.d));
  }
  if (raw_dataset.class_names != model.class_names) throw_data("class_names of data and model differ");
  return evaluate(model.params, model.config, apply_standardizer(raw_dataset, model.standardizer), model.gamma,
                  model.graph_kind, model.precision);
}

std::string validation_speaker_for(const std::set<std::string>& speakers, const std::string& test_speaker) {
  auto it = speakers.find(test_speaker);
  if (it == speakers.end()) throw_usage("unknown speaker '" + test_speaker + "'");
  ++it;
  if (it == speakers.end()) it = speakers.begin();
  return *it;
}

FoldResult run_fold(const Dataset& dataset, const TrainConfig& tc, const std::string& test_speaker) {
  tc.validate();
  const FoldPlan plan = plan_fold(dataset, test_speaker);
  const auto points = grid_points(tc);
  std::vector<TrainOutcome> outcomes(points.size());
  parallel_for(points.size(), tc.jobs, [&](std::size_t i) {
    outcomes[i] = train(plan.train, plan.val, fold_config(tc, dataset, plan, points[i]));
  });
  return finish_fold(dataset, tc, plan, points, outcomes);
}

CvResult loso_cv(const Dataset& dataset, const TrainConfig& tc) {
  tc.validate();
  if (dataset.speakers.size() < 3) {
    throw_data("leave-one-speaker-out needs at least 3 speakers; dataset has " +
               std::to_string(dataset.speakers.size()));
  }
  std::vector<FoldPlan> plans;
  for (const auto& speaker : dataset.speakers) plans.push_back(plan_fold(dataset, speaker));
  const auto points = grid_points(tc);

  // Every (fold, grid point) pair is an independent task.
  std::vector<std::vector<TrainOutcome>> outcomes(plans.size(), std::vector<TrainOutcome>(points.size()));
  parallel_for(plans.size() * points.size(), tc.jobs, [&](std::size_t task) {
    const std::size_t f = task / points.size();
    const std::size_t p = task % points.size();
    outcomes[f][p] = train(plans[f].train, plans[f].val, fold_config(tc, dataset, plans[f], points[p]));
  });

  CvResult result;
  for (std::size_t f = 0; f < plans.size(); ++f) {
    result.folds.push_back(finish_fold(dataset, tc, plans[f], points, outcomes[f]));
    result.mean_wa += result.folds.back().metrics.wa;
    result.mean_ua += result.folds.back().metrics.ua;
  }
  result.mean_wa /= static_cast<double>(result.folds.size());
  result.mean_ua /= static_cast<double>(result.folds.size());
  return result;
}

#define COGCN_INSTANTIATE(T)                                                                                     \
  template T cross_entropy_from_logits<T>(const Vec<T>&, int);                                                  \
  template ModelParams<T> backward<T>(const ModelParams<T>&, const ModelConfig&, const PreparedGraph<T>&,       \
                                      const ForwardResult<T>&, int);                                            \
  template void adam_step<T>(ModelParams<T>&, const ModelParams<T>&, AdamState<T>&, const AdamHyper&);

COGCN_INSTANTIATE(float)
COGCN_INSTANTIATE(double)

#undef COGCN_INSTANTIATE

}  // namespace cogcn
