#include "cogcn/cogcn.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>
#include <vector>

#include "cogcn/error.hpp"
#include "cogcn/features.hpp"
#include "cogcn/gradcheck.hpp"
#include "cogcn/graph.hpp"
#include "cogcn/io.hpp"
#include "cogcn/training.hpp"

struct cogcn_dataset {
  cogcn::Dataset data;
  std::vector<std::string> speakers;  // sorted copy for index access
};

struct cogcn_graph {
  cogcn::Graph graph;
  std::vector<std::pair<int, int>> edges;
};

struct cogcn_model {
  cogcn::TrainedModel model;
};

struct cogcn_metrics {
  std::vector<std::string> class_names;
  std::optional<cogcn::CvResult> cv;
  std::optional<cogcn::Metrics> single;
};

namespace {

thread_local std::string g_last_error;

cogcn_status fail(cogcn_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
cogcn_status guarded(F&& body) {
  try {
    return body();
  } catch (const cogcn::Error& e) {
    switch (e.kind()) {
      case cogcn::ErrorKind::Usage:
        return fail(COGCN_ERR_USAGE, e.what());
      case cogcn::ErrorKind::Data:
        return fail(COGCN_ERR_DATA, e.what());
      case cogcn::ErrorKind::Io:
        return fail(COGCN_ERR_IO, e.what());
      case cogcn::ErrorKind::Verification:
        return fail(COGCN_ERR_VERIFICATION, e.what());
    }
    return fail(COGCN_ERR_INTERNAL, e.what());
  } catch (const std::exception& e) {
    return fail(COGCN_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(COGCN_ERR_INTERNAL, "unknown error");
  }
}

#define COGCN_REQUIRE(cond, msg) \
  do {                           \
    if (!(cond)) return fail(COGCN_ERR_USAGE, msg); \
  } while (0)

cogcn_dataset* wrap(cogcn::Dataset ds) {
  auto* out = new cogcn_dataset{std::move(ds), {}};
  out->speakers.assign(out->data.speakers.begin(), out->data.speakers.end());
  return out;
}

cogcn::TrainConfig to_train_config(const cogcn_train_options& o) {
  cogcn::TrainConfig tc;
  tc.model.z = o.hidden;
  tc.model.use_pre = o.use_pre != 0;
  tc.model.use_skip = o.use_skip != 0;
  tc.model.self_in_aggregation = o.self_in_aggregation != 0;
  tc.model.dropout_p = o.dropout;
  tc.lr = o.lr;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.adam_beta1 = o.adam_beta1;
  tc.adam_beta2 = o.adam_beta2;
  tc.adam_eps = o.adam_eps;
  tc.seed = o.seed;
  tc.graph_kind = o.graph_kind == COGCN_GRAPH_TEMPORAL ? cogcn::GraphKind::Temporal : cogcn::GraphKind::Cosine;
  tc.precision = o.precision == COGCN_FLOAT64 ? cogcn::Precision::Float64 : cogcn::Precision::Float32;
  if (o.gamma_grid_len && !o.gamma_grid) cogcn::throw_usage("gamma_grid is NULL");
  if (o.k_grid_len && !o.k_grid) cogcn::throw_usage("k_grid is NULL");
  tc.gamma_grid.assign(o.gamma_grid, o.gamma_grid + o.gamma_grid_len);
  tc.K_grid.assign(o.k_grid, o.k_grid + o.k_grid_len);
  if (!tc.gamma_grid.empty()) tc.gamma = tc.gamma_grid.front();
  tc.jobs = o.jobs;
  tc.model.validate();
  if (tc.model.z < 1) cogcn::throw_usage("hidden must be >= 1");
  return tc;
}

constexpr double kDefaultGammaGrid[] = {0.5, 0.55, 0.6};
constexpr int kDefaultKGrid[] = {2, 3, 4};

}  // namespace

extern "C" {

const char* cogcn_version(void) { return COGCN_VERSION; }

const char* cogcn_last_error(void) { return g_last_error.c_str(); }

const char* cogcn_status_name(cogcn_status status) {
  switch (status) {
    case COGCN_OK:
      return "ok";
    case COGCN_ERR_USAGE:
      return "usage error";
    case COGCN_ERR_DATA:
      return "data error";
    case COGCN_ERR_VERIFICATION:
      return "verification failure";
    case COGCN_ERR_IO:
      return "i/o error";
    case COGCN_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

void cogcn_string_free(char* s) { std::free(s); }

void cogcn_synth_spec_default(cogcn_synth_spec* spec) {
  if (!spec) return;
  const cogcn::SynthSpec d;
  *spec = cogcn_synth_spec{d.n_classes, d.n_speakers, d.utt_per_speaker, d.frames_lo, d.frames_hi,
                           d.d,         d.noise_frac, d.cluster_sep,     d.seed};
}

cogcn_status cogcn_dataset_synth(const cogcn_synth_spec* spec, cogcn_dataset** out) {
  COGCN_REQUIRE(spec && out, "null argument");
  return guarded([&] {
    cogcn::SynthSpec s;
    s.n_classes = spec->n_classes;
    s.n_speakers = spec->n_speakers;
    s.utt_per_speaker = spec->utt_per_speaker;
    s.frames_lo = spec->frames_lo;
    s.frames_hi = spec->frames_hi;
    s.d = spec->d;
    s.noise_frac = spec->noise_frac;
    s.cluster_sep = spec->cluster_sep;
    s.seed = spec->seed;
    *out = wrap(cogcn::synth_dataset(s));
    return COGCN_OK;
  });
}

cogcn_status cogcn_dataset_load(const char* manifest_path, cogcn_dataset** out) {
  COGCN_REQUIRE(manifest_path && out, "null argument");
  return guarded([&] {
    *out = wrap(cogcn::load_dataset(manifest_path));
    return COGCN_OK;
  });
}

cogcn_status cogcn_dataset_save(const cogcn_dataset* ds, const char* dir) {
  COGCN_REQUIRE(ds && dir, "null argument");
  return guarded([&] {
    cogcn::save_dataset(ds->data, dir);
    return COGCN_OK;
  });
}

void cogcn_dataset_free(cogcn_dataset* ds) { delete ds; }

size_t cogcn_dataset_size(const cogcn_dataset* ds) { return ds ? ds->data.size() : 0; }
int cogcn_dataset_dim(const cogcn_dataset* ds) { return ds ? ds->data.d : 0; }
int cogcn_dataset_num_classes(const cogcn_dataset* ds) { return ds ? ds->data.C : 0; }
size_t cogcn_dataset_num_speakers(const cogcn_dataset* ds) { return ds ? ds->speakers.size() : 0; }

const char* cogcn_dataset_utterance_id(const cogcn_dataset* ds, size_t index) {
  if (!ds || index >= ds->data.size()) return nullptr;
  return ds->data.utterances[index].id.c_str();
}

const char* cogcn_dataset_speaker(const cogcn_dataset* ds, size_t index) {
  if (!ds || index >= ds->speakers.size()) return nullptr;
  return ds->speakers[index].c_str();
}

cogcn_status cogcn_dataset_find(const cogcn_dataset* ds, const char* id, size_t* index) {
  COGCN_REQUIRE(ds && id && index, "null argument");
  auto found = ds->data.find(id);
  if (!found) return fail(COGCN_ERR_DATA, std::string("unknown utterance id '") + id + "'");
  *index = *found;
  return COGCN_OK;
}

cogcn_status cogcn_dataset_standardize(const cogcn_dataset* ds, cogcn_dataset** out) {
  COGCN_REQUIRE(ds && out, "null argument");
  return guarded([&] {
    std::set<std::string> ids;
    for (const auto& u : ds->data.utterances) ids.insert(u.id);
    *out = wrap(cogcn::apply_standardizer(ds->data, cogcn::fit_standardizer(ds->data, ids)));
    return COGCN_OK;
  });
}

cogcn_status cogcn_graph_build(const cogcn_dataset* ds, size_t utterance, cogcn_graph_kind kind, double gamma,
                               cogcn_graph** out) {
  COGCN_REQUIRE(ds && out, "null argument");
  COGCN_REQUIRE(utterance < ds->data.size(), "utterance index out of range");
  return guarded([&] {
    const auto gk = kind == COGCN_GRAPH_TEMPORAL ? cogcn::GraphKind::Temporal : cogcn::GraphKind::Cosine;
    auto g = cogcn::build_graph(ds->data.utterances[utterance].features, gk, gamma);
    auto edges = g.edges();
    *out = new cogcn_graph{std::move(g), std::move(edges)};
    return COGCN_OK;
  });
}

void cogcn_graph_free(cogcn_graph* g) { delete g; }
size_t cogcn_graph_num_nodes(const cogcn_graph* g) { return g ? static_cast<size_t>(g->graph.n()) : 0; }
size_t cogcn_graph_num_edges(const cogcn_graph* g) { return g ? g->edges.size() : 0; }

cogcn_status cogcn_graph_edge(const cogcn_graph* g, size_t e, size_t* i, size_t* j) {
  COGCN_REQUIRE(g && i && j, "null argument");
  COGCN_REQUIRE(e < g->edges.size(), "edge index out of range");
  *i = static_cast<size_t>(g->edges[e].first);
  *j = static_cast<size_t>(g->edges[e].second);
  return COGCN_OK;
}

cogcn_status cogcn_graph_write_dot(const cogcn_graph* g, const char* path) {
  COGCN_REQUIRE(g && path, "null argument");
  return guarded([&] {
    cogcn::export_dot(g->graph, path);
    return COGCN_OK;
  });
}

cogcn_status cogcn_graph_write_json(const cogcn_graph* g, const char* path) {
  COGCN_REQUIRE(g && path, "null argument");
  return guarded([&] {
    cogcn::write_file_atomic(path, cogcn::format_graph_json(g->graph));
    return COGCN_OK;
  });
}

cogcn_status cogcn_graph_write_features(const cogcn_graph* g, const char* path) {
  COGCN_REQUIRE(g && path, "null argument");
  return guarded([&] {
    cogcn::write_file_atomic(path, cogcn::format_feature_csv(g->graph.features()));
    return COGCN_OK;
  });
}

void cogcn_train_options_default(cogcn_train_options* opts) {
  if (!opts) return;
  const cogcn::TrainConfig d;
  opts->hidden = d.model.z;
  opts->use_pre = d.model.use_pre;
  opts->use_skip = d.model.use_skip;
  opts->self_in_aggregation = d.model.self_in_aggregation;
  opts->dropout = d.model.dropout_p;
  opts->lr = d.lr;
  opts->epochs = d.epochs;
  opts->batch_size = d.batch_size;
  opts->adam_beta1 = d.adam_beta1;
  opts->adam_beta2 = d.adam_beta2;
  opts->adam_eps = d.adam_eps;
  opts->seed = d.seed;
  opts->graph_kind = COGCN_GRAPH_COSINE;
  opts->precision = COGCN_FLOAT32;
  opts->gamma_grid = kDefaultGammaGrid;
  opts->gamma_grid_len = std::size(kDefaultGammaGrid);
  opts->k_grid = kDefaultKGrid;
  opts->k_grid_len = std::size(kDefaultKGrid);
  opts->jobs = 1;
}

cogcn_status cogcn_run_loso(const cogcn_dataset* ds, const cogcn_train_options* opts, const char* out_dir,
                            cogcn_metrics** out) {
  COGCN_REQUIRE(ds && opts && out, "null argument");
  return guarded([&] {
    auto result = cogcn::loso_cv(ds->data, to_train_config(*opts));
    if (out_dir) cogcn::write_cv_outputs(result, ds->data.class_names, out_dir);
    *out = new cogcn_metrics{ds->data.class_names, std::move(result), std::nullopt};
    return COGCN_OK;
  });
}

cogcn_status cogcn_run_holdout(const cogcn_dataset* ds, const cogcn_train_options* opts, const char* test_speaker,
                               const char* out_dir, cogcn_metrics** out) {
  COGCN_REQUIRE(ds && opts && test_speaker && out, "null argument");
  return guarded([&] {
    cogcn::CvResult result;
    result.folds.push_back(cogcn::run_fold(ds->data, to_train_config(*opts), test_speaker));
    result.mean_wa = result.folds[0].metrics.wa;
    result.mean_ua = result.folds[0].metrics.ua;
    if (out_dir) cogcn::write_cv_outputs(result, ds->data.class_names, out_dir);
    *out = new cogcn_metrics{ds->data.class_names, std::move(result), std::nullopt};
    return COGCN_OK;
  });
}

void cogcn_metrics_free(cogcn_metrics* m) { delete m; }

double cogcn_metrics_wa(const cogcn_metrics* m) {
  if (!m) return 0.0;
  return m->cv ? m->cv->mean_wa : m->single->wa;
}

double cogcn_metrics_ua(const cogcn_metrics* m) {
  if (!m) return 0.0;
  return m->cv ? m->cv->mean_ua : m->single->ua;
}

cogcn_status cogcn_metrics_json(const cogcn_metrics* m, char** out) {
  COGCN_REQUIRE(m && out, "null argument");
  return guarded([&] {
    const std::string text = m->cv ? cogcn::cv_metrics_to_json(*m->cv, m->class_names)
                                   : cogcn::metrics_to_json(*m->single, m->class_names);
    char* buf = static_cast<char*>(std::malloc(text.size() + 1));
    if (!buf) return fail(COGCN_ERR_INTERNAL, "out of memory");
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out = buf;
    return COGCN_OK;
  });
}

cogcn_status cogcn_model_load(const char* checkpoint_path, cogcn_model** out) {
  COGCN_REQUIRE(checkpoint_path && out, "null argument");
  return guarded([&] {
    *out = new cogcn_model{cogcn::load_checkpoint(checkpoint_path)};
    return COGCN_OK;
  });
}

void cogcn_model_free(cogcn_model* model) { delete model; }

cogcn_status cogcn_evaluate(const cogcn_model* model, const cogcn_dataset* ds, const char* speaker,
                            cogcn_metrics** out) {
  COGCN_REQUIRE(model && ds && out, "null argument");
  return guarded([&] {
    const cogcn::Dataset* data = &ds->data;
    cogcn::Dataset filtered;
    if (speaker) {
      if (!ds->data.speakers.count(speaker)) return fail(COGCN_ERR_USAGE, std::string("unknown speaker '") + speaker + "'");
      filtered = ds->data.for_speakers({speaker});
      data = &filtered;
    }
    auto metrics = cogcn::evaluate_model(model->model, *data);
    *out = new cogcn_metrics{model->model.class_names, std::nullopt, std::move(metrics)};
    return COGCN_OK;
  });
}

cogcn_status cogcn_param_count(int d, int z, int k, int c, int use_pre, int use_skip, uint64_t* out) {
  COGCN_REQUIRE(out, "null argument");
  return guarded([&] {
    cogcn::ModelConfig cfg;
    cfg.d = d;
    cfg.z = z;
    cfg.K = k;
    cfg.C = c;
    cfg.use_pre = use_pre != 0;
    cfg.use_skip = use_skip != 0;
    *out = cogcn::param_count(cfg);
    return COGCN_OK;
  });
}

cogcn_status cogcn_gradcheck(uint64_t seed, int trials, double* max_rel_error, size_t* checked, size_t* skipped) {
  COGCN_REQUIRE(max_rel_error, "null argument");
  COGCN_REQUIRE(trials >= 1, "trials must be >= 1");
  return guarded([&] {
    const auto report = cogcn::run_gradcheck(seed, trials);
    *max_rel_error = report.max_rel_error;
    if (checked) *checked = report.checked;
    if (skipped) *skipped = report.skipped;
    if (!(report.max_rel_error < 1e-4)) {
      return fail(COGCN_ERR_VERIFICATION,
                  "gradient check failed: max relative error " + std::to_string(report.max_rel_error));
    }
    return COGCN_OK;
  });
}

}  // extern "C"
