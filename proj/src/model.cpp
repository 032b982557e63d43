#include "cogcn/model.hpp"

#include <cmath>

#include "cogcn/error.hpp"

namespace cogcn {

const char* to_string(Precision p) { return p == Precision::Float32 ? "float32" : "float64"; }

Precision parse_precision(const std::string& name) {
  if (name == "float32" || name == "f32") return Precision::Float32;
  if (name == "float64" || name == "f64") return Precision::Float64;
  throw_usage("unknown precision '" + name + "' (expected float32 or float64)");
}

void ModelConfig::validate() const {
  if (d < 1) throw_usage("model: d must be >= 1");
  if (z < 1) throw_usage("model: z must be >= 1");
  if (K < 1) throw_usage("model: K must be >= 1");
  if (C < 2) throw_usage("model: C must be >= 2");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw_usage("model: dropout_p must be in [0, 1)");
}

std::uint64_t param_count(const ModelConfig& config) {
  config.validate();
  const std::uint64_t d = config.d, z = config.z, C = config.C, K = config.K;
  std::uint64_t count = 0;
  if (config.use_pre) count += z * d + z;
  count += static_cast<std::uint64_t>(config.mp_input_width()) * z;
  count += (K - 1) * z * z;
  count += C * z + C;
  return count;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& config) {
  ModelParams p;
  if (config.use_pre) {
    p.W_p = Mat<T>::Zero(config.z, config.d);
    p.b_p = Vec<T>::Zero(config.z);
  }
  for (int k = 0; k < config.K; ++k) {
    p.W_e.push_back(Mat<T>::Zero(config.z, k == 0 ? config.mp_input_width() : config.z));
  }
  p.W_o = Mat<T>::Zero(config.C, config.z);
  p.b_o = Vec<T>::Zero(config.C);
  return p;
}

template <typename T>
std::size_t ModelParams<T>::total_size() const {
  std::size_t total = 0;
  for_each([&](std::string_view, const T*, Eigen::Index size) { total += static_cast<std::size_t>(size); });
  return total;
}

template <typename T>
PreparedGraph<T> prepare_graph(const Graph& g, bool self_in_aggregation, int label) {
  PreparedGraph<T> out;
  out.X = g.features().cast<T>();
  out.coeffs = norm_coefficients(g, self_in_aggregation).cast<T>();
  out.label = label;
  return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams<T> p = ModelParams<T>::zeros(config);
  Rng rng(derive_seed(seed, "init"));
  auto glorot = [&](Mat<T>& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
  };
  if (config.use_pre) glorot(p.W_p);
  for (auto& w : p.W_e) glorot(w);
  glorot(p.W_o);
  return p;
}

template <typename T>
Mat<T> pre_layer(const ModelParams<T>& params, const Mat<T>& X) {
  if (params.W_p.size() == 0) throw_usage("pre_layer: model has no pre-processing layer");
  if (X.cols() != params.W_p.cols()) throw_usage("pre_layer: input width does not match W_p");
  Mat<T> out = X * params.W_p.transpose();
  out.rowwise() += params.b_p.transpose();
  return out.cwiseMax(T(0));
}

template <typename T>
Mat<T> mp_layer(const ModelParams<T>& params, int k, const Mat<T>& H, const SpMat<T>& coeffs) {
  if (k < 0 || k >= static_cast<int>(params.W_e.size())) throw_usage("mp_layer: layer index out of range");
  const Mat<T>& W = params.W_e[k];
  if (H.cols() != W.cols()) throw_usage("mp_layer: input width does not match W_e");
  if (coeffs.rows() != H.rows() || coeffs.cols() != H.rows()) throw_usage("mp_layer: coefficient shape mismatch");
  Mat<T> agg = coeffs * H;
  Mat<T> out = agg * W.transpose();
  return out.cwiseMax(T(0));
}

template <typename T>
Mat<T> apply_skip(const Mat<T>& h_prev, const Mat<T>& h_new) {
  if (h_prev.rows() != h_new.rows() || h_prev.cols() != h_new.cols()) throw_usage("apply_skip: shape mismatch");
  return h_prev + h_new;
}

template <typename T>
Vec<T> readout_mean(const Mat<T>& H) {
  if (H.rows() < 1) throw_usage("readout_mean: graph has no nodes");
  return H.colwise().mean().transpose();
}

template <typename T>
Vec<T> softmax(const Vec<T>& logits) {
  Vec<T> e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

template <typename T>
Vec<T> classify_logits(const ModelParams<T>& params, const Vec<T>& h_G, const Vec<T>* mask) {
  if (h_G.size() != params.W_o.cols()) throw_usage("classify: readout width does not match W_o");
  if (mask) return params.W_o * h_G.cwiseProduct(*mask) + params.b_o;
  return params.W_o * h_G + params.b_o;
}

template <typename T>
Vec<T> sample_dropout_mask(int width, double p, Rng& rng) {
  Vec<T> mask = Vec<T>::Ones(width);
  if (p <= 0.0) return mask;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (int i = 0; i < width; ++i) mask[i] = rng.uniform() < p ? T(0) : keep_scale;
  return mask;
}

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const ModelConfig& config, const PreparedGraph<T>& graph,
                         Mode mode, Rng* rng, const Vec<T>* fixed_mask) {
  if (graph.X.cols() != config.d) {
    throw_usage("forward: graph feature width " + std::to_string(graph.X.cols()) + " does not match model d=" +
                std::to_string(config.d));
  }
  if (static_cast<int>(params.W_e.size()) != config.K) throw_usage("forward: parameter/config layer count mismatch");

  ForwardResult<T> result;
  ForwardCache<T>& cache = result.cache;
  cache.H.reserve(config.K + 1);
  if (config.use_pre) {
    cache.pre_act = graph.X * params.W_p.transpose();
    cache.pre_act.rowwise() += params.b_p.transpose();
    cache.H.push_back(cache.pre_act.cwiseMax(T(0)));
  } else {
    cache.H.push_back(graph.X);
  }

  for (int k = 0; k < config.K; ++k) {
    const Mat<T>& h = cache.H.back();
    cache.agg.push_back(graph.coeffs * h);
    cache.mp_act.push_back(cache.agg.back() * params.W_e[k].transpose());
    Mat<T> next = cache.mp_act.back().cwiseMax(T(0));
    if (config.skip_at(k)) next += h;
    cache.H.push_back(std::move(next));
  }

  cache.h_G = readout_mean<T>(cache.H.back());
  if (mode == Mode::Train) {
    if (fixed_mask) {
      if (fixed_mask->size() != cache.h_G.size()) throw_usage("forward: dropout mask width mismatch");
      cache.mask = *fixed_mask;
    } else {
      if (!rng) throw_usage("forward: train mode needs a random source for dropout");
      cache.mask = sample_dropout_mask<T>(config.z, config.dropout_p, *rng);
    }
    cache.h_dropped = cache.h_G.cwiseProduct(cache.mask);
  } else {
    cache.h_dropped = cache.h_G;
  }
  result.logits = params.W_o * cache.h_dropped + params.b_o;
  result.probs = softmax<T>(result.logits);
  return result;
}

#define COGCN_INSTANTIATE(T)                                                                                    \
  template struct ModelParams<T>;                                                                              \
  template PreparedGraph<T> prepare_graph<T>(const Graph&, bool, int);                                         \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                   \
  template Mat<T> pre_layer<T>(const ModelParams<T>&, const Mat<T>&);                                          \
  template Mat<T> mp_layer<T>(const ModelParams<T>&, int, const Mat<T>&, const SpMat<T>&);                     \
  template Mat<T> apply_skip<T>(const Mat<T>&, const Mat<T>&);                                                 \
  template Vec<T> readout_mean<T>(const Mat<T>&);                                                              \
  template Vec<T> softmax<T>(const Vec<T>&);                                                                   \
  template Vec<T> classify_logits<T>(const ModelParams<T>&, const Vec<T>&, const Vec<T>*);                     \
  template Vec<T> sample_dropout_mask<T>(int, double, Rng&);                                                   \
  template ForwardResult<T> forward<T>(const ModelParams<T>&, const ModelConfig&, const PreparedGraph<T>&, Mode, \
                                       Rng*, const Vec<T>*);

COGCN_INSTANTIATE(float)
COGCN_INSTANTIATE(double)

#undef COGCN_INSTANTIATE

}  // namespace cogcn
