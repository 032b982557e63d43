#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "cogcn/graph.hpp"
#include "cogcn/rng.hpp"

namespace cogcn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using SpMat = Eigen::SparseMatrix<T, Eigen::RowMajor>;

enum class Precision { Float32, Float64 };
const char* to_string(Precision p);
Precision parse_precision(const std::string& name);

struct ModelConfig {
  int d = 88;
  int z = 128;
  int K = 2;
  int C = 4;
  bool use_pre = true;
  bool use_skip = true;
  double dropout_p = 0.1;
  bool self_in_aggregation = true;

  void validate() const;

  /// Input width of the first message-passing layer.
  int mp_input_width() const { return use_pre ? z : d; }

  /// Skip connections need matching shapes, so a d->z first layer has none.
  bool skip_at(int k) const { return use_skip && (k > 0 || use_pre); }

  bool operator==(const ModelConfig&) const = default;
};

/// Learnable tensors. W_p/b_p are empty when the pre-layer is disabled.
template <typename T>
struct ModelParams {
  Mat<T> W_p;             // z x d
  Vec<T> b_p;             // z
  std::vector<Mat<T>> W_e;  // K entries, z x z (first is z x d without pre-layer)
  Mat<T> W_o;             // C x z
  Vec<T> b_o;             // C

  static ModelParams zeros(const ModelConfig& config);

  /// Visits every tensor in a fixed order: W_p, b_p, W_e0.., W_o, b_o.
  template <typename F>
  void for_each(F&& f) {
    if (W_p.size()) f(std::string_view("W_p"), W_p.data(), W_p.size());
    if (b_p.size()) f(std::string_view("b_p"), b_p.data(), b_p.size());
    for (std::size_t k = 0; k < W_e.size(); ++k) {
      const std::string name = "W_e" + std::to_string(k);
      f(std::string_view(name), W_e[k].data(), W_e[k].size());
    }
    f(std::string_view("W_o"), W_o.data(), W_o.size());
    f(std::string_view("b_o"), b_o.data(), b_o.size());
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each([&](std::string_view name, T* data, Eigen::Index size) {
      f(name, static_cast<const T*>(data), size);
    });
  }

  std::size_t total_size() const;

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.W_p = W_p.template cast<U>();
    out.b_p = b_p.template cast<U>();
    for (const auto& w : W_e) out.W_e.push_back(w.template cast<U>());
    out.W_o = W_o.template cast<U>();
    out.b_o = b_o.template cast<U>();
    return out;
  }
};

/// A graph converted to the model's scalar type with its aggregation
/// coefficients precomputed.
template <typename T>
struct PreparedGraph {
  Mat<T> X;
  SpMat<T> coeffs;
  int label = -1;

  int n() const { return static_cast<int>(X.rows()); }
};

template <typename T>
PreparedGraph<T> prepare_graph(const Graph& g, bool self_in_aggregation, int label = -1);

enum class Mode { Train, Eval };

template <typename T>
struct ForwardCache {
  Mat<T> pre_act;              // X W_p^T + b_p (empty without pre-layer)
  std::vector<Mat<T>> H;       // H[0] .. H[K]; H[0] is the pre-layer output or X
  std::vector<Mat<T>> agg;     // C H[k], input to W_e[k]
  std::vector<Mat<T>> mp_act;  // agg[k] W_e[k]^T before ReLU
  Vec<T> h_G;
  Vec<T> mask;                 // inverted-dropout scale per unit; empty in eval mode
  Vec<T> h_dropped;
};

template <typename T>
struct ForwardResult {
  Vec<T> logits;
  Vec<T> probs;
  ForwardCache<T> cache;
};

std::uint64_t param_count(const ModelConfig& config);

/// Glorot-uniform weights, zero biases.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename T>
Mat<T> pre_layer(const ModelParams<T>& params, const Mat<T>& X);

template <typename T>
Mat<T> mp_layer(const ModelParams<T>& params, int k, const Mat<T>& H, const SpMat<T>& coeffs);

template <typename T>
Mat<T> apply_skip(const Mat<T>& h_prev, const Mat<T>& h_new);

template <typename T>
Vec<T> readout_mean(const Mat<T>& H);

/// Max-subtracted softmax.
template <typename T>
Vec<T> softmax(const Vec<T>& logits);

template <typename T>
Vec<T> classify_logits(const ModelParams<T>& params, const Vec<T>& h_G, const Vec<T>* mask);

template <typename T>
Vec<T> classify(const ModelParams<T>& params, const Vec<T>& h_G, const Vec<T>* mask) {
  return softmax<T>(classify_logits(params, h_G, mask));
}

template <typename T>
Vec<T> sample_dropout_mask(int width, double p, Rng& rng);

/// Full pipeline. In train mode the dropout mask is drawn from rng unless
/// fixed_mask is supplied (finite-difference checks hold it constant).
template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const ModelConfig& config, const PreparedGraph<T>& graph,
                         Mode mode, Rng* rng = nullptr, const Vec<T>* fixed_mask = nullptr);

}  // namespace cogcn
