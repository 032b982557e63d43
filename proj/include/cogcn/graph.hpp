#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "cogcn/features.hpp"

namespace cogcn {

enum class GraphKind { Cosine, Temporal };

const char* to_string(GraphKind kind);
GraphKind parse_graph_kind(const std::string& name);

/// Pairwise cosine similarities, n x n, clamped to [-1, 1].
using SimilarityMatrix = Eigen::MatrixXd;

/// Node features with a symmetric, self-loop-free adjacency.
///
/// Self-loops are implicit: degree_hat counts them and aggregation always
/// covers the node itself, so the stored diagonal stays zero.
class Graph {
 public:
  Graph(FeatureMatrix features, std::vector<std::uint8_t> adjacency);

  int n() const { return static_cast<int>(features_.rows()); }
  int d() const { return static_cast<int>(features_.cols()); }
  const FeatureMatrix& features() const { return features_; }
  bool adjacent(int i, int j) const { return adjacency_[static_cast<std::size_t>(i) * n() + j] != 0; }
  const std::vector<double>& degree_hat() const { return degree_hat_; }

  /// Undirected edges (i < j) in ascending lexicographic order.
  std::vector<std::pair<int, int>> edges() const;
  std::size_t edge_count() const;

 private:
  FeatureMatrix features_;
  std::vector<std::uint8_t> adjacency_;
  std::vector<double> degree_hat_;
};

SimilarityMatrix cosine_similarity_matrix(const FeatureMatrix& x);

/// a_ij = 1 iff i != j and s_ij >= gamma. gamma must lie in (-1, 1].
Graph build_cosine_graph(const FeatureMatrix& x, double gamma);

/// Chain graph: a_ij = 1 iff |i - j| = 1.
Graph build_temporal_graph(const FeatureMatrix& x);

Graph build_graph(const FeatureMatrix& x, GraphKind kind, double gamma);

/// c_ij = 1 / sqrt(d^_i d^_j) on every edge, plus the diagonal when
/// self_in_aggregation is set. Row-major so rows read as "aggregate into i".
Eigen::SparseMatrix<double, Eigen::RowMajor> norm_coefficients(const Graph& g, bool self_in_aggregation = true);

std::string format_dot(const Graph& g);
std::string format_graph_json(const Graph& g);
void export_dot(const Graph& g, const std::filesystem::path& path);

}  // namespace cogcn
