#include "cogcn/graph.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "cogcn/error.hpp"
#include "cogcn/io.hpp"

namespace cogcn {

const char* to_string(GraphKind kind) { return kind == GraphKind::Cosine ? "cosine" : "temporal"; }

GraphKind parse_graph_kind(const std::string& name) {
  if (name == "cosine") return GraphKind::Cosine;
  if (name == "temporal") return GraphKind::Temporal;
  throw_usage("unknown graph kind '" + name + "' (expected cosine or temporal)");
}

Graph::Graph(FeatureMatrix features, std::vector<std::uint8_t> adjacency)
    : features_(std::move(features)), adjacency_(std::move(adjacency)) {
  const int count = n();
  if (count < 1) throw_data("graph needs at least one node");
  if (adjacency_.size() != static_cast<std::size_t>(count) * count) throw_usage("adjacency size mismatch");
  degree_hat_.assign(count, 1.0);
  for (int i = 0; i < count; ++i) {
    if (adjacent(i, i)) throw_usage("adjacency must have a zero diagonal");
    for (int j = 0; j < count; ++j) {
      if (adjacent(i, j) != adjacent(j, i)) throw_usage("adjacency must be symmetric");
      if (adjacent(i, j)) degree_hat_[i] += 1.0;
    }
  }
}

std::vector<std::pair<int, int>> Graph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n(); ++i) {
    for (int j = i + 1; j < n(); ++j) {
      if (adjacent(i, j)) out.emplace_back(i, j);
    }
  }
  return out;
}

std::size_t Graph::edge_count() const {
  std::size_t twice = std::count_if(adjacency_.begin(), adjacency_.end(), [](std::uint8_t a) { return a != 0; });
  return twice / 2;
}

SimilarityMatrix cosine_similarity_matrix(const FeatureMatrix& x) {
  if (x.rows() < 1) throw_data("cosine similarity needs at least one row");
  if (!x.allFinite()) throw_data("non-finite feature value in graph input");
  const Eigen::Index n = x.rows();
  const Eigen::VectorXd norms = x.rowwise().norm();
  SimilarityMatrix s = SimilarityMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s(i, i) = norms[i] > 0.0 ? 1.0 : 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = 0.0;
      if (norms[i] > 0.0 && norms[j] > 0.0) {
        v = x.row(i).dot(x.row(j)) / (norms[i] * norms[j]);
        v = std::clamp(v, -1.0, 1.0);
      }
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

Graph build_cosine_graph(const FeatureMatrix& x, double gamma) {
  if (!(gamma > -1.0 && gamma <= 1.0)) {
    throw_usage("gamma must lie in (-1, 1], got " + std::to_string(gamma));
  }
  const SimilarityMatrix s = cosine_similarity_matrix(x);
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::uint8_t> adj(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (s(i, j) >= gamma) {
        adj[i * n + j] = 1;
        adj[j * n + i] = 1;
      }
    }
  }
  return Graph(x, std::move(adj));
}

Graph build_temporal_graph(const FeatureMatrix& x) {
  if (x.rows() < 1) throw_data("temporal graph needs at least one frame");
  if (!x.allFinite()) throw_data("non-finite feature value in graph input");
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::uint8_t> adj(n * n, 0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    adj[i * n + i + 1] = 1;
    adj[(i + 1) * n + i] = 1;
  }
  return Graph(x, std::move(adj));
}

Graph build_graph(const FeatureMatrix& x, GraphKind kind, double gamma) {
  return kind == GraphKind::Cosine ? build_cosine_graph(x, gamma) : build_temporal_graph(x);
}

Eigen::SparseMatrix<double, Eigen::RowMajor> norm_coefficients(const Graph& g, bool self_in_aggregation) {
  const int n = g.n();
  const auto& deg = g.degree_hat();
  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const bool take = (i == j) ? self_in_aggregation : g.adjacent(i, j);
      if (take) triplets.emplace_back(i, j, 1.0 / std::sqrt(deg[i] * deg[j]));
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> c(n, n);
  c.setFromTriplets(triplets.begin(), triplets.end());
  return c;
}

std::string format_dot(const Graph& g) {
  std::string out = "graph G {\n";
  for (int i = 0; i < g.n(); ++i) out += "  " + std::to_string(i) + ";\n";
  for (auto [i, j] : g.edges()) out += "  " + std::to_string(i) + " -- " + std::to_string(j) + ";\n";
  out += "}\n";
  return out;
}

std::string format_graph_json(const Graph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (auto [i, j] : g.edges()) edges.push_back({i, j});
  nlohmann::json obj = {{"n", g.n()}, {"edges", edges}, {"degree_hat", g.degree_hat()}};
  return obj.dump() + "\n";
}

void export_dot(const Graph& g, const std::filesystem::path& path) { write_file_atomic(path, format_dot(g)); }

}  // namespace cogcn
