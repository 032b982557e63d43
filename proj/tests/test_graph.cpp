#include <doctest.h>

#include <cmath>

#include "cogcn/error.hpp"
#include "cogcn/graph.hpp"
#include "cogcn/rng.hpp"

using namespace cogcn;

namespace {

FeatureMatrix rows(std::initializer_list<std::initializer_list<double>> values) {
  const auto n = static_cast<Eigen::Index>(values.size());
  const auto d = static_cast<Eigen::Index>(values.begin()->size());
  FeatureMatrix m(n, d);
  Eigen::Index i = 0;
  for (const auto& r : values) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

FeatureMatrix random_features(Rng& rng, int n, int d) {
  FeatureMatrix x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

bool edge_subset(const Graph& a, const Graph& b) {
  for (int i = 0; i < a.n(); ++i) {
    for (int j = 0; j < a.n(); ++j) {
      if (a.adjacent(i, j) && !b.adjacent(i, j)) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("cosine similarity hand-computed pairs") {
  CHECK(cosine_similarity_matrix(rows({{1, 0}, {0, 1}}))(0, 1) == 0.0);
  CHECK(cosine_similarity_matrix(rows({{1, 1}, {2, 2}}))(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  // (1*2 + 2*1) / (sqrt5 * sqrt5) = 4/5
  CHECK(cosine_similarity_matrix(rows({{1, 2}, {2, 1}}))(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("cosine similarity zero rows and diagonal") {
  const auto s = cosine_similarity_matrix(rows({{0, 0}, {3, 4}}));
  CHECK(s(0, 0) == 0.0);
  CHECK(s(0, 1) == 0.0);
  CHECK(s(1, 1) == 1.0);
  FeatureMatrix bad = rows({{1, 0}});
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(cosine_similarity_matrix(bad), Error);
}

TEST_CASE("cosine graph thresholds from enumerated pairs") {
  const auto x = rows({{1, 0}, {0, 1}, {1, 1}});
  // s_13 = s_23 = 1/sqrt2 ~ 0.7071, s_12 = 0
  const Graph g = build_cosine_graph(x, 0.5);
  CHECK(g.edges() == std::vector<std::pair<int, int>>{{0, 2}, {1, 2}});
  CHECK(g.degree_hat() == std::vector<double>{2, 2, 3});

  const Graph sparse = build_cosine_graph(x, 0.8);
  CHECK(sparse.edge_count() == 0);
  CHECK(sparse.degree_hat() == std::vector<double>{1, 1, 1});

  const Graph single = build_cosine_graph(rows({{3, 1}}), 0.5);
  CHECK(single.edge_count() == 0);
  CHECK(single.degree_hat() == std::vector<double>{1});
}

TEST_CASE("cosine graph gamma range") {
  const auto x = rows({{1, 0}, {0, 1}});
  CHECK_THROWS_AS(build_cosine_graph(x, -1.0), Error);
  CHECK_THROWS_AS(build_cosine_graph(x, 1.01), Error);
  CHECK_NOTHROW(build_cosine_graph(x, 1.0));
  CHECK_NOTHROW(build_cosine_graph(x, -0.999));
}

TEST_CASE("temporal graph is a chain") {
  const Graph g4 = build_temporal_graph(FeatureMatrix::Ones(4, 2));
  CHECK(g4.edges() == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}});
  CHECK(g4.degree_hat() == std::vector<double>{2, 3, 3, 2});
  const Graph g1 = build_temporal_graph(FeatureMatrix::Ones(1, 2));
  CHECK(g1.edge_count() == 0);
  CHECK(g1.degree_hat() == std::vector<double>{1});
  const Graph g2 = build_temporal_graph(FeatureMatrix::Ones(2, 2));
  CHECK(g2.edge_count() == 1);
  CHECK(g2.degree_hat() == std::vector<double>{2, 2});
}

TEST_CASE("normalization coefficients") {
  SUBCASE("single node") {
    const auto c = norm_coefficients(build_temporal_graph(FeatureMatrix::Ones(1, 1)));
    CHECK(c.coeff(0, 0) == 1.0);
  }
  SUBCASE("two connected nodes") {
    const auto c = norm_coefficients(build_temporal_graph(FeatureMatrix::Ones(2, 1)));
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) CHECK(c.coeff(i, j) == 0.5);
    }
  }
  SUBCASE("chain of three") {
    const auto c = norm_coefficients(build_temporal_graph(FeatureMatrix::Ones(3, 1)));
    CHECK(c.coeff(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(c.coeff(1, 0) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-15));
    CHECK(c.coeff(0, 2) == 0.0);
    CHECK(c.nonZeros() == 7);
  }
  SUBCASE("self excluded from aggregation keeps degree_hat") {
    const auto c = norm_coefficients(build_temporal_graph(FeatureMatrix::Ones(3, 1)), false);
    CHECK(c.coeff(1, 1) == 0.0);
    CHECK(c.coeff(1, 0) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-15));
    CHECK(c.nonZeros() == 4);
  }
}

TEST_CASE("DOT export") {
  const std::string chain = format_dot(build_temporal_graph(FeatureMatrix::Ones(3, 1)));
  CHECK(chain.find("0 -- 1;") != std::string::npos);
  CHECK(chain.find("1 -- 2;") != std::string::npos);
  CHECK(chain.find("0 -- 2;") == std::string::npos);
  CHECK(chain == format_dot(build_temporal_graph(FeatureMatrix::Ones(3, 1))));

  const std::string empty = format_dot(build_cosine_graph(rows({{1, 0}, {0, 1}}), 0.5));
  CHECK(empty.find("--") == std::string::npos);
  CHECK(empty.find("  0;") != std::string::npos);
  CHECK(empty.find("  1;") != std::string::npos);

  CHECK(format_graph_json(build_temporal_graph(FeatureMatrix::Ones(3, 1))) ==
        "{\"degree_hat\":[2.0,3.0,2.0],\"edges\":[[0,1],[1,2]],\"n\":3}\n");
}

TEST_CASE("graph laws over random inputs") {
  Rng rng(1234);
  int violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(12));
    const int d = 1 + static_cast<int>(rng.below(6));
    FeatureMatrix x = random_features(rng, n, d);
    double g1 = rng.uniform(-0.99, 1.0);
    double g2 = rng.uniform(-0.99, 1.0);
    if (g1 > g2) std::swap(g1, g2);

    const Graph a = build_cosine_graph(x, g1);
    const Graph b = build_cosine_graph(x, g2);
    // threshold monotonicity
    violations += !edge_subset(b, a);

    // positive row scaling leaves the edge set unchanged
    FeatureMatrix scaled = x;
    const int row = static_cast<int>(rng.below(n));
    scaled.row(row) *= std::exp(rng.uniform(-5, 5));
    violations += build_cosine_graph(scaled, g1).edges() != a.edges();

    for (const Graph* g : {&a, &b}) {
      for (int i = 0; i < n; ++i) {
        int rowsum = 0;
        violations += g->adjacent(i, i);
        for (int j = 0; j < n; ++j) {
          violations += g->adjacent(i, j) != g->adjacent(j, i);
          rowsum += g->adjacent(i, j);
        }
        violations += g->degree_hat()[i] - 1.0 != rowsum;
      }
    }

    const auto s = cosine_similarity_matrix(x);
    const Eigen::VectorXd norms = x.rowwise().norm();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        violations += s(i, j) != s(j, i);
        violations += s(i, j) < -1.0 || s(i, j) > 1.0;
        if (i != j) {
          const double raw = x.row(i).dot(x.row(j)) / (norms[i] * norms[j]);
          violations += std::abs(raw - s(i, j)) > 1e-12;
        }
      }
    }
  }
  CHECK(violations == 0);
}
