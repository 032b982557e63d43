#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cogcn/graph.hpp"
#include "cogcn/model.hpp"

namespace cogcn {

/// Relative error with an absolute floor so that gradients near zero are
/// compared on an absolute scale: |a - b| / max(|a|, |b|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct GradcheckInstance {
  ModelConfig config;
  GraphKind graph_kind = GraphKind::Cosine;
  double gamma = 0.0;
  int n = 0;
  int label = 0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // entries whose +/- step crosses a ReLU kink
};

struct GradcheckReport {
  std::vector<GradcheckInstance> instances;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Compares backward() against central finite differences of the loss for one
/// (params, graph, label) triple, holding the dropout mask fixed.
GradcheckInstance check_gradients(const ModelParams<double>& params, const ModelConfig& config,
                                  const PreparedGraph<double>& graph, int label, const Vec<double>& mask,
                                  double step = 1e-5);

/// Random instances: n <= 6, z <= 8, K in {1,2,3}, both graph kinds, with
/// pre-layer, skip, and self-aggregation toggled at random.
GradcheckReport run_gradcheck(std::uint64_t seed, int trials = 20, double step = 1e-5);

}  // namespace cogcn
