#include "cogcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cogcn/training.hpp"

namespace cogcn {

namespace {

/// ReLU on/off pattern of every unit; a finite difference is only meaningful
/// when both perturbed evaluations share it.
std::vector<bool> activation_pattern(const ForwardCache<double>& cache) {
  std::vector<bool> pattern;
  auto append = [&](const Mat<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) pattern.push_back(m.data()[i] > 0.0);
  };
  append(cache.pre_act);
  for (const auto& m : cache.mp_act) append(m);
  return pattern;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradcheckInstance check_gradients(const ModelParams<double>& params, const ModelConfig& config,
                                  const PreparedGraph<double>& graph, int label, const Vec<double>& mask,
                                  double step) {
  GradcheckInstance result;
  result.config = config;
  result.n = graph.n();
  result.label = label;

  const auto fwd = forward<double>(params, config, graph, Mode::Train, nullptr, &mask);
  const ModelParams<double> analytic = backward<double>(params, config, graph, fwd, label);
  const auto base_pattern = activation_pattern(fwd.cache);

  std::vector<const double*> analytic_tensors;
  analytic.for_each([&](std::string_view, const double* data, Eigen::Index) { analytic_tensors.push_back(data); });

  ModelParams<double> probe = params;
  std::size_t tensor = 0;
  probe.for_each([&](std::string_view, double* data, Eigen::Index size) {
    for (Eigen::Index i = 0; i < size; ++i) {
      const double original = data[i];
      data[i] = original + step;
      const auto plus = forward<double>(probe, config, graph, Mode::Train, nullptr, &mask);
      data[i] = original - step;
      const auto minus = forward<double>(probe, config, graph, Mode::Train, nullptr, &mask);
      data[i] = original;

      if (activation_pattern(plus.cache) != base_pattern || activation_pattern(minus.cache) != base_pattern) {
        ++result.skipped;
        continue;
      }
      const double numeric = (cross_entropy_from_logits<double>(plus.logits, label) -
                              cross_entropy_from_logits<double>(minus.logits, label)) /
                             (2.0 * step);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic_tensors[tensor][i], numeric));
      ++result.checked;
    }
    ++tensor;
  });
  return result;
}

GradcheckReport run_gradcheck(std::uint64_t seed, int trials, double step) {
  GradcheckReport report;
  Rng rng(derive_seed(seed, "gradcheck"));
  for (int t = 0; t < trials; ++t) {
    ModelConfig cfg;
    const int n = 1 + static_cast<int>(rng.below(6));
    cfg.d = 1 + static_cast<int>(rng.below(5));
    cfg.z = 1 + static_cast<int>(rng.below(8));
    cfg.K = 1 + static_cast<int>(rng.below(3));
    cfg.C = 2 + static_cast<int>(rng.below(3));
    cfg.use_pre = rng.below(2) == 0;
    cfg.use_skip = rng.below(2) == 0;
    cfg.self_in_aggregation = rng.below(4) != 0;
    cfg.dropout_p = rng.below(2) == 0 ? 0.0 : 0.3;
    // Alternate graph kinds so both are always covered.
    const GraphKind kind = (t % 2 == 0) ? GraphKind::Cosine : GraphKind::Temporal;
    const double gamma = rng.uniform(-0.5, 0.8);

    FeatureMatrix x(n, cfg.d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const auto graph = prepare_graph<double>(build_graph(x, kind, gamma), cfg.self_in_aggregation);

    // Random weights and biases so that no bias sits exactly at zero.
    ModelParams<double> params = init_params<double>(cfg, rng.next_u64());
    params.for_each([&](std::string_view, double* data, Eigen::Index size) {
      for (Eigen::Index i = 0; i < size; ++i) data[i] += 0.1 * rng.normal();
    });
    const int label = static_cast<int>(rng.below(cfg.C));
    const Vec<double> mask = sample_dropout_mask<double>(cfg.z, cfg.dropout_p, rng);

    GradcheckInstance inst = check_gradients(params, cfg, graph, label, mask, step);
    inst.graph_kind = kind;
    inst.gamma = gamma;
    report.max_rel_error = std::max(report.max_rel_error, inst.max_rel_error);
    report.checked += inst.checked;
    report.skipped += inst.skipped;
    report.instances.push_back(inst);
  }
  return report;
}

}  // namespace cogcn
